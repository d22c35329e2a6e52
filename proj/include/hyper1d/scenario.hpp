#pragma once

#include <fstream>
#include <set>

#include <json.hpp>

#include "hyper1d/boundary.hpp"
#include "hyper1d/operators.hpp"
#include "hyper1d/solver.hpp"
#include "hyper1d/system.hpp"

namespace hyper1d {

using json = nlohmann::json;

/// Schema violation with the JSON-pointer path of the offending element.
struct SchemaError : Error {
    explicit SchemaError(const std::string& pointer, const std::string& what)
        : Error("schema violation at " + pointer + ": " + what) {}
};

struct ProbeConfig {
    double x0 = 0.5;
    int family = 0;
    double window = 1.0;
    int k_max = 3;
    int refinements = 2;
};

struct FredholmConfig {
    int S_max = 64;
    int nx = 65;
    double gamma = 0.0;
    std::vector<int> d2_probe;
};

struct CheckConfig {
    CheckGrid grid;
    double eps_sep = 1e-6;
    double tol = 1e-10;
};

struct TraceConfig {
    int family = 0;
    double x = 0.5;
    double t = 1.0;
};

struct Scenario {
    HyperbolicSystem system;
    BoundaryOperator boundary;
    std::optional<InitialData> initial;
    std::vector<std::string> initial_sources;
    double T_end = 1.0;
    SolveConfig solver;
    std::optional<PopulationModel> population;
    int population_steps = 512;
    ProbeConfig probe;
    FredholmConfig fredholm;
    CheckConfig check;
    TraceConfig trace;
    std::string raw;  // canonical source text, hashed into reports
};

namespace detail {

inline void require_keys(const json& obj, const std::string& ptr,
                         const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw SchemaError(ptr, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) throw SchemaError(ptr + "/" + it.key(), "unknown key");
}

inline const json& need(const json& obj, const std::string& ptr, const std::string& key) {
    if (!obj.contains(key)) throw SchemaError(ptr + "/" + key, "missing required key");
    return obj.at(key);
}

/// Coefficient entry: expression string, number, or {expr, breakpoints}.
inline CoefficientField parse_field(const json& v, const std::string& ptr) {
    try {
        if (v.is_number()) return CoefficientField(v.get<double>());
        if (v.is_string()) return CoefficientField(v.get<std::string>());
        if (v.is_object()) {
            require_keys(v, ptr, {"expr", "breakpoints"});
            std::vector<double> bp;
            if (v.contains("breakpoints")) bp = v.at("breakpoints").get<std::vector<double>>();
            return CoefficientField(need(v, ptr, "expr").get<std::string>(), std::move(bp));
        }
    } catch (const SchemaError&) {
        throw;
    } catch (const std::exception& e) {
        throw SchemaError(ptr, e.what());
    }
    throw SchemaError(ptr, "expected expression string, number, or {expr, breakpoints}");
}

inline std::vector<std::vector<double>> parse_matrix(const json& v, const std::string& ptr,
                                                     int rows, int cols) {
    std::vector<std::vector<double>> out;
    if (!v.is_array() || (int)v.size() != rows)
        throw SchemaError(ptr, "expected " + std::to_string(rows) + " rows");
    for (int i = 0; i < rows; ++i) {
        if (!v[i].is_array() || (int)v[i].size() != cols)
            throw SchemaError(ptr + "/" + std::to_string(i),
                              "expected " + std::to_string(cols) + " entries");
        out.push_back(v[i].get<std::vector<double>>());
    }
    return out;
}

inline TimeDomain parse_domain(const json& v, const std::string& ptr) {
    require_keys(v, ptr, {"kind", "start"});
    const std::string kind = need(v, ptr, "kind").get<std::string>();
    if (kind == "half_strip") return TimeDomain::half_strip(v.value("start", 0.0));
    if (kind == "full_strip") return TimeDomain::full_strip();
    if (kind == "periodic") return TimeDomain::periodic();
    throw SchemaError(ptr + "/kind", "expected half_strip, full_strip, or periodic");
}

inline BoundaryOperator parse_boundary(const json& v, const std::string& ptr, int n, int m) {
    const std::string type = need(v, ptr, "type").get<std::string>();
    if (type == "classical") {
        require_keys(v, ptr, {"type", "h"});
        const json& hs = need(v, ptr, "h");
        if (!hs.is_array() || (int)hs.size() != n)
            throw SchemaError(ptr + "/h", "expected n trace expressions of t");
        ClassicalTrace ct;
        for (int j = 0; j < n; ++j) {
            auto e = parse_expression(hs[j].get<std::string>());
            ct.h.push_back([e](double tau) { return e->eval(0.0, tau); });
        }
        return ct;
    }
    if (type == "reflection") {
        require_keys(v, ptr, {"type", "r0", "r1"});
        LinearReflection lr;
        lr.r0 = parse_matrix(need(v, ptr, "r0"), ptr + "/r0", m, n - m);
        lr.r1 = parse_matrix(need(v, ptr, "r1"), ptr + "/r1", n - m, m);
        return lr;
    }
    if (type == "integral_age") {
        require_keys(v, ptr, {"type", "h", "gamma"});
        IntegralAge ia;
        auto he = parse_expression(need(v, ptr, "h").get<std::string>());  // in z1
        auto ge = parse_expression(need(v, ptr, "gamma").get<std::string>());  // in x
        ia.h = [he](double zval) {
            const std::vector<double> z{zval};
            return he->eval(0.0, 0.0, &z);
        };
        ia.gamma = [ge](double x) { return ge->eval(x, 0.0); };
        return ia;
    }
    if (type == "dissipative") {
        require_keys(v, ptr, {"type", "h"});
        const json& hs = need(v, ptr, "h");
        if (!hs.is_array() || (int)hs.size() != n)
            throw SchemaError(ptr + "/h", "expected n expressions of z1..zn");
        DissipativeNonlinear dn;
        for (int j = 0; j < n; ++j) {
            auto e = parse_expression(hs[j].get<std::string>());
            dn.h.push_back([e](const std::vector<double>& z) { return e->eval(0.0, 0.0, &z); });
        }
        return dn;
    }
    throw SchemaError(ptr + "/type",
                      "expected classical, reflection, integral_age, or dissipative");
}

}  // namespace detail

inline Scenario load_scenario(const json& root) {
    using detail::need;
    using detail::require_keys;
    const std::string top = "";
    require_keys(root, top,
                 {"system", "domain", "boundary", "initial", "T_end", "solver", "population",
                  "probe", "fredholm", "check", "trace"});

    const json& jsys = need(root, top, "system");
    require_keys(jsys, "/system", {"n", "m", "a", "b", "f"});
    const int n = need(jsys, "/system", "n").get<int>();
    const int m = need(jsys, "/system", "m").get<int>();
    if (n < 1) throw SchemaError("/system/n", "need n >= 1");
    if (m < 0 || m > n) throw SchemaError("/system/m", "need 0 <= m <= n");

    std::vector<CoefficientField> a;
    const json& ja = need(jsys, "/system", "a");
    if (!ja.is_array() || (int)ja.size() != n) throw SchemaError("/system/a", "expected n entries");
    for (int j = 0; j < n; ++j) a.push_back(detail::parse_field(ja[j], "/system/a/" + std::to_string(j)));

    std::vector<std::vector<CoefficientField>> b(n, std::vector<CoefficientField>(n));
    if (jsys.contains("b")) {
        const json& jb = jsys.at("b");
        if (!jb.is_array() || (int)jb.size() != n)
            throw SchemaError("/system/b", "expected n rows");
        for (int j = 0; j < n; ++j) {
            if (!jb[j].is_array() || (int)jb[j].size() != n)
                throw SchemaError("/system/b/" + std::to_string(j), "expected n entries");
            for (int k = 0; k < n; ++k)
                b[j][k] = detail::parse_field(
                    jb[j][k], "/system/b/" + std::to_string(j) + "/" + std::to_string(k));
        }
    }
    std::vector<CoefficientField> f(n);
    if (jsys.contains("f")) {
        const json& jf = jsys.at("f");
        if (!jf.is_array() || (int)jf.size() != n)
            throw SchemaError("/system/f", "expected n entries");
        for (int j = 0; j < n; ++j)
            f[j] = detail::parse_field(jf[j], "/system/f/" + std::to_string(j));
    }

    const TimeDomain domain = detail::parse_domain(need(root, top, "domain"), "/domain");

    Scenario sc{HyperbolicSystem(n, m, std::move(a), std::move(b), std::move(f), domain),
                ClassicalTrace{}};
    sc.boundary = detail::parse_boundary(need(root, top, "boundary"), "/boundary", n, m);
    validate_boundary(sc.system, sc.boundary);

    if (root.contains("initial")) {
        const json& ji = root.at("initial");
        if (!ji.is_array() || (int)ji.size() != n)
            throw SchemaError("/initial", "expected n expressions of x");
        std::vector<ExprPtr> phis;
        for (int j = 0; j < n; ++j) {
            sc.initial_sources.push_back(ji[j].get<std::string>());
            phis.push_back(parse_expression(sc.initial_sources.back()));
        }
        sc.initial = [phis](int c, double x) { return phis[c]->eval(x, 0.0); };
    }
    sc.T_end = root.value("T_end", 1.0);

    if (root.contains("solver")) {
        const json& js = root.at("solver");
        require_keys(js, "/solver",
                     {"nx", "nt", "tol", "max_iterations", "relax", "slab_width", "interp",
                      "panels"});
        sc.solver.nx = js.value("nx", sc.solver.nx);
        sc.solver.nt = js.value("nt", sc.solver.nt);
        sc.solver.tol = js.value("tol", sc.solver.tol);
        sc.solver.max_iterations = js.value("max_iterations", sc.solver.max_iterations);
        sc.solver.relax = js.value("relax", sc.solver.relax);
        sc.solver.slab_width = js.value("slab_width", sc.solver.slab_width);
        sc.solver.panels = js.value("panels", sc.solver.panels);
        const std::string interp = js.value("interp", std::string("bilinear"));
        if (interp == "bilinear") sc.solver.interp = InterpOrder::Bilinear;
        else if (interp == "bicubic") sc.solver.interp = InterpOrder::Bicubic;
        else throw SchemaError("/solver/interp", "expected bilinear or bicubic");
    }
    if (root.contains("population")) {
        const json& jp = root.at("population");
        require_keys(jp, "/population", {"mu", "gamma", "h", "steps_per_unit"});
        PopulationModel pm;
        pm.mu = jp.value("mu", 0.0);
        auto ge = parse_expression(need(jp, "/population", "gamma").get<std::string>());
        auto he = parse_expression(need(jp, "/population", "h").get<std::string>());
        pm.gamma = [ge](double x) { return ge->eval(x, 0.0); };
        pm.h = [he](double zval) {
            const std::vector<double> z{zval};
            return he->eval(0.0, 0.0, &z);
        };
        sc.population = pm;
        sc.population_steps = jp.value("steps_per_unit", 512);
    }
    if (root.contains("probe")) {
        const json& jp = root.at("probe");
        require_keys(jp, "/probe", {"x0", "family", "window", "k_max", "refinements"});
        sc.probe.x0 = jp.value("x0", sc.probe.x0);
        sc.probe.family = jp.value("family", sc.probe.family);
        sc.probe.window = jp.value("window", sc.probe.window);
        sc.probe.k_max = jp.value("k_max", sc.probe.k_max);
        sc.probe.refinements = jp.value("refinements", sc.probe.refinements);
    }
    if (root.contains("fredholm")) {
        const json& jf = root.at("fredholm");
        require_keys(jf, "/fredholm", {"smax", "nx", "gamma", "d2_probe"});
        sc.fredholm.S_max = jf.value("smax", sc.fredholm.S_max);
        sc.fredholm.nx = jf.value("nx", sc.fredholm.nx);
        sc.fredholm.gamma = jf.value("gamma", sc.fredholm.gamma);
        if (jf.contains("d2_probe"))
            sc.fredholm.d2_probe = jf.at("d2_probe").get<std::vector<int>>();
    }
    if (root.contains("check")) {
        const json& jc = root.at("check");
        require_keys(jc, "/check", {"grid", "eps_sep", "tol", "t0", "t1"});
        if (jc.contains("grid")) {
            const auto g = jc.at("grid").get<std::vector<int>>();
            if (g.size() != 2) throw SchemaError("/check/grid", "expected [nx, nt]");
            sc.check.grid.nx = g[0];
            sc.check.grid.nt = g[1];
        }
        sc.check.grid.t0 = jc.value("t0", sc.check.grid.t0);
        sc.check.grid.t1 = jc.value("t1", sc.check.grid.t1);
        sc.check.eps_sep = jc.value("eps_sep", sc.check.eps_sep);
        sc.check.tol = jc.value("tol", sc.check.tol);
    }
    if (root.contains("trace")) {
        const json& jt = root.at("trace");
        require_keys(jt, "/trace", {"family", "x", "t"});
        sc.trace.family = jt.value("family", sc.trace.family);
        sc.trace.x = jt.value("x", sc.trace.x);
        sc.trace.t = jt.value("t", sc.trace.t);
    }
    sc.raw = root.dump();
    return sc;
}

inline Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open scenario file " + path);
    json root;
    try {
        in >> root;
    } catch (const std::exception& e) {
        throw SchemaError("", std::string("malformed JSON: ") + e.what());
    }
    return load_scenario(root);
}

}  // namespace hyper1d
