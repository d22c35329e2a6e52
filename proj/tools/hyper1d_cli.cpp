// hyper1d command-line driver: one scenario file in, one deterministic report
// out. Wall-clock timing goes to stderr so that report files are byte-stable.

#include <chrono>
#include <iostream>

#include <CLI11.hpp>

#include "hyper1d/hyper1d.hpp"

namespace h1 = hyper1d;
using nlohmann::json;

namespace {

struct CommonOpts {
    std::string scenario_path;
    std::string out_path;
    std::string csv_path;
    std::string warm_path;
    std::string resolution;
    int threads = 0;
    int smax = -1;
    double tol = -1.0;
    double z_radius = 1.0;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--scenario", o.scenario_path, "scenario JSON file")->required();
    cmd->add_option("--out", o.out_path, "report JSON path (default: stdout)");
    cmd->add_option("--csv", o.csv_path, "CSV dump path for field/series data");
    cmd->add_option("--threads", o.threads, "worker thread cap");
    cmd->add_option("--resolution", o.resolution, "grid override NXxNT, e.g. 201x401");
    cmd->add_option("--smax", o.smax, "Fourier truncation override");
    cmd->add_option("--tol", o.tol, "solver tolerance override");
}

void apply_overrides(const CommonOpts& o, h1::Scenario& sc) {
    if (o.threads > 0) h1::set_max_threads(o.threads);
    if (!o.resolution.empty()) {
        const auto xpos = o.resolution.find('x');
        if (xpos == std::string::npos)
            throw h1::SchemaError("--resolution", "expected NXxNT, e.g. 201x401");
        try {
            sc.solver.nx = std::stoi(o.resolution.substr(0, xpos));
            sc.solver.nt = std::stoi(o.resolution.substr(xpos + 1));
        } catch (const std::exception&) {
            throw h1::SchemaError("--resolution", "expected NXxNT, e.g. 201x401");
        }
        if (sc.solver.nx < 2 || sc.solver.nt < 2)
            throw h1::SchemaError("--resolution", "need at least 2 nodes per axis");
    }
    if (o.smax >= 0) sc.fredholm.S_max = o.smax;
    if (o.tol > 0) {
        sc.solver.tol = o.tol;
        sc.check.tol = o.tol;
    }
}

void emit(const json& rep, const CommonOpts& o) {
    if (o.out_path.empty())
        std::cout << h1::dump_json(rep);
    else
        h1::write_json_file(rep, o.out_path);
}

json base_report(const h1::Scenario& sc, const std::string& command) {
    json rep;
    rep["command"] = command;
    rep["scenario_hash"] = h1::fnv1a_hex(sc.raw);
    return rep;
}

json witness_json(const h1::Witness& w) {
    return json{{"x", w.x}, {"t", w.t}, {"j", w.j}, {"k", w.k}, {"value", w.value}};
}

json solve_report(const h1::SolutionBundle& b) {
    json r;
    r["converged"] = b.converged;
    r["iterations"] = b.iterations;
    r["residual"] = b.residual;
    r["first_lateral_slab"] = b.first_lateral_slab;
    if (!b.message.empty()) r["message"] = b.message;
    if (b.spectral_radius > 0) r["contraction_ratio"] = b.spectral_radius;
    json slabs = json::array();
    for (const auto& s : b.slabs)
        slabs.push_back(json{{"index", s.index},
                             {"iterations", s.iterations},
                             {"final_change", s.final_change},
                             {"contraction_ratio", s.contraction_ratio},
                             {"all_lateral_exits", s.all_lateral_exits},
                             {"relax_used", s.relax_used}});
    if (!slabs.empty()) r["slabs"] = slabs;
    return r;
}

// ---------------------------------------------------------------------------

int run_check(const CommonOpts& o) {
    h1::Scenario sc = h1::load_scenario_file(o.scenario_path);
    apply_overrides(o, sc);
    json rep = base_report(sc, "check");
    bool pass = true;

    const auto hyp = h1::check_hyperbolicity(sc.system, sc.check.grid);
    rep["hyperbolicity"] = {{"pass", hyp.pass},
                            {"l1_margin", hyp.l1_margin},
                            {"l2_margin", hyp.l2_margin},
                            {"l1_witness", witness_json(hyp.l1_witness)},
                            {"l2_witness", witness_json(hyp.l2_witness)}};
    pass = pass && hyp.pass;

    const auto levy = h1::check_levy(sc.system, sc.check.eps_sep, sc.check.tol, sc.check.grid);
    rep["levy"] = {{"pass", levy.pass}, {"defect", levy.defect}, {"bounded", levy.bounded}};
    pass = pass && levy.pass;

    if (sc.system.time_independent()) {
        const auto bv = h1::check_bv_factorization(sc.system, sc.check.eps_sep, sc.check.tol,
                                                   sc.check.grid);
        rep["bv_factorization"] = {{"pass", bv.pass},
                                   {"defect", bv.defect},
                                   {"bounded", bv.bounded},
                                   {"sup_p", bv.sup_p}};
        pass = pass && bv.pass;
    }

    if (const auto* refl = std::get_if<h1::LinearReflection>(&sc.boundary);
        refl && sc.system.time_independent() && sc.system.m > 0 && sc.system.m < sc.system.n) {
        const h1::ExponentProfiles prof(sc.system);
        const auto iso = h1::iso_margins(prof, *refl, sc.fredholm.S_max);
        rep["iso_margins"] = {{"min_margin", iso.min_margin},
                              {"worst_s", iso.worst_s},
                              {"torus_bound", iso.torus_bound},
                              {"ge_inf_a", iso.ge_inf_a},
                              {"le_sum", iso.le_sum}};
        pass = pass && iso.min_margin > 0;
    }

    if (const auto* dn = std::get_if<h1::DissipativeNonlinear>(&sc.boundary)) {
        std::vector<std::pair<double, double>> box(sc.system.n, {-o.z_radius, o.z_radius});
        const auto cm = h1::contraction_check(sc.system, *dn, sc.solver.order_l, box);
        rep["contraction"] = {{"pass", cm.pass}, {"margin", cm.margin}};
        pass = pass && cm.pass;
    }

    rep["pass"] = pass;
    emit(rep, o);
    return pass ? 0 : 2;
}

int run_simulate(const CommonOpts& o) {
    h1::Scenario sc = h1::load_scenario_file(o.scenario_path);
    apply_overrides(o, sc);
    if (!sc.initial) throw h1::SchemaError("/initial", "simulate requires initial data");
    std::optional<h1::GridFunction> warm;
    if (!o.warm_path.empty()) warm = h1::read_csv(o.warm_path, false, sc.solver.interp);
    const auto b = h1::solve_ibvp(sc.system, sc.boundary, *sc.initial, sc.T_end, sc.solver,
                                  warm ? &*warm : nullptr);
    if (!o.csv_path.empty()) h1::write_csv(b.u, o.csv_path);
    json rep = base_report(sc, "simulate");
    rep["solve"] = solve_report(b);
    rep["grid"] = {{"nx", b.u.nx()}, {"nt", b.u.nt()}, {"t0", b.u.t0()},
                   {"t1", b.u.t_at(b.u.nt() - 1)}};
    emit(rep, o);
    return b.converged ? 0 : 3;
}

int run_solve_periodic(const CommonOpts& o) {
    h1::Scenario sc = h1::load_scenario_file(o.scenario_path);
    apply_overrides(o, sc);
    std::optional<h1::GridFunction> warm;
    if (!o.warm_path.empty()) warm = h1::read_csv(o.warm_path, true, sc.solver.interp);
    const auto b = h1::solve_periodic_strip(sc.system, sc.boundary, sc.solver,
                                            warm ? &*warm : nullptr);
    if (!o.csv_path.empty()) h1::write_csv(b.u, o.csv_path);
    json rep = base_report(sc, "solve-periodic");
    rep["solve"] = solve_report(b);
    rep["grid"] = {{"nx", b.u.nx()}, {"nt", b.u.nt()}};
    emit(rep, o);
    return b.converged ? 0 : 3;
}

int run_probe_smoothing(const CommonOpts& o) {
    h1::Scenario sc = h1::load_scenario_file(o.scenario_path);
    apply_overrides(o, sc);
    if (!sc.initial) throw h1::SchemaError("/initial", "probe-smoothing requires initial data");

    h1::SolveConfig base_cfg = sc.solver;
    auto resolve = [&](int nx, int nt) {
        h1::SolveConfig cfg = base_cfg;
        cfg.nx = nx;
        cfg.nt = nt;
        cfg.residual_stride = 1 << 20;  // residual certificate not needed per level
        auto b = h1::solve_ibvp(sc.system, sc.boundary, *sc.initial, sc.T_end, cfg);
        if (!b.converged) throw h1::Error("refinement solve failed: " + b.message);
        return b.u;
    };
    const auto prof = h1::regularity_profile(resolve, sc.solver.nx, sc.solver.nt, sc.probe.window,
                                             sc.probe.k_max, sc.probe.refinements);

    const auto bundle = h1::solve_ibvp(sc.system, sc.boundary, *sc.initial, sc.T_end, sc.solver);
    const auto track = h1::track_singularity(bundle, sc.system, sc.probe.x0, sc.probe.family);

    json rep = base_report(sc, "probe-smoothing");
    json windows = json::array(), orders = json::array();
    for (size_t w = 0; w < prof.windows.size(); ++w) {
        windows.push_back(json::array({prof.windows[w].first, prof.windows[w].second}));
        orders.push_back(prof.order[w]);
    }
    rep["windows"] = windows;
    rep["orders"] = orders;
    json final_ju = json::array(), final_jdu = json::array();
    for (int c = 0; c < sc.system.n; ++c) {
        final_ju.push_back(track.jump_u[c].empty() ? 0.0 : track.jump_u[c].back());
        final_jdu.push_back(track.jump_du[c].empty() ? 0.0 : track.jump_du[c].back());
    }
    rep["track"] = {{"family", track.family},
                    {"x0", track.x0},
                    {"truncated", track.truncated},
                    {"exit_time", track.exit_time},
                    {"final_jump_u", final_ju},
                    {"final_jump_du", final_jdu}};
    for (int k = 1; k <= prof.k_max; ++k) {
        if (auto ts = h1::smoothing_time(prof, k))
            rep["smoothing_time"]["k" + std::to_string(k)] = *ts;
    }
    emit(rep, o);

    if (!o.csv_path.empty()) {
        std::ofstream out(o.csv_path, std::ios::binary);
        if (!out) throw h1::Error("cannot open " + o.csv_path + " for writing");
        out << "t,x";
        for (int c = 0; c < sc.system.n; ++c)
            out << ",jump_u_" << (c + 1) << ",jump_du_" << (c + 1);
        out << '\n';
        for (size_t i = 0; i < track.times.size(); ++i) {
            out << h1::detail::format_double(track.times[i]) << ','
                << h1::detail::format_double(track.positions[i]);
            for (int c = 0; c < sc.system.n; ++c)
                out << ',' << h1::detail::format_double(track.jump_u[c][i]) << ','
                    << h1::detail::format_double(track.jump_du[c][i]);
            out << '\n';
        }
    }
    return 0;
}

int run_population(const CommonOpts& o) {
    h1::Scenario sc = h1::load_scenario_file(o.scenario_path);
    apply_overrides(o, sc);
    if (!sc.population) throw h1::SchemaError("/population", "population run needs a model");
    if (!sc.initial) throw h1::SchemaError("/initial", "population run needs an age profile");
    const auto& phi = *sc.initial;
    auto phi0 = [&phi](double x) { return phi(0, x); };
    const auto tr = h1::renewal_boundary(*sc.population, phi0, sc.T_end, sc.population_steps);

    json rep = base_report(sc, "population");
    rep["steps_per_unit"] = sc.population_steps;
    rep["T_end"] = sc.T_end;
    rep["final_value"] = tr.v.back();
    double vmax = 0.0;
    for (double v : tr.v) vmax = std::max(vmax, std::abs(v));
    rep["sup_value"] = vmax;
    emit(rep, o);

    if (!o.csv_path.empty()) {
        std::ofstream out(o.csv_path, std::ios::binary);
        if (!out) throw h1::Error("cannot open " + o.csv_path + " for writing");
        out << "t,v\n";
        for (size_t i = 0; i < tr.v.size(); ++i)
            out << h1::detail::format_double(tr.t0 + i * tr.dt) << ','
                << h1::detail::format_double(tr.v[i]) << '\n';
    }
    return 0;
}

int run_fredholm(const CommonOpts& o) {
    h1::Scenario sc = h1::load_scenario_file(o.scenario_path);
    apply_overrides(o, sc);
    const auto* refl = std::get_if<h1::LinearReflection>(&sc.boundary);
    if (!refl) throw h1::SchemaError("/boundary", "fredholm run needs a reflection boundary");
    if (!sc.system.time_independent())
        throw h1::SchemaError("/system", "fredholm run needs time-independent coefficients");

    const int S_max = sc.fredholm.S_max, nx = sc.fredholm.nx;
    const h1::ExponentProfiles prof(sc.system);
    const auto iso = h1::iso_margins(prof, *refl, S_max);
    auto rep_kernel = h1::kernel_and_index(sc.system, *refl, S_max, nx);

    json rep = base_report(sc, "fredholm");
    rep["iso_margins"] = {{"min_margin", iso.min_margin},
                          {"worst_s", iso.worst_s},
                          {"torus_bound", iso.torus_bound},
                          {"ge_inf_a", iso.ge_inf_a},
                          {"le_sum", iso.le_sum}};
    rep["kernel_dim"] = rep_kernel.kernel_dim;
    rep["coker_dim"] = rep_kernel.coker_dim;
    rep["index"] = rep_kernel.index;
    rep["confident"] = rep_kernel.confident;
    rep["coker_cross_angle"] = rep_kernel.coker_cross_angle;
    rep["kernel_wnorms"] = rep_kernel.kernel_wnorms;
    json modes = json::array();
    for (const auto& m : rep_kernel.modes)
        if (m.nullity > 0 || m.adjoint_nullity > 0 || !m.confident)
            modes.push_back(json{{"s", m.s},
                                 {"nullity", m.nullity},
                                 {"adjoint_nullity", m.adjoint_nullity},
                                 {"gap_ratio", m.gap_ratio},
                                 {"confident", m.confident},
                                 {"margin", m.margin}});
    rep["singular_modes"] = modes;

    bool have_f = false;
    for (int j = 0; j < sc.system.n; ++j)
        if (!sc.system.f[j].is_zero()) have_f = true;
    bool solvable = true;
    if (have_f) {
        const int nt = std::max(8 * S_max + 8, 128);
        h1::GridFunction fgrid(sc.system.n, nx, nt, 0.0, h1::two_pi, true);
        fgrid.fill([&](int c, double x, double t) { return sc.system.f[c](x, t); });
        const auto fs = h1::to_modes(fgrid, S_max);
        const auto sol = h1::fredholm_solve(sc.system, *refl, fs, nx, sc.solver.tol,
                                            sc.fredholm.d2_probe);
        rep["solve"] = {{"solvable", sol.report.solvable},
                        {"residual", sol.report.residual},
                        {"cross_check", sol.report.cross_check},
                        {"obstruction", sol.report.obstruction},
                        {"parametrix_residual", sol.report.parametrix_residual}};
        solvable = sol.report.solvable;
        if (!o.csv_path.empty()) {
            const int nt_out = std::max(sc.solver.nt, 2 * S_max + 2);
            h1::write_csv(h1::from_modes(sol.u, nt_out, sc.solver.interp), o.csv_path);
        }
    } else if (!o.csv_path.empty() && !sc.fredholm.d2_probe.empty()) {
        h1::DiscreteOperator D = h1::build_discrete_D(prof, *refl, nx);
        std::ofstream out(o.csv_path, std::ios::binary);
        if (!out) throw h1::Error("cannot open " + o.csv_path + " for writing");
        out << "s,i,sigma\n";
        for (int s : sc.fredholm.d2_probe) {
            const auto sv = D.d2_singular_values(s);
            for (int i = 0; i < (int)sv.size(); ++i)
                out << s << ',' << i << ',' << h1::detail::format_double(sv(i)) << '\n';
        }
    }
    emit(rep, o);
    if (!rep_kernel.confident) return 3;
    return solvable ? 0 : 2;
}

int run_trace(const CommonOpts& o) {
    h1::Scenario sc = h1::load_scenario_file(o.scenario_path);
    apply_overrides(o, sc);
    const int j = sc.trace.family;
    if (j < 0 || j >= sc.system.n)
        throw h1::SchemaError("/trace/family", "family index out of range");
    h1::Tracer tracer(sc.system);
    const auto path = tracer.trace(j, sc.trace.x, sc.trace.t);
    const auto exit = tracer.exit_point(j, sc.trace.x, sc.trace.t);
    const auto [c_exit, d_exit] = tracer.weight(j, sc.solver.order_l, exit.x, sc.trace.x,
                                                sc.trace.t);

    json rep = base_report(sc, "trace");
    rep["family"] = j;
    rep["anchor"] = {{"x", sc.trace.x}, {"t", sc.trace.t}};
    rep["exit"] = {{"x", exit.x},
                   {"tau", exit.tau},
                   {"kind", exit.kind == h1::ExitPoint::Kind::Lateral ? "lateral" : "initial"}};
    rep["c_exit"] = c_exit;
    rep["xi_range"] = json::array({path->xi_min(), path->xi_max()});
    emit(rep, o);

    if (!o.csv_path.empty()) {
        std::ofstream out(o.csv_path, std::ios::binary);
        if (!out) throw h1::Error("cannot open " + o.csv_path + " for writing");
        out << "xi,omega,slope\n";
        const int samples = 256;
        for (int i = 0; i <= samples; ++i) {
            const double xi =
                path->xi_min() + (path->xi_max() - path->xi_min()) * i / (double)samples;
            out << h1::detail::format_double(xi) << ','
                << h1::detail::format_double(path->omega(xi)) << ','
                << h1::detail::format_double(path->slope(xi)) << '\n';
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"characteristic-integral toolkit for 1D hyperbolic systems"};
    app.require_subcommand(1);

    CommonOpts o;
    struct Cmd {
        const char* name;
        const char* help;
        int (*run)(const CommonOpts&);
    };
    const std::vector<Cmd> cmds = {
        {"check", "verify structural conditions of a scenario", run_check},
        {"simulate", "solve the initial-boundary value problem", run_simulate},
        {"solve-periodic", "solve the time-periodic problem", run_solve_periodic},
        {"probe-smoothing", "regularity profile and singularity tracking", run_probe_smoothing},
        {"population", "renewal marching of the age-model boundary trace", run_population},
        {"fredholm", "mode-wise solvability analysis", run_fredholm},
        {"trace", "dump one characteristic curve", run_trace},
    };
    std::map<std::string, int (*)(const CommonOpts&)> dispatch;
    for (const auto& c : cmds) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        add_common(sub, o);
        if (std::string(c.name) == "simulate" || std::string(c.name) == "solve-periodic")
            sub->add_option("--warm-start", o.warm_path, "CSV field to seed the iteration");
        if (std::string(c.name) == "check")
            sub->add_option("--z-radius", o.z_radius,
                            "half-width of the z-box for the contraction check");
        dispatch[c.name] = c.run;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    const auto t_start = std::chrono::steady_clock::now();
    int rc = 0;
    try {
        rc = dispatch.at(app.get_subcommands().front()->get_name())(o);
    } catch (const hyper1d::SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const hyper1d::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start);
    std::cerr << "wall time: " << dt.count() << " s\n";
    return rc;
}
