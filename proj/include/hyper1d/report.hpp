#pragma once

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hyper1d/grid_function.hpp"
#include "hyper1d/util.hpp"

namespace hyper1d {

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void dump_json_rec(const nlohmann::json& v, std::ostream& os, int indent, int depth) {
    const std::string pad((size_t)indent * (depth + 1), ' ');
    const std::string padc((size_t)indent * depth, ' ');
    switch (v.type()) {
        case nlohmann::json::value_t::object: {
            if (v.empty()) {
                os << "{}";
                return;
            }
            os << "{\n";
            size_t i = 0;
            for (auto it = v.begin(); it != v.end(); ++it, ++i) {
                os << pad << nlohmann::json(it.key()).dump() << ": ";
                dump_json_rec(it.value(), os, indent, depth + 1);
                os << (i + 1 < v.size() ? ",\n" : "\n");
            }
            os << padc << "}";
            return;
        }
        case nlohmann::json::value_t::array: {
            if (v.empty()) {
                os << "[]";
                return;
            }
            os << "[\n";
            for (size_t i = 0; i < v.size(); ++i) {
                os << pad;
                dump_json_rec(v[i], os, indent, depth + 1);
                os << (i + 1 < v.size() ? ",\n" : "\n");
            }
            os << padc << "]";
            return;
        }
        case nlohmann::json::value_t::number_float:
            os << format_double(v.get<double>());
            return;
        default:
            os << v.dump();
            return;
    }
}

}  // namespace detail

/// Deterministic JSON serialization: sorted keys (nlohmann default) and all
/// floating-point values printed with 17 significant digits.
inline std::string dump_json(const nlohmann::json& v, int indent = 2) {
    std::ostringstream os;
    detail::dump_json_rec(v, os, indent, 0);
    os << "\n";
    return os.str();
}

inline void write_json_file(const nlohmann::json& v, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << dump_json(v);
}

/// CSV field dump: header x,t,u_1..u_n; comma separators, LF endings.
inline void write_csv(const GridFunction& u, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << "x,t";
    for (int c = 0; c < u.components(); ++c) out << ",u_" << (c + 1);
    out << "\n";
    for (int it = 0; it < u.nt(); ++it)
        for (int ix = 0; ix < u.nx(); ++ix) {
            out << detail::format_double(u.x_at(ix)) << ',' << detail::format_double(u.t_at(it));
            for (int c = 0; c < u.components(); ++c)
                out << ',' << detail::format_double(u.at(c, ix, it));
            out << "\n";
        }
}

/// Re-ingest a CSV field dump (inverse of write_csv); used for warm starts.
inline GridFunction read_csv(const std::string& path, bool periodic = false,
                             InterpOrder interp = InterpOrder::Bilinear) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error("empty CSV " + path);
    int n = -1;  // count u_ columns
    {
        std::stringstream hs(line);
        std::string tok;
        while (std::getline(hs, tok, ',')) ++n;
        --n;  // x and t columns
        if (n < 1) throw Error("CSV header must be x,t,u_1..u_n");
    }
    std::vector<double> xs, ts;
    std::vector<std::vector<double>> vals(n);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string tok;
        std::vector<double> row;
        while (std::getline(ls, tok, ',')) row.push_back(std::strtod(tok.c_str(), nullptr));
        if ((int)row.size() != n + 2) throw Error("malformed CSV row in " + path);
        xs.push_back(row[0]);
        ts.push_back(row[1]);
        for (int c = 0; c < n; ++c) vals[c].push_back(row[2 + c]);
    }
    if (xs.empty()) throw Error("CSV has no data rows: " + path);
    int nx = 1;
    while (nx < (int)xs.size() && xs[nx] > xs[nx - 1]) ++nx;
    if ((int)xs.size() % nx != 0) throw Error("CSV rows do not form a tensor grid");
    const int nt = (int)xs.size() / nx;
    GridFunction u(n, nx, nt, ts.front(), periodic ? ts.front() + nt * (ts[nx] - ts[0]) : ts.back(),
                   periodic, interp);
    for (int it = 0; it < nt; ++it)
        for (int ix = 0; ix < nx; ++ix)
            for (int c = 0; c < n; ++c) u.at(c, ix, it) = vals[c][(size_t)it * nx + ix];
    return u;
}

}  // namespace hyper1d
