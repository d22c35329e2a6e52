#pragma once

#include <functional>
#include <optional>
#include <variant>
#include <vector>

#include "hyper1d/grid_function.hpp"
#include "hyper1d/system.hpp"

namespace hyper1d {

/// u_j(boundary) = h_j(t), the boundary trace prescribed outright.
struct ClassicalTrace {
    std::vector<std::function<double(double)>> h;  // n entries
};

/// u_j(0,t) = sum_{k>m} r0[j][k-m] u_k(0,t) for j <= m,
/// u_j(1,t) = sum_{k<=m} r1[j-m][k] u_k(1,t) for j > m.
struct LinearReflection {
    std::vector<std::vector<double>> r0;  // m x (n-m)
    std::vector<std::vector<double>> r1;  // (n-m) x m
};

/// Age-structured fertility boundary u(0,t) = h(int_0^1 gamma(x) u(x,t) dx).
struct IntegralAge {
    std::function<double(double)> h;
    std::function<double(double)> gamma;
};

/// u_j(exit side) = h_j(z(t)) with z the vector of opposite-side traces.
struct DissipativeNonlinear {
    std::vector<std::function<double(const std::vector<double>&)>> h;  // n entries
};

using BoundaryOperator =
    std::variant<ClassicalTrace, LinearReflection, IntegralAge, DissipativeNonlinear>;

/// Piecewise boundary data produced by the operator S: lateral values at exit
/// ordinates, and (on a half strip) initial values on the line t = T.
struct BoundaryBundle {
    std::function<double(int, double)> lateral;                 // (j, tau) -> value
    std::optional<std::function<double(int, double)>> initial;  // (j, x) -> value
};

inline void validate_boundary(const HyperbolicSystem& sys, const BoundaryOperator& bc) {
    if (auto* ct = std::get_if<ClassicalTrace>(&bc)) {
        if ((int)ct->h.size() != sys.n) throw Error("ClassicalTrace needs n trace functions");
    } else if (auto* lr = std::get_if<LinearReflection>(&bc)) {
        if ((int)lr->r0.size() != sys.m || (sys.m > 0 && (int)lr->r0[0].size() != sys.n - sys.m))
            throw Error("LinearReflection r0 must be m x (n-m)");
        if ((int)lr->r1.size() != sys.n - sys.m ||
            (sys.n > sys.m && (int)lr->r1[0].size() != sys.m))
            throw Error("LinearReflection r1 must be (n-m) x m");
    } else if (std::get_if<IntegralAge>(&bc)) {
        if (sys.n != 1 || sys.m != 1) throw Error("IntegralAge expects the scalar age model");
    } else if (auto* dn = std::get_if<DissipativeNonlinear>(&bc)) {
        if ((int)dn->h.size() != sys.n) throw Error("DissipativeNonlinear needs n functions");
    }
}

/// Evaluate (Ru)_j(tau) for the given boundary operator, reading traces of u
/// off its grid.
inline double eval_R(const HyperbolicSystem& sys, const BoundaryOperator& bc,
                     const GridFunction& u, int j, double tau) {
    if (auto* ct = std::get_if<ClassicalTrace>(&bc)) return ct->h[j](tau);
    if (auto* lr = std::get_if<LinearReflection>(&bc)) {
        double acc = 0.0;
        if (j < sys.m) {
            for (int k = sys.m; k < sys.n; ++k)
                acc += lr->r0[j][k - sys.m] * u.value(k, 0.0, tau);
        } else {
            for (int k = 0; k < sys.m; ++k) acc += lr->r1[j - sys.m][k] * u.value(k, 1.0, tau);
        }
        return acc;
    }
    if (auto* ia = std::get_if<IntegralAge>(&bc)) {
        // Trapezoid over the grid row at time tau.
        double acc = 0.0;
        const int nx = u.nx();
        for (int ix = 0; ix < nx; ++ix) {
            const double x = u.x_at(ix);
            const double w = (ix == 0 || ix == nx - 1) ? 0.5 : 1.0;
            acc += w * ia->gamma(x) * u.value(0, x, tau);
        }
        return ia->h(acc * u.hx());
    }
    const auto& dn = std::get<DissipativeNonlinear>(bc);
    std::vector<double> z(sys.n);
    for (int k = 0; k < sys.n; ++k)
        z[k] = (k < sys.m) ? u.value(k, 1.0, tau) : u.value(k, 0.0, tau);
    return dn.h[j](z);
}

}  // namespace hyper1d
