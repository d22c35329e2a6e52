#pragma once

#include <string>
#include <vector>

#include "hyper1d/hyper1d.hpp"

// Shared fixture builders for the test suite.
namespace fx {

using namespace hyper1d;

inline std::vector<std::vector<CoefficientField>> zero_matrix(int n) {
    return std::vector<std::vector<CoefficientField>>(n, std::vector<CoefficientField>(n));
}

inline std::vector<CoefficientField> zeros(int n) { return std::vector<CoefficientField>(n); }

/// Scalar rightward transport u_t + u_x = 0.
inline HyperbolicSystem transport(TimeDomain dom = TimeDomain::half_strip()) {
    return HyperbolicSystem(1, 1, {CoefficientField(1.0)}, zero_matrix(1), zeros(1), dom);
}

/// Two-component counterflow a = diag(1, -1) with symmetric off-diagonal
/// coupling kappa and optional sources.
inline HyperbolicSystem coupled(double kappa, TimeDomain dom = TimeDomain::half_strip(),
                                std::vector<CoefficientField> f = zeros(2)) {
    auto b = zero_matrix(2);
    b[0][1] = CoefficientField(kappa);
    b[1][0] = CoefficientField(kappa);
    return HyperbolicSystem(2, 1, {CoefficientField(1.0), CoefficientField(-1.0)}, std::move(b),
                            std::move(f), dom);
}

/// Counterflow with diagonal damping beta (no cross coupling); the boundary
/// weight along a full crossing is then exp(-beta) per unit length.
inline HyperbolicSystem damped(double beta, TimeDomain dom = TimeDomain::periodic(),
                               std::vector<CoefficientField> f = zeros(2)) {
    auto b = zero_matrix(2);
    b[0][0] = CoefficientField(beta);
    b[1][1] = CoefficientField(beta);
    return HyperbolicSystem(2, 1, {CoefficientField(1.0), CoefficientField(-1.0)}, std::move(b),
                            std::move(f), dom);
}

/// 1x1 reflection pair for the counterflow fixtures.
inline LinearReflection reflection(double k0, double k1) {
    return LinearReflection{{{k0}}, {{k1}}};
}

/// Dissipative cross reflection u_1 = kappa z_2, u_2 = kappa z_1.
inline DissipativeNonlinear cross_reflection(double kappa) {
    DissipativeNonlinear dn;
    dn.h.push_back([kappa](const std::vector<double>& z) { return kappa * z[1]; });
    dn.h.push_back([kappa](const std::vector<double>& z) { return kappa * z[0]; });
    return dn;
}

/// Manufactured two-component problem with exact solution
/// u_1 = sin(t-x), u_2 = sin(t+x) under coupling kappa.
struct Manufactured {
    HyperbolicSystem sys;
    ClassicalTrace trace;
    InitialData phi;

    static double u1(double x, double t) { return std::sin(t - x); }
    static double u2(double x, double t) { return std::sin(t + x); }
};

inline Manufactured manufactured_coupled(double kappa,
                                         TimeDomain dom = TimeDomain::half_strip()) {
    std::vector<CoefficientField> f;
    f.push_back(CoefficientField(std::to_string(kappa) + "*sin(t+x)"));
    f.push_back(CoefficientField(std::to_string(kappa) + "*sin(t-x)"));
    Manufactured m{coupled(kappa, dom, std::move(f)), ClassicalTrace{}, {}};
    m.trace.h.push_back([](double t) { return std::sin(t); });        // u_1(0,t)
    m.trace.h.push_back([](double t) { return std::sin(t + 1.0); });  // u_2(1,t)
    m.phi = [](int c, double x) { return c == 0 ? std::sin(-x) : std::sin(x); };
    return m;
}

}  // namespace fx
