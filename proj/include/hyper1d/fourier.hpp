#pragma once

#include <complex>

#include <Eigen/Dense>

#include "hyper1d/grid_function.hpp"
#include "hyper1d/util.hpp"

namespace hyper1d {

using cplx = std::complex<double>;

/// Unnormalized time modes f_hat_s(x) = int_0^{2pi} f(x,t) e^{-ist} dt of an
/// n-component field, tabulated on the x-grid; s runs over -S_max..S_max.
struct FourierField {
    int S_max = 0;
    int n = 0;
    int nx = 0;
    double hx = 0.0;
    std::vector<Eigen::MatrixXcd> modes;  // modes[s + S_max] is n x nx

    const Eigen::MatrixXcd& mode(int s) const { return modes[(size_t)(s + S_max)]; }
    Eigen::MatrixXcd& mode(int s) { return modes[(size_t)(s + S_max)]; }
    double x_at(int ix) const { return ix * hx; }

    /// max deviation from the real-field symmetry f_hat_{-s} = conj(f_hat_s)
    double symmetry_defect() const {
        double d = 0.0;
        for (int s = 1; s <= S_max; ++s)
            d = std::max(d, (mode(-s) - mode(s).conjugate()).cwiseAbs().maxCoeff());
        return d;
    }
};

/// Trapezoid quadrature of the mode integrals on the wrap-around time grid;
/// exact for band-limited fields. Requires 2*S_max < nt (aliasing guard).
inline FourierField to_modes(const GridFunction& u, int S_max) {
    if (!u.periodic()) throw Error("to_modes expects a PeriodicStrip grid");
    if (2 * S_max >= u.nt())
        throw Error("S_max " + std::to_string(S_max) + " aliases on " + std::to_string(u.nt()) +
                    " time nodes");
    FourierField F;
    F.S_max = S_max;
    F.n = u.components();
    F.nx = u.nx();
    F.hx = u.hx();
    F.modes.assign(2 * S_max + 1, Eigen::MatrixXcd::Zero(F.n, F.nx));
    parallel_for(2 * S_max + 1, [&](long idx) {
        const int s = (int)idx - S_max;
        Eigen::MatrixXcd& M = F.modes[idx];
        for (int it = 0; it < u.nt(); ++it) {
            const cplx w = u.ht() * std::exp(cplx(0.0, -s * u.t_at(it)));
            for (int c = 0; c < F.n; ++c)
                for (int ix = 0; ix < F.nx; ++ix) M(c, ix) += w * u.at(c, ix, it);
        }
    });
    return F;
}

/// Inverse of to_modes with the printed conventions: u = (1/2pi) sum_s
/// f_hat_s e^{ist}; imaginary parts (symmetry defects) are dropped.
inline GridFunction from_modes(const FourierField& F, int nt,
                               InterpOrder interp = InterpOrder::Bilinear) {
    GridFunction u(F.n, F.nx, nt, 0.0, two_pi, true, interp);
    parallel_for(nt, [&](long it) {
        const double t = u.t_at((int)it);
        for (int s = -F.S_max; s <= F.S_max; ++s) {
            const cplx w = std::exp(cplx(0.0, s * t)) / two_pi;
            const Eigen::MatrixXcd& M = F.mode(s);
            for (int c = 0; c < F.n; ++c)
                for (int ix = 0; ix < F.nx; ++ix)
                    u.at(c, ix, (int)it) += (w * M(c, ix)).real();
        }
    });
    return u;
}

/// Squared truncated norm sum_s (1+s^2)^gamma int_0^1 |f_hat_s(x)|^2 dx,
/// x-integral by the trapezoid rule.
inline double w_norm_sq(const FourierField& F, double gamma) {
    double total = 0.0;
    for (int s = -F.S_max; s <= F.S_max; ++s) {
        const Eigen::MatrixXcd& M = F.mode(s);
        double xi = 0.0;
        for (int ix = 0; ix < F.nx; ++ix) {
            const double wt = (ix == 0 || ix == F.nx - 1) ? 0.5 : 1.0;
            xi += wt * F.hx * M.col(ix).squaredNorm();
        }
        total += std::pow(1.0 + (double)s * s, gamma) * xi;
    }
    return total;
}

inline double w_norm(const FourierField& F, double gamma) { return std::sqrt(w_norm_sq(F, gamma)); }

/// Geometric tail bound for the truncated norm of a field whose modes decay
/// like |f_hat_s| <= C q^{|s|}: ratio of the last sampled shell to 1-q.
inline double w_norm_tail_bound(const FourierField& F, double gamma, double decay_q) {
    if (decay_q <= 0.0 || decay_q >= 1.0) throw Error("decay factor must lie in (0,1)");
    double shell = 0.0;
    for (int s : {-F.S_max, F.S_max}) {
        const Eigen::MatrixXcd& M = F.mode(s);
        double xi = 0.0;
        for (int ix = 0; ix < F.nx; ++ix) {
            const double wt = (ix == 0 || ix == F.nx - 1) ? 0.5 : 1.0;
            xi += wt * F.hx * M.col(ix).squaredNorm();
        }
        shell += std::pow(1.0 + (double)F.S_max * F.S_max, gamma) * xi;
    }
    return shell * decay_q * decay_q / (1.0 - decay_q * decay_q);
}

}  // namespace hyper1d
