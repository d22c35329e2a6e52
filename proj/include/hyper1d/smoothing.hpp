#pragma once

#include <optional>

#include "hyper1d/solver.hpp"

namespace hyper1d {

/// Jump diagnostics along the characteristic curve launched at (x0, T).
/// While the curve stays inside the strip, jumps are one-sided stencil
/// estimates straddling the curve; after the curve leaves through a lateral
/// boundary (truncated = true) the series continues with a whole-row scan,
/// which measures the largest remaining discontinuity proxy at that time.
struct SingularityTrack {
    int family = 0;
    double x0 = 0.0;
    std::vector<double> times;
    std::vector<double> positions;  // NaN once the curve has left the strip
    std::vector<std::vector<double>> jump_u;   // [component][time index]
    std::vector<std::vector<double>> jump_du;  // one-sided slope mismatch
    bool truncated = false;
    double exit_time = 0.0;
};

namespace detail {

/// One-sided slope mismatch of component c around xs at time t, stencil width
/// delta; returns {value jump, derivative jump}.
inline std::pair<double, double> stencil_jumps(const GridFunction& u, int c, double xs, double t,
                                               double delta) {
    const double lo = 2 * delta, hi = 1.0 - 2 * delta;
    if (xs < lo || xs > hi) return {0.0, 0.0};
    const double um2 = u.value(c, xs - 2 * delta, t), um1 = u.value(c, xs - delta, t);
    const double up1 = u.value(c, xs + delta, t), up2 = u.value(c, xs + 2 * delta, t);
    const double ju = up1 - um1;
    const double jdu = (up2 - up1) / delta - (um1 - um2) / delta;
    return {ju, jdu};
}

/// Largest centered second-difference slope proxy over a whole time row.
inline std::pair<double, double> row_scan(const GridFunction& u, int c, double t, double delta) {
    double ju = 0.0, jdu = 0.0;
    const int steps = (int)std::floor((1.0 - 4 * delta) / delta);
    for (int i = 0; i <= steps; ++i) {
        const double xs = 2 * delta + i * delta;
        auto [a, b] = stencil_jumps(u, c, xs, t, delta);
        if (std::abs(a) > std::abs(ju)) ju = a;
        if (std::abs(b) > std::abs(jdu)) jdu = b;
    }
    return {ju, jdu};
}

}  // namespace detail

/// Track the singularity seeded at x0 on the initial line along the
/// characteristic of the given family through (x0, T).
inline SingularityTrack track_singularity(const SolutionBundle& bundle,
                                          const HyperbolicSystem& sys, double x0, int family = 0) {
    const GridFunction& u = bundle.u;
    SingularityTrack tr;
    tr.family = family;
    tr.x0 = x0;
    const double delta = 2.0 * u.hx();
    double xs = x0;
    bool inside = true;
    for (int it = 0; it < u.nt(); ++it) {
        const double t = u.t_at(it);
        if (it > 0 && inside) {
            // curve step dx/dt = a_family(x,t), classical RK4 over one grid row
            const double ht = u.ht();
            const double t0 = u.t_at(it - 1);
            auto f = [&](double x, double tt) { return sys.a[family](std::clamp(x, 0.0, 1.0), tt); };
            const double k1 = f(xs, t0);
            const double k2 = f(xs + 0.5 * ht * k1, t0 + 0.5 * ht);
            const double k3 = f(xs + 0.5 * ht * k2, t0 + 0.5 * ht);
            const double k4 = f(xs + ht * k3, t0 + ht);
            xs += ht / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
            if (xs <= 0.0 || xs >= 1.0) {
                inside = false;
                tr.truncated = true;
                tr.exit_time = t;
            }
        }
        tr.times.push_back(t);
        tr.positions.push_back(inside ? xs : std::numeric_limits<double>::quiet_NaN());
        tr.jump_u.resize(sys.n);
        tr.jump_du.resize(sys.n);
        for (int c = 0; c < sys.n; ++c) {
            auto [ju, jdu] = inside ? detail::stencil_jumps(u, c, xs, t, delta)
                                    : detail::row_scan(u, c, t, delta);
            tr.jump_u[c].push_back(ju);
            tr.jump_du[c].push_back(jdu);
        }
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Regularity profiles by refinement-ratio tests
// ---------------------------------------------------------------------------

struct RegularityProfile {
    int k_max = 3;
    double growth_threshold = 1.6;
    double noise_floor = 1e-6;
    std::vector<std::pair<double, double>> windows;
    std::vector<int> order;  // per window, in [0, k_max]
    // quotients[w][k-1][level] = max |k-th difference| / h^k at refinement level
    std::vector<std::vector<std::vector<double>>> quotients;
    // ratios[w][k-1] = worst quotient growth across successive refinements
    std::vector<std::vector<double>> ratios;
};

/// Produces the field re-solved with the requested node counts.
using Resolver = std::function<GridFunction(int nx, int nt)>;

namespace detail {

/// max |k-th forward difference| of nodal values restricted to the window,
/// over subsampled lines: first along t-columns, second along x-rows.
inline std::pair<double, double> max_kth_difference(const GridFunction& u, int k, double ta,
                                                    double tb) {
    // A t-direction stencil [it, it+k] belongs to the window holding its
    // midpoint, so a singularity sitting exactly on a grid node is still
    // straddled by some stencil of an adjacent window.
    int it_lo = (int)std::ceil((ta - u.t0()) / u.ht() - 0.5 * k - 1e-9);
    int it_hi = (int)std::floor((tb - u.t0()) / u.ht() - 0.5 * k - 1e-9);
    it_lo = std::clamp(it_lo, 0, u.nt() - 1 - k);
    it_hi = std::clamp(it_hi, 0, u.nt() - 1 - k);
    if (it_hi < it_lo) return {0.0, 0.0};
    // x-direction stencils are scanned on rows whose time lies in the window
    int row_lo = (int)std::ceil((ta - u.t0()) / u.ht() - 1e-12);
    int row_hi = (int)std::floor((tb - u.t0()) / u.ht() + 1e-12);
    row_lo = std::clamp(row_lo, 0, u.nt() - 1);
    row_hi = std::clamp(row_hi, 0, u.nt() - 1);
    const int sx = std::max(1, u.nx() / 96), st = std::max(1, (row_hi - row_lo) / 96);
    std::vector<double> binom(k + 1, 1.0);
    for (int i = 1; i <= k; ++i) binom[i] = binom[i - 1] * (k - i + 1) / i;
    double worst_t = 0.0, worst_x = 0.0;
    for (int c = 0; c < u.components(); ++c) {
        for (int ix = 0; ix < u.nx(); ix += sx)          // t-direction stencils
            for (int it = it_lo; it <= it_hi; ++it) {
                double d = 0.0;
                for (int i = 0; i <= k; ++i)
                    d += (i % 2 ? -1.0 : 1.0) * binom[i] * u.at(c, ix, it + k - i);
                worst_t = std::max(worst_t, std::abs(d));
            }
        for (int it = row_lo; it <= row_hi; it += st)    // x-direction stencils
            for (int ix = 0; ix + k < u.nx(); ++ix) {
                double d = 0.0;
                for (int i = 0; i <= k; ++i)
                    d += (i % 2 ? -1.0 : 1.0) * binom[i] * u.at(c, ix + k - i, it);
                worst_x = std::max(worst_x, std::abs(d));
            }
    }
    return {worst_t, worst_x};
}

}  // namespace detail

/// Measure the attained differentiability order per time window. Difference
/// quotients of every order up to k_max+2 are compared across refinements;
/// an order-j quotient that keeps growing under refinement locates the first
/// unbounded derivative, and the window's order is j-2 (a j-th quotient blows
/// up when the (j-2)-nd derivative already jumps across a moving curve).
inline RegularityProfile regularity_profile(const Resolver& resolve, int nx0, int nt0,
                                            double window_len, int k_max = 3, int refinements = 2,
                                            double growth = 1.6, double noise_floor = 1e-6) {
    if (refinements < 1) throw Error("regularity_profile needs at least one refinement");
    std::vector<GridFunction> levels;
    for (int r = 0; r <= refinements; ++r) {
        const int scale = 1 << r;
        levels.push_back(resolve((nx0 - 1) * scale + 1, (nt0 - 1) * scale + 1));
    }
    RegularityProfile prof;
    prof.k_max = k_max;
    prof.growth_threshold = growth;
    prof.noise_floor = noise_floor;
    const double t0 = levels[0].t0(), t1 = levels[0].t1();
    for (double ta = t0; ta < t1 - 1e-12; ta += window_len)
        prof.windows.emplace_back(ta, std::min(ta + window_len, t1));

    const int orders = k_max + 2;
    for (auto [ta, tb] : prof.windows) {
        std::vector<std::vector<double>> q(orders);
        std::vector<double> ratio(orders, 0.0);
        std::vector<double> raw_finest(orders, 0.0);
        for (int k = 1; k <= orders; ++k) {
            for (int r = 0; r <= refinements; ++r) {
                const auto [raw_t, raw_x] = detail::max_kth_difference(levels[r], k, ta, tb);
                const double qt = raw_t / std::pow(levels[r].ht(), k);
                const double qx = raw_x / std::pow(levels[r].hx(), k);
                q[k - 1].push_back(std::max(qt, qx));
                if (r == refinements) raw_finest[k - 1] = std::max(raw_t, raw_x);
                if (r > 0) {
                    const double prev = q[k - 1][r - 1];
                    const double rr = prev > 0 ? q[k - 1][r] / prev : 0.0;
                    ratio[k - 1] = std::max(ratio[k - 1], rr);
                }
            }
        }
        int first_fail = orders + 1;
        for (int k = 1; k <= orders; ++k) {
            const bool pass = ratio[k - 1] <= growth || raw_finest[k - 1] <= noise_floor;
            if (!pass) {
                first_fail = k;
                break;
            }
        }
        prof.order.push_back(std::clamp(first_fail - 2, 0, k_max));
        prof.quotients.push_back(std::move(q));
        prof.ratios.push_back(std::move(ratio));
    }
    return prof;
}

/// Earliest window start whose attained order is >= k; empty if never.
inline std::optional<double> smoothing_time(const RegularityProfile& prof, int k) {
    for (size_t w = 0; w < prof.windows.size(); ++w)
        if (prof.order[w] >= k) return prof.windows[w].first;
    return std::nullopt;
}

}  // namespace hyper1d
