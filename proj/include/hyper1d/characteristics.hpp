#pragma once

#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "hyper1d/system.hpp"

namespace hyper1d {

struct PathSample {
    double xi;
    double omega;
    double slope;  // d omega / d xi = 1 / a_j
};

/// The j-th characteristic through the anchor (x0,t0): xi -> omega_j(xi;x0,t0),
/// stored as accepted integrator steps and evaluated by cubic Hermite
/// interpolation. omega is strictly monotone in xi (increasing iff j < m).
class CharacteristicPath {
  public:
    int j = 0;
    double x0 = 0.0, t0 = 0.0;
    bool clipped_lo = false;  // hit the t-floor before xi could reach 0
    bool clipped_hi = false;  // ... before xi could reach 1
    std::vector<PathSample> samples;  // sorted by xi, always contains the anchor

    double xi_min() const { return samples.front().xi; }
    double xi_max() const { return samples.back().xi; }

    bool covers(double xi) const {
        return xi >= xi_min() - 1e-12 && xi <= xi_max() + 1e-12;
    }

    double omega(double xi) const { return hermite(xi).first; }
    double slope(double xi) const { return hermite(xi).second; }

  private:
    std::pair<double, double> hermite(double xi) const {
        if (!covers(xi))
            throw Error("characteristic path does not cover xi=" + std::to_string(xi) +
                        " (range [" + std::to_string(xi_min()) + "," + std::to_string(xi_max()) +
                        "], anchor (" + std::to_string(x0) + "," + std::to_string(t0) + "))");
        xi = std::clamp(xi, xi_min(), xi_max());
        size_t lo = 0, hi = samples.size() - 1;
        while (hi - lo > 1) {
            size_t mid = (lo + hi) / 2;
            (samples[mid].xi <= xi ? lo : hi) = mid;
        }
        const auto& s0 = samples[lo];
        const auto& s1 = samples[hi];
        const double h = s1.xi - s0.xi;
        if (h <= 0.0) return {s0.omega, s0.slope};
        const double u = (xi - s0.xi) / h;
        const double h00 = (1 + 2 * u) * (1 - u) * (1 - u), h10 = u * (1 - u) * (1 - u);
        const double h01 = u * u * (3 - 2 * u), h11 = u * u * (u - 1);
        const double w = h00 * s0.omega + h * h10 * s0.slope + h01 * s1.omega + h * h11 * s1.slope;
        // derivative of the Hermite cubic
        const double d00 = 6 * u * (u - 1) / h, d10 = (1 - u) * (1 - 3 * u);
        const double d01 = -6 * u * (u - 1) / h, d11 = u * (3 * u - 2);
        const double dw = d00 * s0.omega + d10 * s0.slope + d01 * s1.omega + d11 * s1.slope;
        return {w, dw};
    }
};

struct ExitPoint {
    enum class Kind { Lateral, Initial };
    double x = 0.0;    // exit abscissa x_j(x,t)
    double tau = 0.0;  // exit ordinate omega_j(x_j; x, t)
    Kind kind = Kind::Lateral;
};

struct TraceSettings {
    double tol = 1e-10;        // local error per integrator step
    double max_step = 1.0 / 64;  // cap keeps Hermite interpolation within tol
    int weight_panels = 32;    // quadrature panels per unit length for weights
};

/// Traces characteristics of a fixed system, with a thread-safe memo cache of
/// full-range paths keyed by (j, anchor).
class Tracer {
  public:
    explicit Tracer(const HyperbolicSystem& sys, TraceSettings settings = {})
        : sys_(&sys), st_(settings) {}

    const HyperbolicSystem& system() const { return *sys_; }
    const TraceSettings& settings() const { return st_; }

    /// Full-range path through (x,t), clipped at the initial line on a HalfStrip.
    std::shared_ptr<const CharacteristicPath> trace(int j, double x, double t) const {
        const Key key{j, quantize(x), quantize(t)};
        {
            std::lock_guard<std::mutex> lk(mu_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        auto path = std::make_shared<CharacteristicPath>(trace_uncached(j, x, t));
        std::lock_guard<std::mutex> lk(mu_);
        return cache_.emplace(key, std::move(path)).first->second;
    }

    ExitPoint exit_point(int j, double x, double t) const {
        const auto path = trace(j, x, t);
        // The smaller-ordinate boundary point: omega decreases toward xi=0 for
        // j < m (a_j > 0) and toward xi=1 otherwise.
        const bool rightward = j < sys_->m;
        ExitPoint ep;
        if (rightward) {
            if (path->clipped_lo) {
                ep.kind = ExitPoint::Kind::Initial;
                ep.x = path->xi_min();
                ep.tau = sys_->domain.start;
            } else {
                ep.x = 0.0;
                ep.tau = path->omega(0.0);
            }
        } else {
            if (path->clipped_hi) {
                ep.kind = ExitPoint::Kind::Initial;
                ep.x = path->xi_max();
                ep.tau = sys_->domain.start;
            } else {
                ep.x = 1.0;
                ep.tau = path->omega(1.0);
            }
        }
        return ep;
    }

    /// Order-l weights c_j^{(l)}(xi,x,t) and d_j^{(l)} = c / a_j(xi, omega(xi)).
    std::pair<double, double> weight(int j, int l, double xi, double x, double t) const {
        const auto path = trace(j, x, t);
        const double I = weight_integral(*path, j, l, x, xi);
        const double c = std::exp(I);
        const double d = c / sys_->a[j](xi, path->omega(xi));
        return {c, d};
    }

    /// (d_x omega_j(xi;x,t), d_t omega_j(xi;x,t)) from the closed-form
    /// exponential pair; d_x omega = -(1/a_j(x,t)) d_t omega.
    std::pair<double, double> omega_derivatives(int j, double xi, double x, double t) const {
        const auto path = trace(j, x, t);
        auto g = [&](double eta) {
            const double w = path->omega(eta);
            const double aj = sys_->a[j](eta, w);
            return sys_->dt_a(j, eta, w) / (aj * aj);
        };
        const int panels = std::max(1, (int)std::ceil(st_.weight_panels * std::abs(x - xi)));
        const double dt_omega =
            std::exp(composite_gl<8>(g, xi, x, sys_->a[j].breakpoints(), panels));
        const double dx_omega = -dt_omega / sys_->a[j](x, t);
        return {dx_omega, dt_omega};
    }

    /// Accumulated weight-exponent integral along an existing path.
    double weight_integral(const CharacteristicPath& path, int j, int l, double from,
                           double to) const {
        auto g = [&](double eta) {
            const double w = path.omega(eta);
            const double aj = sys_->a[j](eta, w);
            double v = sys_->b[j][j](eta, w) / aj;
            if (l > 0) v -= l * sys_->dt_a(j, eta, w) / (aj * aj);
            return v;
        };
        const int panels = std::max(1, (int)std::ceil(st_.weight_panels * std::abs(to - from)));
        return composite_gl<8>(g, from, to, sys_->diag_breakpoints(j), panels);
    }

    void clear_cache() const {
        std::lock_guard<std::mutex> lk(mu_);
        cache_.clear();
    }

  private:
    using Key = std::tuple<int, uint64_t, uint64_t>;
    struct KeyHash {
        size_t operator()(const Key& k) const {
            uint64_t h = std::get<1>(k) * 0x9e3779b97f4a7c15ull;
            h ^= std::get<2>(k) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
            return h ^ (uint64_t)std::get<0>(k);
        }
    };

    static uint64_t quantize(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        return bits;
    }

    CharacteristicPath trace_uncached(int j, double x, double t) const {
        if (j < 0 || j >= sys_->n) throw Error("component index out of range");
        if (x < -1e-12 || x > 1 + 1e-12) throw Error("anchor abscissa outside [0,1]");
        CharacteristicPath path;
        path.j = j;
        path.x0 = x;
        path.t0 = t;
        const bool half = sys_->domain.kind == TimeDomain::Kind::HalfStrip;
        const double floor_t = sys_->domain.start;
        // Constant speed: the characteristic is a straight line, no integration.
        if (auto av = sys_->a[j].constant_value()) {
            const double a = *av, slope = 1.0 / a;
            double lo = 0.0, hi = 1.0;
            if (half) {
                // omega(xi) = t + (xi - x)/a; clip where omega == floor.
                const double xi_cross = x + a * (floor_t - t);
                if (a > 0 && xi_cross > lo) {
                    lo = std::min(xi_cross, x);
                    path.clipped_lo = true;
                }
                if (a < 0 && xi_cross < hi) {
                    hi = std::max(xi_cross, x);
                    path.clipped_hi = true;
                }
            }
            path.samples = {{lo, t + (lo - x) * slope, slope},
                            {hi, t + (hi - x) * slope, slope}};
            if (x > lo && x < hi)
                path.samples.insert(path.samples.begin() + 1, {x, t, slope});
            return path;
        }
        path.samples.push_back({x, t, 1.0 / sys_->a[j](x, t)});
        const bool rightward = j < sys_->m;  // omega increasing in xi
        // Downward-in-time side first (may clip at the t-floor), then upward.
        const double down_end = rightward ? 0.0 : 1.0;
        const double up_end = rightward ? 1.0 : 0.0;
        std::vector<PathSample> down, up;
        const bool clipped =
            integrate_side(j, x, t, down_end, half ? &floor_t : nullptr, down);
        integrate_side(j, x, t, up_end, nullptr, up);
        if (rightward) {
            path.clipped_lo = clipped;
            for (auto it = down.rbegin(); it != down.rend(); ++it)
                path.samples.insert(path.samples.begin(), *it);
            for (auto& s : up) path.samples.push_back(s);
        } else {
            path.clipped_hi = clipped;
            for (auto& s : down) path.samples.push_back(s);
            for (auto it = up.rbegin(); it != up.rend(); ++it)
                path.samples.insert(path.samples.begin(), *it);
        }
        return path;
    }

    /// Adaptive Cash-Karp RK45 for d omega/d xi = 1/a_j, from (x,t) to xi_end,
    /// splitting at breakpoints of a_j. Appends accepted steps (excluding the
    /// anchor). If t_floor is given and omega crosses it, the path is clipped
    /// at the crossing and the function returns true.
    bool integrate_side(int j, double x, double t, double xi_end, const double* t_floor,
                        std::vector<PathSample>& out) const {
        if (std::abs(xi_end - x) < 1e-15) return false;
        if (t_floor && t <= *t_floor + 1e-14) return true;  // anchored on the initial line
        auto f = [&](double xi, double w) { return 1.0 / sys_->a[j](xi, w); };
        const auto seg = split_segment(x, xi_end, sys_->a[j].breakpoints());
        double xi = x, w = t;
        for (size_t s = 0; s + 1 < seg.size(); ++s) {
            const double target = seg[s + 1];
            const double dir = target > xi ? 1.0 : -1.0;
            double h = dir * std::min(st_.max_step, std::abs(target - xi));
            while (dir * (target - xi) > 1e-14) {
                h = dir * std::min({std::abs(h), st_.max_step, std::abs(target - xi)});
                double w_new, err;
                cash_karp(f, xi, w, h, w_new, err);
                if (err <= st_.tol || std::abs(h) <= 1e-13) {
                    const double s0 = f(xi, w), s1 = f(xi + h, w_new);
                    if (t_floor && w_new < *t_floor) {
                        clip_step(xi, w, s0, xi + h, w_new, s1, *t_floor, out);
                        return true;
                    }
                    xi += h;
                    w = w_new;
                    out.push_back({xi, w, s1});
                    if (err > 0.0)
                        h *= std::clamp(0.9 * std::pow(st_.tol / err, 0.2), 0.2, 5.0);
                } else {
                    h *= std::clamp(0.9 * std::pow(st_.tol / err, 0.25), 0.1, 0.9);
                    if (std::abs(h) < 1e-14)
                        throw Error("characteristic step-size underflow near xi=" +
                                    std::to_string(xi));
                }
            }
        }
        return false;
    }

    template <class F>
    static void cash_karp(F&& f, double x, double y, double h, double& y5, double& err) {
        const double k1 = f(x, y);
        const double k2 = f(x + h / 5, y + h * (k1 / 5));
        const double k3 = f(x + 3 * h / 10, y + h * (3 * k1 / 40 + 9 * k2 / 40));
        const double k4 = f(x + 3 * h / 5, y + h * (3 * k1 / 10 - 9 * k2 / 10 + 6 * k3 / 5));
        const double k5 =
            f(x + h, y + h * (-11 * k1 / 54 + 5 * k2 / 2 - 70 * k3 / 27 + 35 * k4 / 27));
        const double k6 = f(x + 7 * h / 8,
                            y + h * (1631 * k1 / 55296 + 175 * k2 / 512 + 575 * k3 / 13824 +
                                     44275 * k4 / 110592 + 253 * k5 / 4096));
        y5 = y + h * (37 * k1 / 378 + 250 * k3 / 621 + 125 * k4 / 594 + 512 * k6 / 1771);
        const double y4 = y + h * (2825 * k1 / 27648 + 18575 * k3 / 48384 + 13525 * k4 / 55296 +
                                   277 * k5 / 14336 + k6 / 4);
        err = std::abs(y5 - y4);
    }

    /// Bisect the Hermite cubic of the crossing step for omega == t_floor.
    static void clip_step(double x0, double w0, double s0, double x1, double w1, double s1,
                          double floor_t, std::vector<PathSample>& out) {
        const double h = x1 - x0;
        auto value = [&](double u) {
            const double h00 = (1 + 2 * u) * (1 - u) * (1 - u), h10 = u * (1 - u) * (1 - u);
            const double h01 = u * u * (3 - 2 * u), h11 = u * u * (u - 1);
            return h00 * w0 + h * h10 * s0 + h01 * w1 + h * h11 * s1;
        };
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 80; ++it) {
            const double mid = 0.5 * (lo + hi);
            if ((value(mid) - floor_t) * (value(lo) - floor_t) <= 0.0)
                hi = mid;
            else
                lo = mid;
        }
        const double u = 0.5 * (lo + hi);
        out.push_back({x0 + u * h, floor_t, s0 + u * (s1 - s0)});
    }

    const HyperbolicSystem* sys_;
    TraceSettings st_;
    mutable std::mutex mu_;
    mutable std::unordered_map<Key, std::shared_ptr<const CharacteristicPath>, KeyHash> cache_;
};

}  // namespace hyper1d
