#pragma once

#include <random>
#include <string>

#include "hyper1d/operators.hpp"

namespace hyper1d {

struct SolveConfig {
    int nx = 101;
    int nt = 101;
    double tol = 1e-8;          // fixed-point sup-change tolerance
    int max_iterations = 80;
    double relax = 1.0;         // in (0,1]; halved automatically on divergence, twice
    double slab_width = 0.0;    // 0 = 0.9 * minimal boundary-to-boundary transit time
    InterpOrder interp = InterpOrder::Bilinear;
    int panels = 32;
    int order_l = 0;
    int residual_stride = 0;    // 0 = auto subsampling of the verification grid
};

struct SlabLog {
    int index = 0;
    int iterations = 0;
    double final_change = 0.0;
    double contraction_ratio = 0.0;
    bool all_lateral_exits = false;
    double relax_used = 1.0;
};

struct SolutionBundle {
    GridFunction u;
    bool converged = true;
    std::string message;
    double residual = 0.0;       // sup-norm defect of the integral system, shifted grid
    int iterations = 0;
    std::vector<SlabLog> slabs;
    double spectral_radius = 0.0;  // contraction-ratio estimate (periodic solves)
    int first_lateral_slab = -1;
};

using InitialData = std::function<double(int, double)>;  // (component, x)

namespace detail {

inline double min_transit_time(const HyperbolicSystem& sys, int samples = 64) {
    double amax = 0.0;
    for (int j = 0; j < sys.n; ++j)
        for (int it = 0; it <= samples; ++it)
            for (int ix = 0; ix <= samples; ++ix)
                amax = std::max(amax, std::abs(sys.a[j]((double)ix / samples,
                                                        two_pi * it / samples)));
    if (amax <= 0.0) throw Error("degenerate speeds");
    return 1.0 / amax;
}

/// Boundary data of S with the u-dependent lateral traces tabulated on the
/// grid times (cubic interpolation in between); classical traces stay exact.
inline BoundaryBundle make_bundle(const HyperbolicSystem& sys, const BoundaryOperator& bc,
                                  const std::optional<InitialData>& phi, const GridFunction& u,
                                  std::vector<std::vector<double>>& table) {
    BoundaryBundle bundle;
    if (std::holds_alternative<ClassicalTrace>(bc)) {
        const auto& ct = std::get<ClassicalTrace>(bc);
        bundle.lateral = [&ct](int j, double tau) { return ct.h[j](tau); };
    } else {
        table.assign(sys.n, std::vector<double>(u.nt()));
        parallel_for(u.nt(), [&](long it) {
            for (int j = 0; j < sys.n; ++j)
                table[j][(int)it] = eval_R(sys, bc, u, j, u.t_at((int)it));
        });
        const double t0 = u.t0(), ht = u.ht();
        const int nt = u.nt();
        const bool periodic = u.periodic();
        bundle.lateral = [&table, t0, ht, nt, periodic](int j, double tau) {
            double ft = (tau - t0) / ht;
            if (periodic) {
                ft = std::fmod(ft, (double)nt);
                if (ft < 0) ft += nt;
            }
            // 4-point Lagrange through the tabulated trace, one-sided at the
            // window edges (matches the bicubic order of the field itself).
            int i1 = (int)std::floor(ft);
            int base = i1 - 1;
            if (!periodic) base = std::clamp(base, 0, std::max(0, nt - 4));
            const double s = ft - base;
            auto pick = [&](int i) {
                if (periodic) return table[j][((i % nt) + nt) % nt];
                return table[j][std::clamp(i, 0, nt - 1)];
            };
            if (nt < 4) {
                const double u = ft - i1;
                return (1 - u) * pick(i1) + u * pick(i1 + 1);
            }
            const double p0 = pick(base), p1 = pick(base + 1), p2 = pick(base + 2),
                         p3 = pick(base + 3);
            const double s1 = s - 1, s2 = s - 2, s3 = s - 3;
            return -p0 * s1 * s2 * s3 / 6.0 + p1 * s * s2 * s3 / 2.0 - p2 * s * s1 * s3 / 2.0 +
                   p3 * s * s1 * s2 / 6.0;
        };
    }
    if (sys.domain.kind == TimeDomain::Kind::HalfStrip) {
        if (!phi) throw Error("HalfStrip problems require initial data phi");
        bundle.initial = *phi;
    }
    return bundle;
}

/// Sup-norm defect of u = BSu + Du + Ff measured on a half-cell-shifted grid.
inline double shifted_residual(const OperatorContext& ctx, const BoundaryOperator& bc,
                               const std::optional<InitialData>& phi, const GridFunction& u,
                               int stride) {
    const auto& sys = ctx.sys();
    std::vector<std::vector<double>> table;
    BoundaryBundle bundle = make_bundle(sys, bc, phi, u, table);
    if (stride <= 0) stride = std::max(1, std::max(u.nx(), u.nt()) / 128);
    std::vector<double> worst(u.nt(), 0.0);
    parallel_for((u.nt() - 1) / stride, [&](long row) {
        const int it = (int)row * stride;
        const double t = u.t_at(it) + 0.5 * u.ht();
        double w = 0.0;
        for (int ix = 0; ix < u.nx() - 1; ix += stride) {
            const double x = u.x_at(ix) + 0.5 * u.hx();
            for (int j = 0; j < sys.n; ++j) {
                const double rhs = eval_B(ctx, bundle, j, x, t) + eval_D(ctx, u, j, x, t) +
                                   eval_F(ctx, sys.f, j, x, t);
                w = std::max(w, std::abs(u.value(j, x, t) - rhs));
            }
        }
        worst[it] = w;
    });
    double r = 0.0;
    for (double w : worst) r = std::max(r, w);
    return r;
}

}  // namespace detail

/// Solve the initial-boundary value problem on the half strip by slab-wise
/// Picard iteration of the characteristic integral system.
inline SolutionBundle solve_ibvp(const HyperbolicSystem& sys, const BoundaryOperator& bc,
                                 const InitialData& phi, double T_end, SolveConfig cfg = {},
                                 const GridFunction* warm_start = nullptr) {
    if (sys.domain.kind != TimeDomain::Kind::HalfStrip)
        throw Error("solve_ibvp expects a HalfStrip domain");
    validate_boundary(sys, bc);
    const double T = sys.domain.start;
    if (T_end <= T) throw Error("T_end must exceed the initial time");

    OperatorContext ctx(sys, cfg.order_l, cfg.panels);
    GridFunction u(sys.n, cfg.nx, cfg.nt, T, T_end, false, cfg.interp);
    u.fill([&](int c, double x, double) { return phi(c, x); });
    {
        // initial iterate: pure transport of the S-data (exact when b = 0)
        std::vector<std::vector<double>> init_table;
        std::optional<InitialData> phi0 = phi;
        const BoundaryBundle bundle0 = detail::make_bundle(sys, bc, phi0, u, init_table);
        u = apply_B(ctx, bundle0, u);
    }
    if (warm_start) {
        const double w0 = warm_start->t0();
        const double w1 = warm_start->t_at(warm_start->nt() - 1);
        u.fill([&](int c, double x, double t) {
            return warm_start->value(c, x, std::clamp(t, w0, w1));
        });
        for (int j = 0; j < sys.n; ++j)  // row 0 must stay the initial data
            for (int ix = 0; ix < u.nx(); ++ix) u.at(j, ix, 0) = phi(j, u.x_at(ix));
    }

    const GridFunction Ff = apply_F(ctx, sys.f, u);
    const double slab_w =
        cfg.slab_width > 0 ? cfg.slab_width : 0.9 * detail::min_transit_time(sys);
    const int rows_per_slab = std::max(1, (int)std::floor(slab_w / u.ht()));

    SolutionBundle out{std::move(u)};
    GridFunction& U = out.u;
    std::optional<InitialData> phi_opt = phi;
    std::vector<std::vector<double>> table;

    int slab_index = 0;
    for (int row0 = 1; row0 < cfg.nt; row0 += rows_per_slab, ++slab_index) {
        const int row1 = std::min(cfg.nt - 1, row0 + rows_per_slab - 1);
        // Iterate two halo rows past the slab top: the interpolation stencils
        // of D and the lateral table reach that far, and leaving them at the
        // initial iterate would pollute the top row by O(h).  The halo rows
        // are re-solved as regular rows of the next slab.
        const int top = std::min(cfg.nt - 1, row1 + 2);
        const int rows = top - row0 + 1;
        const std::vector<double> backup(U.raw());
        double relax = cfg.relax;
        bool slab_ok = false;
        SlabLog log;
        log.index = slab_index;

        for (int attempt = 0; attempt < 3 && !slab_ok; ++attempt, relax *= 0.5) {
            if (attempt > 0) U.raw() = backup;
            double prev_change = 0.0;
            int iter = 0;
            for (; iter < cfg.max_iterations; ++iter) {
                BoundaryBundle bundle = detail::make_bundle(sys, bc, phi_opt, U, table);
                std::vector<double> fresh((size_t)sys.n * U.nx() * rows);
                parallel_for((long)rows * U.nx(), [&](long idx) {
                    const int it = row0 + (int)(idx / U.nx());
                    const int ix = (int)(idx % U.nx());
                    const double x = U.x_at(ix), t = U.t_at(it);
                    for (int j = 0; j < sys.n; ++j) {
                        const double v = eval_B(ctx, bundle, j, x, t) + eval_D(ctx, U, j, x, t) +
                                         Ff.at(j, ix, it);
                        fresh[((size_t)j * rows + (it - row0)) * U.nx() + ix] = v;
                    }
                });
                double change = 0.0;
                for (int j = 0; j < sys.n; ++j)
                    for (int it = row0; it <= top; ++it)
                        for (int ix = 0; ix < U.nx(); ++ix) {
                            double& cur = U.at(j, ix, it);
                            const double v =
                                fresh[((size_t)j * rows + (it - row0)) * U.nx() + ix];
                            const double next = relax * v + (1.0 - relax) * cur;
                            change = std::max(change, std::abs(next - cur));
                            cur = next;
                        }
                out.iterations++;
                log.contraction_ratio = prev_change > 0 ? change / prev_change : 0.0;
                log.final_change = change;
                if (!std::isfinite(change) || (iter > 3 && log.contraction_ratio > 1.5)) break;
                if (change <= cfg.tol * relax) {
                    slab_ok = true;
                    break;
                }
                prev_change = change;
            }
            log.iterations = iter + 1;
            log.relax_used = relax;
        }
        // All-lateral bookkeeping: does the slab still see the initial line?
        log.all_lateral_exits = true;
        for (int j = 0; j < sys.n && log.all_lateral_exits; ++j)
            for (int it = row0; it <= row1 && log.all_lateral_exits; ++it)
                for (int ix = 0; ix < U.nx(); ix += std::max(1, U.nx() / 16))
                    if (ctx.plan(j, U.x_at(ix), U.t_at(it))->exit.kind !=
                        ExitPoint::Kind::Lateral) {
                        log.all_lateral_exits = false;
                        break;
                    }
        if (log.all_lateral_exits && out.first_lateral_slab < 0)
            out.first_lateral_slab = slab_index;
        out.slabs.push_back(log);
        if (!slab_ok) {
            out.converged = false;
            out.message = "slab " + std::to_string(slab_index) +
                          " did not converge; last contraction ratio " +
                          std::to_string(log.contraction_ratio);
            return out;
        }
    }
    out.residual = detail::shifted_residual(ctx, bc, phi_opt, U, cfg.residual_stride);
    return out;
}

/// Solve the time-periodic problem on the strip by fixed-point iteration of
/// the full-period map on a wrap-around grid.
inline SolutionBundle solve_periodic_strip(const HyperbolicSystem& sys, const BoundaryOperator& bc,
                                           SolveConfig cfg = {},
                                           const GridFunction* initial = nullptr) {
    if (sys.domain.kind != TimeDomain::Kind::PeriodicStrip)
        throw Error("solve_periodic_strip expects a PeriodicStrip domain");
    validate_boundary(sys, bc);

    OperatorContext ctx(sys, cfg.order_l, cfg.panels);
    GridFunction u0 = GridFunction(sys.n, cfg.nx, cfg.nt, 0.0, two_pi, true, cfg.interp);
    if (initial) u0 = *initial;

    SolutionBundle out{u0};
    GridFunction& U = out.u;
    const GridFunction Ff = apply_F(ctx, sys.f, U);
    std::vector<std::vector<double>> table;
    std::optional<InitialData> no_phi;

    double relax = cfg.relax;
    for (int attempt = 0; attempt < 3; ++attempt, relax *= 0.5) {
        if (attempt > 0) U = u0;
        double prev_change = 0.0, ratio = 0.0;
        bool diverged = false;
        for (int iter = 0; iter < cfg.max_iterations; ++iter) {
            BoundaryBundle bundle = detail::make_bundle(sys, bc, no_phi, U, table);
            GridFunction fresh = apply_B(ctx, bundle, U);
            fresh.axpy(1.0, apply_D(ctx, U)).axpy(1.0, Ff);
            double change = 0.0;
            for (size_t i = 0; i < U.raw().size(); ++i) {
                const double next = relax * fresh.raw()[i] + (1 - relax) * U.raw()[i];
                change = std::max(change, std::abs(next - U.raw()[i]));
                U.raw()[i] = next;
            }
            out.iterations++;
            ratio = prev_change > 0 ? change / prev_change : 0.0;
            out.spectral_radius = ratio;
            if (!std::isfinite(change) || change > 1e8) {
                diverged = true;
                break;
            }
            if (change <= cfg.tol * relax) {
                out.converged = true;
                out.residual = detail::shifted_residual(ctx, bc, no_phi, U, cfg.residual_stride);
                return out;
            }
            if (iter > 5 && ratio > 1.02) {
                diverged = true;
                break;
            }
            prev_change = change;
        }
        if (!diverged) break;  // ran out of iterations while still contracting
    }
    out.converged = false;
    out.message = "periodic iteration did not converge; contraction-ratio estimate " +
                  std::to_string(out.spectral_radius);
    return out;
}

// ---------------------------------------------------------------------------
// Dissipative contraction condition
// ---------------------------------------------------------------------------

enum class ContractionReading {
    JacobianRowSum,  // sum_k |d h_j / d z_k|, the natural reading
    HessianRowSum    // sum_k |d_k grad h_j|, the alternative literal reading
};

struct ContractionMargins {
    // margin[j][l] = 1 - sup weight * sup Jacobian row sum; pass iff all > 0.
    std::vector<std::vector<double>> margin;
    bool pass = true;
};

inline ContractionMargins contraction_check(const HyperbolicSystem& sys,
                                            const DissipativeNonlinear& bc, int r,
                                            const std::vector<std::pair<double, double>>& z_box,
                                            int grid_samples = 24, int z_samples = 7,
                                            ContractionReading reading =
                                                ContractionReading::JacobianRowSum) {
    if ((int)z_box.size() != sys.n) throw Error("z_box needs one interval per component");
    // sup over z of the Jacobian row sums, by tensor sampling for small n and
    // random sampling otherwise.
    std::vector<double> row_sup(sys.n, 0.0);
    std::vector<std::vector<double>> zpts;
    if (sys.n <= 3) {
        std::vector<int> idx(sys.n, 0);
        for (;;) {
            std::vector<double> z(sys.n);
            for (int k = 0; k < sys.n; ++k)
                z[k] = z_box[k].first +
                       (z_box[k].second - z_box[k].first) * idx[k] / (z_samples - 1.0);
            zpts.push_back(z);
            int d = 0;
            while (d < sys.n && ++idx[d] == z_samples) idx[d++] = 0;
            if (d == sys.n) break;
        }
    } else {
        std::mt19937 rng(12345);
        for (int s = 0; s < 500; ++s) {
            std::vector<double> z(sys.n);
            for (int k = 0; k < sys.n; ++k) {
                std::uniform_real_distribution<double> dist(z_box[k].first, z_box[k].second);
                z[k] = dist(rng);
            }
            zpts.push_back(z);
        }
    }
    const double eps = 1e-6;
    for (const auto& z : zpts) {
        for (int j = 0; j < sys.n; ++j) {
            double rs = 0.0;
            for (int k = 0; k < sys.n; ++k) {
                auto zp = z, zm = z;
                zp[k] += eps;
                zm[k] -= eps;
                if (reading == ContractionReading::JacobianRowSum) {
                    const double d = (bc.h[j](zp) - bc.h[j](zm)) / (2 * eps);
                    if (!std::isfinite(d)) throw Error("Jacobian finite differences failed");
                    rs += std::abs(d);
                } else {
                    // norm of the k-derivative of grad h_j
                    double norm2 = 0.0;
                    for (int i = 0; i < sys.n; ++i) {
                        auto zpp = zp, zpm = zp, zmp = zm, zmm = zm;
                        zpp[i] += eps;
                        zpm[i] -= eps;
                        zmp[i] += eps;
                        zmm[i] -= eps;
                        const double d2 = ((bc.h[j](zpp) - bc.h[j](zpm)) -
                                           (bc.h[j](zmp) - bc.h[j](zmm))) /
                                          (4 * eps * eps);
                        norm2 += d2 * d2;
                    }
                    rs += std::sqrt(norm2);
                }
            }
            row_sup[j] = std::max(row_sup[j], rs);
        }
    }

    ContractionMargins cm;
    cm.margin.assign(sys.n, std::vector<double>(r + 1, 0.0));
    const double t_lo = 0.0, t_hi = two_pi;
    for (int l = 0; l <= r; ++l) {
        OperatorContext ctx(sys, l, 16);
        for (int j = 0; j < sys.n; ++j) {
            double wsup = 0.0;
            for (int it = 0; it <= grid_samples; ++it)
                for (int ix = 0; ix <= grid_samples; ++ix) {
                    const double x = (double)ix / grid_samples;
                    const double t = t_lo + (t_hi - t_lo) * it / grid_samples;
                    wsup = std::max(wsup, ctx.plan(j, x, t)->c_exit);
                }
            cm.margin[j][l] = 1.0 - wsup * row_sup[j];
            if (cm.margin[j][l] <= 0.0) cm.pass = false;
        }
    }
    return cm;
}

// ---------------------------------------------------------------------------
// Volterra renewal marching for the age-structured boundary trace
// ---------------------------------------------------------------------------

struct BoundaryTrace {
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<double> v;

    double operator()(double t) const {
        const double f = (t - t0) / dt;
        const int i = std::clamp((int)std::floor(f), 0, (int)v.size() - 2);
        const double s = f - i;
        return (1 - s) * v[i] + s * v[i + 1];
    }
};

/// March the birth trace u(0,t) of the age model through its Volterra renewal
/// integral. Cells are integrated with one-sided endpoint limits so that
/// node-aligned jumps of the data do not pollute the quadrature.
inline BoundaryTrace renewal_boundary(const PopulationModel& pop,
                                      const std::function<double(double)>& phi, double T_end,
                                      int steps_per_unit = 512) {
    BoundaryTrace tr;
    tr.t0 = 0.0;
    tr.dt = 1.0 / steps_per_unit;
    const int nt = (int)std::llround(T_end * steps_per_unit) + 1;
    const int nx = steps_per_unit;  // x-cells of width dt over [0,1]
    tr.v.resize(nt);
    const double dt = tr.dt, shift = 1e-9 * dt;
    for (int i = 0; i < nt; ++i) {
        const double t = i * dt;
        auto density = [&](double x, double vt_guess) -> double {
            if (x < t - 1e-15)
                return std::exp(-pop.mu * x) *
                       (x <= shift ? vt_guess : tr.v[(int)std::llround((t - x) / dt)]
                        );
            return std::exp(-pop.mu * t) * phi(x - t);
        };
        // scalar fixed point: the x=0 endpoint carries the unknown v(t)
        double guess = i > 0 ? tr.v[i - 1] : 0.0;
        for (int fp = 0; fp < 50; ++fp) {
            double I = 0.0;
            for (int k = 0; k < nx; ++k) {
                const double xl = k * dt + shift, xr = (k + 1) * dt - shift;
                I += 0.5 * dt *
                     (pop.gamma(xl) * density(xl, guess) + pop.gamma(xr) * density(xr, guess));
            }
            const double next = pop.h(I);
            if (std::abs(next - guess) <= 1e-14 * (1 + std::abs(next))) {
                guess = next;
                break;
            }
            guess = next;
        }
        tr.v[i] = guess;
    }
    return tr;
}

}  // namespace hyper1d
