#pragma once

#include <memory>
#include <mutex>
#include <unordered_map>

#include "hyper1d/boundary.hpp"
#include "hyper1d/characteristics.hpp"
#include "hyper1d/grid_function.hpp"

namespace hyper1d {

/// Per-anchor quadrature data for the characteristic integrals. Everything
/// here depends only on the system and the anchor, never on the iterate, so
/// plans are memoized aggressively.
struct AnchorPlan {
    ExitPoint exit;
    double c_exit = 1.0;  // c_j^{(l)}(x_j, x, t)

    struct Node {
        double xi, omega;
        double dw;                  // d_j^{(l)}(xi,x,t) * quadrature weight, oriented x_j -> x
        std::vector<double> b_off;  // b_jk(xi, omega) for k != j, in k order
    };
    std::vector<Node> nodes;

    // Secondary exit data for the single-integral DB form (built on demand).
    struct DbNode {
        std::vector<ExitPoint> exits;  // per k != j
        std::vector<double> ck;        // c_k^{(l)}(x_k, xi, omega)
    };
    std::vector<DbNode> db;
    bool has_db = false;
};

/// Shared state for operator application: system, tracer, order l, and the
/// quadrature resolution.
class OperatorContext {
  public:
    explicit OperatorContext(const HyperbolicSystem& sys, int order_l = 0, int panels = 32,
                             TraceSettings ts = {})
        : sys_(&sys), tracer_(sys, ts), order_l_(order_l), panels_(panels) {
        if (order_l < 0) throw Error("weight order l must be >= 0");
        if (panels < 2) throw Error("quadrature needs >= 2 panels");
    }

    const HyperbolicSystem& sys() const { return *sys_; }
    const Tracer& tracer() const { return tracer_; }
    int order_l() const { return order_l_; }
    int panels() const { return panels_; }

    std::shared_ptr<const AnchorPlan> plan(int j, double x, double t, bool with_db = false) const {
        const Key key{j, bits(x), bits(t)};
        {
            std::lock_guard<std::mutex> lk(mu_);
            auto it = cache_.find(key);
            if (it != cache_.end() && (!with_db || it->second->has_db)) return it->second;
        }
        auto p = std::make_shared<AnchorPlan>(build_plan(j, x, t, with_db));
        std::lock_guard<std::mutex> lk(mu_);
        auto& slot = cache_[key];
        if (!slot || (with_db && !slot->has_db)) slot = std::move(p);
        return slot;
    }

    void clear_cache() const {
        std::lock_guard<std::mutex> lk(mu_);
        cache_.clear();
        tracer_.clear_cache();
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
    static uint64_t bits(double v) {
        uint64_t b;
        std::memcpy(&b, &v, sizeof b);
        return b;
    }

    AnchorPlan build_plan(int j, double x, double t, bool with_db) const {
        AnchorPlan plan;
        const auto path = tracer_.trace(j, x, t);
        plan.exit = tracer_.exit_point(j, x, t);
        const double xe = plan.exit.x;

        const bool diag_zero = sys_->b[j][j].is_zero() &&
                               (order_l_ == 0 || sys_->a[j].time_independent());

        // Quadrature nodes feed only D and F; when row j has neither coupling
        // nor a source, the plan reduces to the exit point and its weight.
        bool needs_nodes = !sys_->f[j].is_zero();
        for (int k = 0; k < sys_->n && !needs_nodes; ++k)
            if (k != j && !sys_->b[j][k].is_zero()) needs_nodes = true;
        if (!needs_nodes && !with_db) {
            plan.c_exit =
                diag_zero ? 1.0 : std::exp(tracer_.weight_integral(*path, j, order_l_, x, xe));
            return plan;
        }

        // Quadrature points over the oriented segment [x_j, x], panels split
        // at coefficient breakpoints.
        const auto seg = split_segment(xe, x, sys_->diag_breakpoints(j));
        const double total = std::abs(x - xe);
        struct RawNode {
            double xi, w;  // w carries the oriented panel scaling
        };
        std::vector<RawNode> raw;
        if (total > 1e-15) {
            for (size_t s = 0; s + 1 < seg.size(); ++s) {
                const double sa = seg[s], sb = seg[s + 1];
                const int np = std::max(1, (int)std::ceil(panels_ * std::abs(sb - sa) / total));
                const double hp = (sb - sa) / np;
                for (int p = 0; p < np; ++p) {
                    const double mid = sa + (p + 0.5) * hp, half = 0.5 * hp;
                    for (int q = 0; q < 4; ++q)
                        raw.push_back({mid + half * GaussLegendre<4>::nodes[q],
                                       half * GaussLegendre<4>::weights[q]});
                }
            }
        }

        // Cumulative weight exponent from the anchor x toward the exit:
        // E(xi) = int_x^xi (b_jj/a_j - l dt_a/a_j^2) along the path.
        auto g = [&](double eta) {
            const double w = path->omega(eta);
            const double aj = sys_->a[j](eta, w);
            double v = sys_->b[j][j](eta, w) / aj;
            if (order_l_ > 0) v -= order_l_ * sys_->dt_a(j, eta, w) / (aj * aj);
            return v;
        };
        double cum = 0.0, prev = x;
        plan.nodes.reserve(raw.size());
        for (auto it = raw.rbegin(); it != raw.rend(); ++it) {  // walk from x toward x_j
            const double xi = it->xi;
            if (!diag_zero) cum += gl_integrate<4>(g, prev, xi);
            prev = xi;
            const double om = path->omega(xi);
            AnchorPlan::Node node;
            node.xi = xi;
            node.omega = om;
            node.dw = std::exp(cum) / sys_->a[j](xi, om) * it->w;
            node.b_off.reserve(sys_->n - 1);
            for (int k = 0; k < sys_->n; ++k)
                if (k != j) node.b_off.push_back(sys_->b[j][k](xi, om));
            plan.nodes.push_back(std::move(node));
        }
        std::reverse(plan.nodes.begin(), plan.nodes.end());  // back to x_j -> x order
        if (!diag_zero) cum += gl_integrate<4>(g, prev, xe);
        plan.c_exit = diag_zero ? 1.0 : std::exp(cum);

        if (with_db) {
            plan.db.resize(plan.nodes.size());
            for (size_t q = 0; q < plan.nodes.size(); ++q) {
                const auto& node = plan.nodes[q];
                auto& dbn = plan.db[q];
                for (int k = 0; k < sys_->n; ++k) {
                    if (k == j) continue;
                    ExitPoint ek = tracer_.exit_point(k, node.xi, node.omega);
                    auto [ck, dk] = tracer_.weight(k, order_l_, ek.x, node.xi, node.omega);
                    (void)dk;
                    dbn.exits.push_back(ek);
                    dbn.ck.push_back(ck);
                }
            }
            plan.has_db = true;
        }
        return plan;
    }

    const HyperbolicSystem* sys_;
    mutable Tracer tracer_;
    int order_l_;
    int panels_;
    mutable std::mutex mu_;
    mutable std::unordered_map<Key, std::shared_ptr<const AnchorPlan>, KeyHash> cache_;
};

// ---------------------------------------------------------------------------
// Nodewise operator evaluation
// ---------------------------------------------------------------------------

/// (Bu)_j(x,t) = c_j(x_j,x,t) * boundary value at (x_j, omega_j(x_j;x,t)).
inline double eval_B(const OperatorContext& ctx, const BoundaryBundle& bundle, int j, double x,
                     double t) {
    const auto p = ctx.plan(j, x, t);
    if (p->exit.kind == ExitPoint::Kind::Initial) {
        if (!bundle.initial)
            throw Error("characteristic exits through the initial line but no initial data given");
        return p->c_exit * (*bundle.initial)(j, p->exit.x);
    }
    return p->c_exit * bundle.lateral(j, p->exit.tau);
}

/// (Du)_j(x,t) = -int_{x_j}^x d_j(xi,x,t) sum_{k!=j} b_jk u_k(xi,omega) dxi.
inline double eval_D(const OperatorContext& ctx, const GridFunction& u, int j, double x,
                     double t) {
    const auto p = ctx.plan(j, x, t);
    double acc = 0.0;
    const int n = ctx.sys().n;
    for (const auto& node : p->nodes) {
        double s = 0.0;
        int kk = 0;
        for (int k = 0; k < n; ++k) {
            if (k == j) continue;
            const double bjk = node.b_off[kk++];
            if (bjk != 0.0) s += bjk * u.value(k, node.xi, node.omega);
        }
        acc += node.dw * s;
    }
    return -acc;
}

/// (Ff)_j(x,t) = int_{x_j}^x d_j(xi,x,t) f_j(xi,omega) dxi.
inline double eval_F(const OperatorContext& ctx, const std::vector<CoefficientField>& f, int j,
                     double x, double t) {
    if (f[j].is_zero()) return 0.0;
    const auto p = ctx.plan(j, x, t);
    double acc = 0.0;
    for (const auto& node : p->nodes) acc += node.dw * f[j](node.xi, node.omega);
    return acc;
}

/// Single-integral form of D(B .): boundary data is shifted through the
/// secondary characteristic exits cached in the plan.
inline double eval_DB(const OperatorContext& ctx, const BoundaryBundle& bundle, int j, double x,
                      double t) {
    const auto p = ctx.plan(j, x, t, /*with_db=*/true);
    double acc = 0.0;
    const int n = ctx.sys().n;
    for (size_t q = 0; q < p->nodes.size(); ++q) {
        const auto& node = p->nodes[q];
        const auto& dbn = p->db[q];
        double s = 0.0;
        int kk = 0;
        for (int k = 0; k < n; ++k) {
            if (k == j) continue;
            const double bjk = node.b_off[kk];
            if (bjk != 0.0) {
                const auto& ek = dbn.exits[kk];
                double val;
                if (ek.kind == ExitPoint::Kind::Initial) {
                    if (!bundle.initial) throw Error("DB hit the initial line without initial data");
                    val = (*bundle.initial)(k, ek.x);
                } else {
                    val = bundle.lateral(k, ek.tau);
                }
                s += bjk * dbn.ck[kk] * val;
            }
            ++kk;
        }
        acc += node.dw * s;
    }
    return -acc;
}

// ---------------------------------------------------------------------------
// Grid-level application
// ---------------------------------------------------------------------------

namespace detail {
template <class NodeFn>
GridFunction grid_apply(const GridFunction& like, NodeFn&& fn) {
    GridFunction out(like.components(), like.nx(), like.nt(), like.t0(), like.t1(),
                     like.periodic(), like.interp());
    parallel_for((long)like.nt() * like.nx(), [&](long idx) {
        const int it = (int)(idx / like.nx()), ix = (int)(idx % like.nx());
        for (int c = 0; c < like.components(); ++c)
            out.at(c, ix, it) = fn(c, like.x_at(ix), like.t_at(it));
    });
    return out;
}
}  // namespace detail

inline GridFunction apply_B(const OperatorContext& ctx, const BoundaryBundle& bundle,
                            const GridFunction& like) {
    return detail::grid_apply(like, [&](int j, double x, double t) {
        return eval_B(ctx, bundle, j, x, t);
    });
}

inline GridFunction apply_D(const OperatorContext& ctx, const GridFunction& u) {
    bool all_zero = true;
    for (int j = 0; j < ctx.sys().n && all_zero; ++j)
        for (int k = 0; k < ctx.sys().n; ++k)
            if (j != k && !ctx.sys().b[j][k].is_zero()) {
                all_zero = false;
                break;
            }
    if (all_zero) {
        GridFunction out(u.components(), u.nx(), u.nt(), u.t0(), u.t1(), u.periodic(), u.interp());
        return out;
    }
    return detail::grid_apply(u, [&](int j, double x, double t) {
        return eval_D(ctx, u, j, x, t);
    });
}

inline GridFunction apply_F(const OperatorContext& ctx, const std::vector<CoefficientField>& f,
                            const GridFunction& like) {
    return detail::grid_apply(like, [&](int j, double x, double t) {
        return eval_F(ctx, f, j, x, t);
    });
}

inline GridFunction apply_DB(const OperatorContext& ctx, const BoundaryBundle& bundle,
                             const GridFunction& like) {
    return detail::grid_apply(like, [&](int j, double x, double t) {
        return eval_DB(ctx, bundle, j, x, t);
    });
}

enum class D2Mode { Composed, Reordered };

/// D^2 u, either as the composition D(Du) (default) or through the reordered
/// double integral used as the independent oracle.
inline GridFunction apply_D2(const OperatorContext& ctx, const GridFunction& u,
                             D2Mode mode = D2Mode::Composed) {
    if (mode == D2Mode::Composed) {
        GridFunction inner = apply_D(ctx, u);
        return apply_D(ctx, inner);
    }
    const auto& sys = ctx.sys();
    const Tracer& tr = ctx.tracer();
    return detail::grid_apply(u, [&](int j, double x, double t) {
        const auto pj = ctx.plan(j, x, t);
        double acc = 0.0;
        // sum_{k!=j} int_{x_j}^x d_j(xi,x,t) b_jk(xi,omega_j) (Du)_k(xi,omega_j) dxi
        // evaluated without the intermediate grid: the inner (Du)_k is computed
        // by its own quadrature at each outer node.
        for (const auto& node : pj->nodes) {
            double s = 0.0;
            int kk = 0;
            for (int k = 0; k < sys.n; ++k) {
                if (k == j) continue;
                const double bjk = node.b_off[kk++];
                if (bjk == 0.0) continue;
                // inner integral for component k anchored at (xi, omega_j)
                const auto pk = ctx.plan(k, node.xi, node.omega);
                double inner = 0.0;
                for (const auto& nk : pk->nodes) {
                    double si = 0.0;
                    int ii = 0;
                    for (int i = 0; i < sys.n; ++i) {
                        if (i == k) continue;
                        const double bki = nk.b_off[ii++];
                        if (bki != 0.0) si += bki * u.value(i, nk.xi, nk.omega);
                    }
                    inner += nk.dw * si;
                }
                s += bjk * (-inner);
            }
            acc += node.dw * s;
        }
        (void)tr;
        return -acc;
    });
}

// ---------------------------------------------------------------------------
// S and the population composition BRB
// ---------------------------------------------------------------------------

/// Build the boundary data bundle of the operator S for the given boundary
/// operator, initial data, and current iterate u.
inline BoundaryBundle apply_S(const HyperbolicSystem& sys, const BoundaryOperator& bc,
                              const std::optional<std::function<double(int, double)>>& phi,
                              const GridFunction& u) {
    validate_boundary(sys, bc);
    BoundaryBundle bundle;
    bundle.lateral = [&sys, &bc, &u](int j, double tau) { return eval_R(sys, bc, u, j, tau); };
    if (sys.domain.kind == TimeDomain::Kind::HalfStrip) {
        if (!phi) throw Error("HalfStrip problems require initial data phi");
        bundle.initial = *phi;
    }
    return bundle;
}

/// Age-model parameters for the renewal composition u = BRBu.
struct PopulationModel {
    double mu = 0.0;
    std::function<double(double)> gamma;
    std::function<double(double)> h;
};

/// (BRBu)(x,t) = e^{-mu x} h( int_{t-x-1}^{t-x} gamma(t-x-tau) e^{mu(x-t+tau)}
/// u(0,tau) dtau ), evaluated over the stored boundary history.
inline double eval_BRB(const PopulationModel& pop, const std::function<double(double)>& history,
                       double x, double t, int panels = 64) {
    const double lo = t - x - 1.0, hi = t - x;
    auto integrand = [&](double tau) {
        return pop.gamma(t - x - tau) * std::exp(pop.mu * (x - t + tau)) * history(tau);
    };
    const double I = composite_gl<8>(integrand, lo, hi, {}, panels);
    return std::exp(-pop.mu * x) * pop.h(I);
}

}  // namespace hyper1d
