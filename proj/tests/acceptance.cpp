// Acceptance gate: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Every quantitative claim is checked against an oracle that
// is independent of the code path under test (closed forms, manufactured
// solutions, renewal marching, or exact algebraic identities).

#include <cmath>
#include <complex>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "fixtures.hpp"
#include "hyper1d/hyper1d.hpp"

namespace h1 = hyper1d;
using h1::cplx;

namespace {

struct Check {
    std::ostringstream bad;
    void that(bool ok, const std::string& what) {
        if (!ok) bad << (bad.tellp() > 0 ? "; " : "") << what;
    }
    std::string result() { return bad.str(); }
};

std::string num(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

// ---------------------------------------------------------------------------
// 1. Pure transport reproduces the closed-form travelling wave.
// ---------------------------------------------------------------------------
std::string criterion_transport() {
    const auto sys = fx::transport();
    h1::ClassicalTrace bc;
    bc.h.push_back([](double t) { return std::sin(t); });
    auto phi = [](int, double x) { return std::sin(-x); };

    auto solve_err = [&](int nx, int nt) {
        h1::SolveConfig cfg;
        cfg.nx = nx;
        cfg.nt = nt;
        cfg.tol = 1e-12;
        cfg.interp = h1::InterpOrder::Bicubic;
        const auto b = h1::solve_ibvp(sys, bc, phi, 2.0, cfg);
        if (!b.converged) throw h1::Error("transport solve failed: " + b.message);
        double err = 0.0;
        for (int it = 0; it < b.u.nt(); ++it)
            for (int ix = 0; ix < b.u.nx(); ++ix)
                err = std::max(err, std::abs(b.u.at(0, ix, it) -
                                             std::sin(b.u.t_at(it) - b.u.x_at(ix))));
        return err;
    };

    const double err_fine = solve_err(201, 201);
    const double err_coarse = solve_err(101, 101);
    Check c;
    c.that(err_fine <= 1e-6, "fine-grid error " + num(err_fine) + " > 1e-6");
    // transport is handled exactly up to roundoff, so the refinement ratio is
    // only meaningful when the error sits above the rounding floor
    c.that(err_fine <= 1e-12 || err_coarse / err_fine >= 3.0,
           "refinement ratio " + num(err_coarse / err_fine) + " < 3");
    return c.result();
}

// ---------------------------------------------------------------------------
// 2. Integral-identity certification on an exactly known solution.
// ---------------------------------------------------------------------------
std::string criterion_identities() {
    constexpr double kTol = 1e-8;  // solver tolerance the certificate is tied to
    Check c;

    auto residuals = [&](const h1::HyperbolicSystem& sys, const fx::Manufactured& m,
                         const std::string& label) {
        // exact solution tabulated on a fine verification grid; bicubic
        // interpolation error ~ h^4 stays well below the certificate level
        h1::GridFunction ug(2, 201, 201, 0.0, 2.0, false, h1::InterpOrder::Bicubic);
        ug.fill([&](int j, double x, double t) {
            return j == 0 ? fx::Manufactured::u1(x, t) : fx::Manufactured::u2(x, t);
        });
        h1::OperatorContext ctx(sys, 0, 16);
        const h1::BoundaryOperator bc = m.trace;
        std::optional<h1::InitialData> phi = m.phi;
        const auto bundle = h1::apply_S(sys, bc, phi, ug);
        const auto Du = h1::apply_D(ctx, ug);
        const auto Ff = h1::apply_F(ctx, sys.f, ug);

        double r_abstract = 0.0, r_io = 0.0;
        for (int i = 0; i < 24; ++i)
            for (int k = 0; k < 24; ++k) {
                const double x = (i + 0.37) / 24.0;
                const double t = 0.08 + 1.84 * k / 23.0;
                for (int j = 0; j < 2; ++j) {
                    const double u = j == 0 ? fx::Manufactured::u1(x, t)
                                            : fx::Manufactured::u2(x, t);
                    const double Bu = h1::eval_B(ctx, bundle, j, x, t);
                    const double Fv = h1::eval_F(ctx, sys.f, j, x, t);
                    // u = BSu + Du + Ff
                    r_abstract = std::max(
                        r_abstract, std::abs(u - (Bu + h1::eval_D(ctx, ug, j, x, t) + Fv)));
                    // u = BSu + (DBS + D^2)u + (I + D)Ff
                    const double rhs = Bu + h1::eval_DB(ctx, bundle, j, x, t) +
                                       h1::eval_D(ctx, Du, j, x, t) + Fv +
                                       h1::eval_D(ctx, Ff, j, x, t);
                    r_io = std::max(r_io, std::abs(u - rhs));
                }
            }
        c.that(r_abstract <= 2 * kTol,
               label + " first-form residual " + num(r_abstract) + " > 2e-8");
        c.that(r_io <= 2 * kTol, label + " second-form residual " + num(r_io) + " > 2e-8");
    };

    fx::Manufactured dec = fx::manufactured_coupled(0.0);
    dec.sys = fx::coupled(0.0);  // genuinely zero b and f entries
    residuals(dec.sys, dec, "decoupled");

    const fx::Manufactured cpl = fx::manufactured_coupled(0.4);
    residuals(cpl.sys, cpl, "coupled");
    return c.result();
}

// ---------------------------------------------------------------------------
// 3. Dynamic smoothing for a prescribed boundary trace.
// ---------------------------------------------------------------------------
std::string criterion_smoothing() {
    const auto sys = fx::transport();
    h1::ClassicalTrace bc;
    bc.h.push_back([](double t) { return 0.5 * std::cos(t); });  // matches phi at the corner
    auto phi = [](int, double x) { return std::abs(x - 0.5); };

    auto solve = [&](int nx, int nt, double T_end) {
        h1::SolveConfig cfg;
        cfg.nx = nx;
        cfg.nt = nt;
        cfg.tol = 1e-11;
        cfg.interp = h1::InterpOrder::Bicubic;
        auto b = h1::solve_ibvp(sys, bc, phi, T_end, cfg);
        if (!b.converged) throw h1::Error("smoothing solve failed: " + b.message);
        return b;
    };

    Check c;
    const auto prof = h1::regularity_profile([&](int nx, int nt) { return solve(nx, nt, 2.0).u; },
                                             101, 101, 1.0, 3, 2);
    c.that(prof.order.size() >= 2, "expected two unit windows");
    if (prof.order.size() >= 2) {
        c.that(prof.order[0] == 0,
               "first-window order " + std::to_string(prof.order[0]) + " != 0");
        c.that(prof.order[1] >= 2,
               "post-smoothing order " + std::to_string(prof.order[1]) + " < 2");
    }

    const auto bundle = solve(201, 201, 2.0);
    const auto track = h1::track_singularity(bundle, sys, 0.5, 0);
    c.that(track.truncated, "kink should leave through x = 1 before T_end");
    c.that(std::abs(track.exit_time - 0.5) <= 0.015,
           "exit time " + num(track.exit_time) + " not within 3% of 0.5");
    double jd_lo = 1e30, jd_hi = 0.0;
    for (size_t i = 0; i < track.times.size(); ++i) {
        if (track.times[i] < 0.05 || track.times[i] > 0.42) continue;
        jd_lo = std::min(jd_lo, std::abs(track.jump_du[0][i]));
        jd_hi = std::max(jd_hi, std::abs(track.jump_du[0][i]));
    }
    c.that(jd_lo >= 1.9 && jd_hi <= 2.1,
           "tracked derivative jump [" + num(jd_lo) + ", " + num(jd_hi) + "] leaves 2 +/- 5%");

    // after the kink has exited: the discrete kink amplitude of the row t=1.5
    // must sit at grid-noise level, pinned at 10 * hx
    const double hx = bundle.u.hx();
    const int it = (int)std::llround(1.5 / bundle.u.ht());
    double post = 0.0;
    for (int ix = 1; ix + 1 < bundle.u.nx(); ++ix)
        post = std::max(post, std::abs(bundle.u.at(0, ix + 1, it) - 2 * bundle.u.at(0, ix, it) +
                                       bundle.u.at(0, ix - 1, it)) /
                                  hx);
    c.that(post <= 10 * hx, "post-exit kink amplitude " + num(post) + " > " + num(10 * hx));

    // negative control: stop the run before the kink can exit
    const auto early = solve(201, 91, 0.45);
    const auto track2 = h1::track_singularity(early, sys, 0.5, 0);
    c.that(!track2.truncated, "negative control: kink must not exit before t = 0.45");
    const double last = track2.jump_du[0].empty() ? 0.0 : std::abs(track2.jump_du[0].back());
    c.that(std::abs(last - 2.0) <= 0.1,
           "negative control jump " + num(last) + " leaves 2 +/- 5%");
    return c.result();
}

// ---------------------------------------------------------------------------
// 4. Population model: steady state, smoothing, and the renewal oracle.
// ---------------------------------------------------------------------------
std::string criterion_population() {
    Check c;

    // steady state: gamma = 1, h = id, phi = 1 reproduces v = 1 exactly
    h1::PopulationModel steady{0.0, [](double) { return 1.0; }, [](double z) { return z; }};
    const auto vs = h1::renewal_boundary(steady, [](double) { return 1.0; }, 2.0, 512);
    double steady_err = 0.0;
    for (double v : vs.v) steady_err = std::max(steady_err, std::abs(v - 1.0));
    c.that(steady_err <= 1e-10, "steady-state error " + num(steady_err) + " > 1e-10");

    // discontinuous age profile, gamma = 1/2, h = id; compatible since
    // v(0) = (1/2)(0.5*1 + 0.5*3) = 1 = phi(0)
    h1::PopulationModel pop{0.0, [](double) { return 0.5; }, [](double z) { return z; }};
    auto phi0 = [](double x) {
        if (std::abs(x - 0.5) < 1e-12) return 2.0;  // node-averaged jump value
        return x < 0.5 ? 1.0 : 3.0;
    };

    const auto sys = fx::transport();
    h1::IntegralAge bc;
    bc.h = [](double z) { return z; };
    bc.gamma = [](double) { return 0.5; };
    auto phi = [&](int, double x) { return phi0(x); };

    auto solve = [&](int nx, int nt) {
        h1::SolveConfig cfg;
        cfg.nx = nx;
        cfg.nt = nt;
        cfg.tol = 1e-10;
        cfg.interp = h1::InterpOrder::Bicubic;
        auto b = h1::solve_ibvp(sys, bc, phi, 3.0, cfg);
        if (!b.converged) throw h1::Error("population solve failed: " + b.message);
        return b;
    };

    const auto prof = h1::regularity_profile([&](int nx, int nt) { return solve(nx, nt).u; },
                                             101, 301, 1.0, 3, 2);
    c.that(prof.order.size() >= 3, "expected three unit windows");
    if (prof.order.size() >= 3) {
        c.that(prof.order[0] == 0,
               "first-window order " + std::to_string(prof.order[0]) + " != 0");
        c.that(prof.order[2] >= 1,
               "window (2,3) order " + std::to_string(prof.order[2]) + " < 1");
    }

    // boundary trace against the independent renewal marcher; the solve grid
    // keeps hx = ht so the node-aligned jump stays on grid nodes
    const auto fine = solve(801, 2401);
    const auto oracle = h1::renewal_boundary(pop, phi0, 3.0, 2048);
    double trace_err = 0.0;
    for (int k = 1; k < 48; ++k) {
        const double t = k / 16.0;
        trace_err = std::max(trace_err, std::abs(fine.u.value(0, 0.0, t) - oracle(t)));
    }
    c.that(trace_err <= 1e-6, "boundary-trace mismatch " + num(trace_err) + " > 1e-6");
    return c.result();
}

// ---------------------------------------------------------------------------
// 5. Dissipative contraction margins and the matching periodic behaviour.
// ---------------------------------------------------------------------------
std::string criterion_contraction() {
    Check c;
    const std::vector<std::pair<double, double>> box(2, {-1.0, 1.0});

    const auto plain = fx::coupled(0.0, h1::TimeDomain::periodic());
    const auto cm1 = h1::contraction_check(plain, fx::cross_reflection(0.4), 0, box);
    for (int j = 0; j < 2; ++j)
        c.that(std::abs(cm1.margin[j][0] - 0.6) <= 1e-8,
               "plain margin " + num(cm1.margin[j][0]) + " != 0.6");

    const auto damped = fx::damped(-1.0, h1::TimeDomain::periodic());
    const double expect = 1.0 - std::exp(1.0) * 0.3;
    const auto cm2 = h1::contraction_check(damped, fx::cross_reflection(0.3), 0, box);
    for (int j = 0; j < 2; ++j)
        c.that(std::abs(cm2.margin[j][0] - expect) <= 1e-8,
               "damped margin " + num(cm2.margin[j][0]) + " != 1 - e*0.3");
    const auto cm3 = h1::contraction_check(damped, fx::cross_reflection(0.5), 0, box);
    c.that(!cm3.pass, "margin must fail for gain e * 0.5 > 1");

    // periodic solves follow the sign of the margin
    std::vector<h1::CoefficientField> f;
    f.push_back(h1::CoefficientField("0.1*sin(t)"));
    f.push_back(h1::CoefficientField("0.1*cos(t)"));
    h1::SolveConfig cfg;
    cfg.nx = 49;
    cfg.nt = 48;
    cfg.tol = 1e-8;
    cfg.max_iterations = 400;  // gain e*0.3 = 0.815 per sweep needs ~100 sweeps
    const auto good = h1::solve_periodic_strip(fx::damped(-1.0, h1::TimeDomain::periodic(), f),
                                               fx::reflection(0.3, 0.3), cfg);
    c.that(good.converged, "positive-margin periodic solve did not converge");
    const auto bad = h1::solve_periodic_strip(fx::damped(-1.0, h1::TimeDomain::periodic(), f),
                                              fx::reflection(0.5, 0.5), cfg);
    c.that(!bad.converged, "negative-margin periodic solve converged");
    return c.result();
}

// rhs modes matching the target u_hat_1 = g (1+x), u_hat_2 = g (2-x) for the
// counterflow system with reflections (1/2, 1/2)
h1::ModeRhs manufactured_rhs(int s, cplx g) {
    return [s, g](int j, double x) -> cplx {
        const cplx is(0.0, (double)s);
        return j == 0 ? g * (1.0 + is * (1.0 + x)) : g * (1.0 + is * (2.0 - x));
    };
}

// ---------------------------------------------------------------------------
// 6. Mode-wise isomorphism: torus bound, diagonal vs full, full recovery.
// ---------------------------------------------------------------------------
std::string criterion_isomorphism() {
    Check c;
    const auto sys = fx::coupled(0.0, h1::TimeDomain::periodic());
    const auto refl = fx::reflection(0.5, 0.5);  // rho0 * rho1 = 1/4
    const h1::ExponentProfiles prof(sys);

    const auto iso = h1::iso_margins(prof, refl, 64);
    c.that(std::abs(iso.torus_bound - 0.75) <= 1e-12,
           "torus bound " + num(iso.torus_bound) + " != 0.75");
    c.that(iso.min_margin >= 0.75 - 1e-12,
           "sampled margin " + num(iso.min_margin) + " dips below the torus bound");

    const int nx = 65;
    double diag_vs_full = 0.0;
    for (int s = -64; s <= 64; ++s) {
        const auto f = manufactured_rhs(s, cplx(0.3, -0.4));
        const auto d = h1::solve_mode_diagonal(prof, refl, s, f, nx);
        const auto fu = h1::solve_mode_full(sys, refl, s, f, nx);
        diag_vs_full = std::max(diag_vs_full, (d.u - fu.u).cwiseAbs().maxCoeff());
    }
    c.that(diag_vs_full <= 1e-10,
           "diagonal vs full discrepancy " + num(diag_vs_full) + " > 1e-10");

    // manufactured recovery through the assembled solver, measured in W^0
    const int S = 8;
    h1::FourierField f, exact;
    f.S_max = exact.S_max = S;
    f.n = exact.n = 2;
    f.nx = exact.nx = nx;
    f.hx = exact.hx = 1.0 / (nx - 1);
    f.modes.assign(2 * S + 1, Eigen::MatrixXcd::Zero(2, nx));
    exact.modes.assign(2 * S + 1, Eigen::MatrixXcd::Zero(2, nx));
    for (int s = -S; s <= S; ++s) {
        const cplx g = std::pow(0.5, std::abs(s)) * cplx(1.0, 0.25 * s);
        const auto rhs = manufactured_rhs(s, g);
        for (int i = 0; i < nx; ++i) {
            const double x = (double)i / (nx - 1);
            exact.mode(s)(0, i) = g * (1.0 + x);
            exact.mode(s)(1, i) = g * (2.0 - x);
            f.mode(s)(0, i) = rhs(0, x);
            f.mode(s)(1, i) = rhs(1, x);
        }
    }
    const auto sol = h1::fredholm_solve(sys, refl, f, nx, 1e-8);
    h1::FourierField diff = exact;
    for (int s = -S; s <= S; ++s) diff.mode(s) -= sol.u.mode(s);
    const double rel = h1::w_norm(diff, 0.0) / std::max(1.0, h1::w_norm(exact, 0.0));
    c.that(sol.report.solvable, "manufactured problem flagged unsolvable");
    c.that(rel <= 1e-8, "W^0 recovery error " + num(rel) + " > 1e-8");
    return c.result();
}

// ---------------------------------------------------------------------------
// 7. Index zero on the singular fixture, with stability under perturbation.
// ---------------------------------------------------------------------------
std::string criterion_index() {
    Check c;
    const auto sys = fx::coupled(0.0, h1::TimeDomain::periodic());
    const auto rep = h1::kernel_and_index(sys, fx::reflection(1.0, 1.0), 8, 65);
    c.that(rep.kernel_dim == 1, "kernel dim " + std::to_string(rep.kernel_dim) + " != 1");
    c.that(rep.coker_dim == 1, "cokernel dim " + std::to_string(rep.coker_dim) + " != 1");
    c.that(rep.index == 0, "index " + std::to_string(rep.index) + " != 0");
    c.that(rep.confident, "rank decision not confident");
    const auto& m0 = rep.modes[8];  // s = 0
    c.that(m0.nullity == 1, "s=0 nullity != 1");
    c.that(m0.gap_ratio >= 1e6, "s=0 SVD gap " + num(m0.gap_ratio) + " < 1e6");

    std::mt19937 rng(42);
    std::uniform_real_distribution<double> dist(-1e-2, 1e-2);
    for (int trial = 0; trial < 3; ++trial) {
        h1::LinearReflection refl = fx::reflection(1.0, 1.0 + dist(rng));
        const auto rp = h1::kernel_and_index(sys, refl, 8, 65);
        c.that(rp.index == 0 && rp.confident,
               "perturbed trial " + std::to_string(trial) + ": index " +
                   std::to_string(rp.index) + " or low confidence");
    }
    return c.result();
}

// ---------------------------------------------------------------------------
// 8. Orthogonality characterises solvability on the singular fixture.
// ---------------------------------------------------------------------------
std::string criterion_orthogonality() {
    Check c;
    const auto sys = fx::coupled(0.0, h1::TimeDomain::periodic());
    const auto refl = fx::reflection(1.0, 1.0);
    const int nx = 65;

    auto constant_mode = [&](double f1, double f2) {
        h1::FourierField f;
        f.S_max = 2;
        f.n = 2;
        f.nx = nx;
        f.hx = 1.0 / (nx - 1);
        f.modes.assign(5, Eigen::MatrixXcd::Zero(2, nx));
        f.mode(0).row(0).setConstant(f1);
        f.mode(0).row(1).setConstant(f2);
        return f;
    };

    const auto in_range = h1::fredholm_solve(sys, refl, constant_mode(1.0, -1.0), nx, 1e-8);
    c.that(in_range.report.solvable, "range element flagged unsolvable");
    c.that(in_range.report.residual <= 1e-8,
           "range residual " + num(in_range.report.residual) + " > 1e-8");
    c.that(in_range.report.obstruction <= 1e-8,
           "range obstruction " + num(in_range.report.obstruction) + " > 1e-8");

    const auto blocked = h1::fredholm_solve(sys, refl, constant_mode(1.0, 1.0), nx, 1e-8);
    c.that(!blocked.report.solvable, "cokernel element flagged solvable");
    c.that(std::abs(blocked.report.obstruction - std::sqrt(2.0)) <= 1e-8,
           "obstruction " + num(blocked.report.obstruction) + " != sqrt(2)");

    const auto rep = h1::kernel_and_index(sys, refl, 8, nx);
    c.that(rep.coker_cross_angle <= 1e-4,
           "adjoint vs transpose cokernel angle " + num(rep.coker_cross_angle) + " > 1e-4");
    return c.result();
}

// ---------------------------------------------------------------------------
// 9. Parametrix identity and compactness of the squared remainder.
// ---------------------------------------------------------------------------
std::string criterion_parametrix() {
    Check c;
    const auto sys = fx::coupled(0.4, h1::TimeDomain::periodic());
    const h1::ExponentProfiles prof(sys);
    const auto refl = fx::reflection(0.25, 0.25);  // must outlive the operator
    const auto D = h1::build_discrete_D(prof, refl, 64);

    for (int s : {0, 1, 4}) {
        const double defect = D.parametrix_defect(s);
        c.that(defect <= 1e-12,
               "parametrix defect " + num(defect) + " at s=" + std::to_string(s) + " > 1e-12");
    }
    const auto sv = D.d2_singular_values(0);
    const int mid = (int)sv.size() / 2;
    c.that(sv(mid) <= 1e-3 * sv(0),
           "mid-spectrum decay " + num(sv(0) / std::max(sv(mid), 1e-300)) + " < 1e3");
    return c.result();
}

}  // namespace

int main() {
    const unsigned hw = std::thread::hardware_concurrency();
    h1::set_max_threads(hw ? (int)hw : 4);

    struct Entry {
        const char* name;
        std::function<std::string()> run;
    };
    const std::vector<Entry> entries = {
        {"transport exactness", criterion_transport},
        {"integral-identity certification", criterion_identities},
        {"boundary-trace smoothing", criterion_smoothing},
        {"population smoothing and renewal oracle", criterion_population},
        {"dissipative contraction margins", criterion_contraction},
        {"mode-wise isomorphism", criterion_isomorphism},
        {"index zero", criterion_index},
        {"orthogonality and solvability", criterion_orthogonality},
        {"parametrix and compact remainder", criterion_parametrix},
    };

    int failed = 0;
    for (size_t i = 0; i < entries.size(); ++i) {
        std::string why;
        try {
            why = entries[i].run();
        } catch (const std::exception& e) {
            why = std::string("exception: ") + e.what();
        }
        if (why.empty()) {
            std::cout << "criterion " << (i + 1) << " (" << entries[i].name << "): PASS\n";
        } else {
            std::cout << "criterion " << (i + 1) << " (" << entries[i].name << "): FAIL — " << why
                      << "\n";
            ++failed;
        }
        std::cout.flush();
    }
    if (failed) std::cout << failed << " criterion(s) failed\n";
    return failed == 0 ? 0 : 1;
}
