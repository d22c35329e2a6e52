#include <doctest.h>

#include "fixtures.hpp"

using namespace hyper1d;

namespace {

SolutionBundle solve_transport_sin(int nx, int nt) {
    const auto sys = fx::transport();
    ClassicalTrace tr;
    tr.h.push_back([](double t) { return std::sin(t); });
    InitialData phi = [](int, double x) { return std::sin(-x); };
    SolveConfig cfg;
    cfg.nx = nx;
    cfg.nt = nt;
    cfg.interp = InterpOrder::Bicubic;  // the residual certificate is read off-grid
    return solve_ibvp(sys, tr, phi, 2.0, cfg);
}

double sup_error(const GridFunction& u, const std::function<double(int, double, double)>& ex) {
    double worst = 0.0;
    for (int c = 0; c < u.components(); ++c)
        for (int it = 0; it < u.nt(); ++it)
            for (int ix = 0; ix < u.nx(); ++ix)
                worst = std::max(worst,
                                 std::abs(u.at(c, ix, it) - ex(c, u.x_at(ix), u.t_at(it))));
    return worst;
}

}  // namespace

TEST_CASE("pure transport reproduces the travelling wave") {
    const auto b = solve_transport_sin(101, 101);
    REQUIRE(b.converged);
    CHECK(sup_error(b.u, [](int, double x, double t) { return std::sin(t - x); }) <= 1e-9);
    CHECK(b.residual <= 1e-9);
    CHECK(b.first_lateral_slab >= 0);
}

TEST_CASE("coupled manufactured problem converges with the grid") {
    const auto m = fx::manufactured_coupled(0.3);
    auto exact = [](int c, double x, double t) {
        return c == 0 ? fx::Manufactured::u1(x, t) : fx::Manufactured::u2(x, t);
    };
    double errs[2];
    int level = 0;
    for (int nx : {81, 161}) {
        SolveConfig cfg;
        cfg.nx = nx;
        cfg.nt = nx;
        cfg.interp = InterpOrder::Bicubic;
        cfg.tol = 1e-10;
        const auto b = solve_ibvp(m.sys, m.trace, m.phi, 2.0, cfg);
        REQUIRE(b.converged);
        errs[level++] = sup_error(b.u, exact);
    }
    CHECK(errs[1] <= 2e-4);
    CHECK(errs[0] / errs[1] >= 3.0);
}

TEST_CASE("residual certificate tracks the defect of the converged iterate") {
    const auto m = fx::manufactured_coupled(0.3);
    SolveConfig cfg;
    cfg.nx = 81;
    cfg.nt = 81;
    cfg.interp = InterpOrder::Bicubic;
    const auto b = solve_ibvp(m.sys, m.trace, m.phi, 2.0, cfg);
    REQUIRE(b.converged);
    CHECK(b.residual <= 5e-4);
}

TEST_CASE("warm starts seed the iteration and keep the answer") {
    const auto m = fx::manufactured_coupled(0.3);
    SolveConfig cfg;
    cfg.nx = 61;
    cfg.nt = 61;
    const auto cold = solve_ibvp(m.sys, m.trace, m.phi, 2.0, cfg);
    REQUIRE(cold.converged);
    const auto warm = solve_ibvp(m.sys, m.trace, m.phi, 2.0, cfg, &cold.u);
    REQUIRE(warm.converged);
    CHECK(warm.u.sup_diff(cold.u) <= 1e-7);
    CHECK(warm.iterations <= cold.iterations);
}

TEST_CASE("periodic solve converges inside the contraction region") {
    auto f = fx::zeros(2);
    f[0] = CoefficientField(0.1);
    f[1] = CoefficientField(0.1);
    const auto sys = fx::coupled(0.2, TimeDomain::periodic(), f);
    SolveConfig cfg;
    cfg.nx = 65;
    cfg.nt = 64;
    const auto b = solve_periodic_strip(sys, fx::reflection(0.3, 0.3), cfg);
    REQUIRE(b.converged);
    CHECK(b.residual <= 1e-6);
    // periodicity of the result: wrap-around interpolation is consistent
    CHECK(b.u.value(0, 0.5, 0.0) == doctest::Approx(b.u.value(0, 0.5, two_pi)).epsilon(1e-9));
}

TEST_CASE("periodic solve reports divergence beyond the contraction region") {
    auto f = fx::zeros(2);
    f[0] = CoefficientField(0.1);
    f[1] = CoefficientField(0.1);
    // diagonal growth exp(1) per crossing times reflection 0.5 exceeds 1
    const auto sys = fx::damped(-1.0, TimeDomain::periodic(), f);
    SolveConfig cfg;
    cfg.nx = 49;
    cfg.nt = 48;
    cfg.max_iterations = 60;
    const auto b = solve_periodic_strip(sys, fx::reflection(0.5, 0.5), cfg);
    CHECK_FALSE(b.converged);
    CHECK(!b.message.empty());
}

TEST_CASE("contraction margins match the closed forms") {
    const std::vector<std::pair<double, double>> box(2, {-1.0, 1.0});

    // no zero-order term: margin = 1 - |kappa|
    const auto plain = fx::coupled(0.0, TimeDomain::periodic());
    const auto m1 = contraction_check(plain, fx::cross_reflection(0.4), 0, box);
    CHECK(m1.pass);
    for (int j = 0; j < 2; ++j)
        CHECK(m1.margin[j][0] == doctest::Approx(1.0 - 0.4).epsilon(1e-8));

    // diagonal term -1: boundary weight sup is e, margin = 1 - e |kappa|
    const auto damp = fx::damped(-1.0, TimeDomain::periodic());
    const auto m2 = contraction_check(damp, fx::cross_reflection(0.3), 0, box);
    CHECK(m2.pass);
    for (int j = 0; j < 2; ++j)
        CHECK(m2.margin[j][0] ==
              doctest::Approx(1.0 - std::exp(1.0) * 0.3).epsilon(1e-8));

    const auto m3 = contraction_check(damp, fx::cross_reflection(0.5), 0, box);
    CHECK_FALSE(m3.pass);
}

TEST_CASE("renewal marching: constant steady state is exact") {
    PopulationModel pop;
    pop.mu = 0.0;
    pop.gamma = [](double) { return 1.0; };
    pop.h = [](double z) { return z; };
    const auto tr = renewal_boundary(pop, [](double) { return 1.0; }, 3.0, 512);
    for (double v : tr.v) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("renewal marching against the exponential closed form") {
    // gamma = 1, h = id, phi = 1 on (0, 1/2): v(t) = e^t / 2 before the jump
    // in the initial data reaches the census horizon
    PopulationModel pop;
    pop.mu = 0.0;
    pop.gamma = [](double) { return 1.0; };
    pop.h = [](double z) { return z; };
    auto phi = [](double x) { return x < 0.5 ? 1.0 : 0.0; };
    const auto tr = renewal_boundary(pop, phi, 1.0, 2048);
    for (double t : {0.1, 0.25, 0.4, 0.49})
        CHECK(tr(t) == doctest::Approx(0.5 * std::exp(t)).epsilon(1e-5));
}

TEST_CASE("solver rejects ill-posed requests") {
    const auto sys = fx::transport();
    ClassicalTrace tr;
    tr.h.push_back([](double t) { return std::sin(t); });
    InitialData phi = [](int, double) { return 0.0; };
    CHECK_THROWS_AS(solve_ibvp(sys, tr, phi, 0.0), Error);
    CHECK_THROWS_AS(solve_ibvp(fx::transport(TimeDomain::periodic()), tr, phi, 1.0), Error);
    CHECK_THROWS_AS(solve_periodic_strip(fx::transport(), tr), Error);
}
