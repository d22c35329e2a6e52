#include <doctest.h>

#include "fixtures.hpp"

using namespace hyper1d;

TEST_CASE("system constructor validates shapes") {
    CHECK_THROWS_AS(HyperbolicSystem(2, 3, fx::zeros(2), fx::zero_matrix(2), fx::zeros(2)),
                    Error);
    CHECK_THROWS_AS(HyperbolicSystem(2, 1, fx::zeros(1), fx::zero_matrix(2), fx::zeros(2)),
                    Error);
}

TEST_CASE("hyperbolicity check passes on the counterflow fixture") {
    const auto rep = check_hyperbolicity(fx::coupled(0.3));
    CHECK(rep.pass);
    CHECK(rep.l1_margin == doctest::Approx(1.0));
    CHECK(rep.l2_margin == doctest::Approx(1.0));
}

TEST_CASE("hyperbolicity check fails when a speed crosses zero") {
    auto a = std::vector<CoefficientField>{CoefficientField("x - 0.5")};
    HyperbolicSystem sys(1, 1, std::move(a), fx::zero_matrix(1), fx::zeros(1));
    const auto rep = check_hyperbolicity(sys);
    CHECK_FALSE(rep.pass);
    CHECK(rep.l1_margin < 0.0);
    CHECK(rep.l1_witness.j == 0);
}

TEST_CASE("hyperbolicity check fails on a wrong sign pattern") {
    // rightward slot carrying a negative speed
    auto a = std::vector<CoefficientField>{CoefficientField(-1.0)};
    HyperbolicSystem sys(1, 1, std::move(a), fx::zero_matrix(1), fx::zeros(1));
    CHECK_FALSE(check_hyperbolicity(sys).pass);
}

TEST_CASE("coincidence factorization: coupling across equal speeds is rejected") {
    // two components moving at the same speed with nonzero cross coupling
    auto b = fx::zero_matrix(2);
    b[0][1] = CoefficientField(1.0);
    HyperbolicSystem bad(2, 2, {CoefficientField(1.0), CoefficientField(1.0)}, std::move(b),
                         fx::zeros(2));
    CHECK_FALSE(check_levy(bad).pass);

    HyperbolicSystem good(2, 2, {CoefficientField(1.0), CoefficientField(1.0)},
                          fx::zero_matrix(2), fx::zeros(2));
    CHECK(check_levy(good).pass);
}

TEST_CASE("coincidence factorization: separated speeds admit any bounded coupling") {
    CHECK(check_levy(fx::coupled(0.7)).pass);
    const auto bv = check_bv_factorization(fx::coupled(0.7));
    CHECK(bv.pass);
    CHECK(bv.bv_checked);
    CHECK(bv.bv_ok);
}

TEST_CASE("total variation estimate on simple profiles") {
    CHECK(hyper1d::detail::tv_estimate([](double x) { return x; }, {}, 256) == doctest::Approx(1.0).epsilon(0.02));
    CHECK(hyper1d::detail::tv_estimate([](double x) { return std::abs(x - 0.5); }, {0.5}, 256) ==
          doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("time-independence detection") {
    CHECK(fx::coupled(0.3).time_independent());
    auto a = std::vector<CoefficientField>{CoefficientField("1 + 0.1*sin(t)")};
    HyperbolicSystem sys(1, 1, std::move(a), fx::zero_matrix(1), fx::zeros(1));
    CHECK_FALSE(sys.time_independent());
    CHECK(sys.dt_a(0, 0.3, 0.0) == doctest::Approx(0.1).epsilon(1e-6));
}
