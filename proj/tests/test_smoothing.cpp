#include <doctest.h>

#include "fixtures.hpp"

using namespace hyper1d;

namespace {

/// Resolver backed by a closed-form field on [0,1] x [0,2].
Resolver analytic(const std::function<double(double, double)>& g) {
    return [g](int nx, int nt) {
        GridFunction u(1, nx, nt, 0.0, 2.0);
        u.fill([&g](int, double x, double t) { return g(x, t); });
        return u;
    };
}

}  // namespace

TEST_CASE("regularity profile: smooth field saturates at k_max") {
    const auto prof = regularity_profile(analytic([](double x, double t) {
        return std::sin(t) + x * x;
    }), 33, 33, 0.5, 3, 2);
    REQUIRE(prof.windows.size() == 4);
    for (int o : prof.order) CHECK(o == 3);
}

TEST_CASE("regularity profile: zero field hits the noise floor") {
    const auto prof = regularity_profile(analytic([](double, double) { return 0.0; }),
                                         33, 33, 0.5, 3, 2);
    for (int o : prof.order) CHECK(o == 3);
}

TEST_CASE("regularity profile: temporal kink drops the order to zero locally") {
    const auto prof = regularity_profile(analytic([](double, double t) {
        return std::abs(t - 1.0);
    }), 33, 33, 0.5, 3, 2);
    REQUIRE(prof.windows.size() == 4);
    CHECK(prof.order[0] == 3);   // [0, 0.5): far from the kink
    CHECK(prof.order[3] == 3);   // [1.5, 2)
    CHECK(std::min(prof.order[1], prof.order[2]) == 0);  // kink at t = 1
}

TEST_CASE("regularity profile: jump discontinuity gives order zero") {
    const auto prof = regularity_profile(analytic([](double, double t) {
        return t > 1.0 ? 1.0 : -1.0;
    }), 33, 33, 0.5, 3, 2);
    CHECK(std::min(prof.order[1], prof.order[2]) == 0);
    CHECK(prof.order[0] == 3);
}

TEST_CASE("regularity profile: curvature break gives order one") {
    const auto prof = regularity_profile(analytic([](double, double t) {
        const double s = t - 1.0;
        return s > 0 ? s * s : 0.0;
    }), 33, 33, 0.5, 3, 2);
    CHECK(std::min(prof.order[1], prof.order[2]) == 1);
    CHECK(prof.order[0] == 3);
}

TEST_CASE("regularity profile: spatial kink is detected through the x direction") {
    const auto prof = regularity_profile(analytic([](double x, double) {
        return std::abs(x - 0.5);
    }), 33, 33, 0.5, 3, 2);
    for (int o : prof.order) CHECK(o == 0);
}

TEST_CASE("smoothing time finds the first window of the requested order") {
    // kinks at t = 0.25 and t = 0.7, then linear (= smooth) from t = 0.7 on
    const auto prof = regularity_profile(analytic([](double, double t) {
        return std::abs(t - 0.25) + std::abs(t - 0.7);
    }), 33, 65, 0.5, 2, 2);
    const auto t1 = smoothing_time(prof, 2);
    REQUIRE(t1.has_value());
    CHECK(*t1 == doctest::Approx(1.0));
    CHECK_FALSE(smoothing_time(prof, 3).has_value());  // beyond k_max
}

TEST_CASE("singularity tracking follows a transported kink") {
    const auto sys = fx::transport();
    ClassicalTrace tr;
    tr.h.push_back([](double t) { return 0.5 * std::cos(t); });
    InitialData phi = [](int, double x) { return std::abs(x - 0.5); };
    SolveConfig cfg;
    cfg.nx = 201;
    cfg.nt = 201;
    const auto bundle = solve_ibvp(sys, tr, phi, 2.0, cfg);
    REQUIRE(bundle.converged);

    const auto track = track_singularity(bundle, sys, 0.5, 0);
    REQUIRE(track.times.size() == (size_t)bundle.u.nt());
    // while inside, the curve sits at x = 0.5 + t and carries slope jump 2
    for (size_t i = 0; i < track.times.size(); ++i) {
        const double t = track.times[i];
        if (t > 0.05 && t < 0.42) {
            CHECK(track.positions[i] == doctest::Approx(0.5 + t).epsilon(1e-6));
            CHECK(track.jump_du[0][i] == doctest::Approx(2.0).epsilon(0.05));
        }
    }
    CHECK(track.truncated);
    CHECK(track.exit_time == doctest::Approx(0.5).epsilon(0.03));
    // after every singularity has left, the row scan sees only grid noise
    CHECK(std::abs(track.jump_du[0].back()) <= 0.05);
}

TEST_CASE("row scan keeps reporting a kink that never exits") {
    const auto sys = fx::transport();
    ClassicalTrace tr;
    tr.h.push_back([](double t) { return 0.5 * std::cos(t); });
    InitialData phi = [](int, double x) { return std::abs(x - 0.5); };
    SolveConfig cfg;
    cfg.nx = 201;
    cfg.nt = 101;
    const auto bundle = solve_ibvp(sys, tr, phi, 0.45, cfg);
    REQUIRE(bundle.converged);
    const auto track = track_singularity(bundle, sys, 0.5, 0);
    CHECK_FALSE(track.truncated);
    CHECK(track.jump_du[0].back() == doctest::Approx(2.0).epsilon(0.05));
}
