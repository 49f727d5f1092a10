#include "oracles.hpp"
#include "perimap/hybrid_ode.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace perimap;
using Catch::Approx;

namespace {

HybridSystem frozen() {
    HybridSystem s = polar_hybrid();
    s.X = [](const Vec& x) { return Vec::Zero(x.size()); };
    s.g = [](double, const Vec& x, double) { return Vec::Zero(x.size()); };
    return s;
}

// x' = (1, -2 x1): x2 = c - x1^2 along orbits, which the 5(4) pair integrates exactly.
HybridSystem parabola(double level) {
    HybridSystem s = polar_hybrid();
    s.X = [](const Vec& x) { return vec({1.0, -2.0 * x(0)}); };
    s.H = [level](const Vec& x) { return x(1) - level; };
    return s;
}

}  // namespace

TEST_CASE("half turn on the unit cycle", "[hybrid_ode]") {
    const HybridSystem s = polar_hybrid();
    for (double tau : {0.0, 0.37, 5.0}) {
        const FlowResult r = flow(s, tau, vec({1.0, 0.0}), 0.0, StopCondition::fixed_time(tau + 0.5));
        CHECK(!r.event_hit);
        CHECK(r.end_time == tau + 0.5);
        CHECK((r.end_state - vec({-1.0, 0.0})).norm() <= 1e-9);
    }
}

TEST_CASE("first return to the section takes unit time", "[hybrid_ode]") {
    const HybridSystem s = polar_hybrid();
    for (double tau : {0.0, 0.37, 5.0}) {
        const FlowResult r = flow(s, tau, vec({1.0, 0.0}), 0.0, StopCondition::event());
        CHECK(r.event_hit);
        CHECK(std::abs(r.end_time - (tau + 1.0)) <= 1e-9);
        CHECK((r.end_state - vec({1.0, 0.0})).norm() <= 1e-9);
        CHECK(std::abs(s.H(r.end_state)) <= 1e-12);
    }
    // Off the cycle the angle still advances at 2 pi; the radius follows the logistic law.
    const FlowResult r = flow(s, 0.0, vec({1.2, 0.0}), 0.0, StopCondition::event());
    CHECK(std::abs(r.end_time - 1.0) <= 1e-9);
    CHECK(std::abs(r.end_state(0) - oracle::logistic(1.2, 1.0)) <= 1e-9);
}

TEST_CASE("frozen flow returns its initial state", "[hybrid_ode]") {
    const HybridSystem s = frozen();
    const Vec v = vec({0.3, -0.7});
    for (double t_end : {0.0, 0.1, 3.0}) CHECK(flow(s, 0.0, v, 0.0, StopCondition::fixed_time(t_end)).end_state == v);
    FlowOptions opt;
    opt.max_time = 2.0;
    CHECK_THROWS_AS(flow(s, 0.0, v, 0.0, StopCondition::event(), opt), IntegrationError);
    CHECK_THROWS_AS(flow(s, 1.0, v, 0.0, StopCondition::fixed_time(0.5)), PreconditionError);
}

TEST_CASE("event direction selects the crossing", "[hybrid_ode]") {
    const HybridSystem s = polar_hybrid();
    FlowOptions down;
    down.direction = -1;
    const FlowResult r = flow(s, 0.0, vec({1.0, 0.0}), 0.0, StopCondition::event(), down);
    CHECK(std::abs(r.end_time - 0.5) <= 1e-9);
    CHECK((r.end_state - vec({-1.0, 0.0})).norm() <= 1e-9);
}

TEST_CASE("departure standoff suppresses an immediate re-trigger", "[hybrid_ode]") {
    const HybridSystem s = polar_hybrid();
    // Starts just below S, within the standoff, moving up: the first crossing
    // is the departure and does not count.
    const FlowResult r = flow(s, 0.0, vec({1.0, -5e-12}), 0.0, StopCondition::event());
    CHECK(std::abs(r.end_time - 1.0) <= 1e-9);
}

TEST_CASE("tangential touches are flagged, not counted", "[hybrid_ode]") {
    const HybridSystem s = parabola(5e-12);
    const FlowResult r = detail::integrate(s, 0.0, vec({-1.0, -1.0}), 0.0, 2.0, true, FlowOptions{});
    CHECK(!r.event_hit);
    CHECK(r.step_stats.grazing_suspects >= 1);
    // Below the apex the same orbit crosses S upward.
    const FlowResult c = flow(parabola(-0.25), 0.0, vec({-1.0, -1.0}), 0.0, StopCondition::event());
    CHECK(c.event_hit);
    CHECK(std::abs(c.end_time - 0.5) <= 1e-12);
}

TEST_CASE("located events are accurate", "[hybrid_ode][property]") {
    const HybridSystem s = polar_hybrid();
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (int i = 0; i < 20; ++i) {
        const double tau = 0.8 * (u(rng) + 0.1) * 5.0;
        const double eps = u(rng);
        const FlowResult r = flow(s, tau, vec({1.0 + u(rng), 0.0}), eps, StopCondition::event());
        REQUIRE(r.event_hit);
        CHECK(std::abs(s.H(r.end_state)) <= 1e-12);
        // Continuing for 1e-10 moves H by the crossing speed times 1e-10 and no more.
        const double delta = 1e-10;
        const Vec f = s.X(r.end_state) + eps * s.g(r.end_time, r.end_state, eps);
        const double speed = grad_H(s, r.end_state).dot(f);
        const FlowResult after = flow(s, r.end_time, r.end_state, eps, StopCondition::fixed_time(r.end_time + delta));
        CHECK(std::abs(s.H(after.end_state) - s.H(r.end_state) - speed * delta) <= 1e-11);
        CHECK(s.H(after.end_state) > 0.0);
    }
}

TEST_CASE("transversality", "[hybrid_ode]") {
    HybridSystem s = polar_hybrid();
    CHECK(check_transversality(s) == Approx(2.0 * oracle::pi).epsilon(1e-8));

    HybridSystem scaled = s;
    scaled.H = [](const Vec& x) { return -3.0 * x(1); };
    const double v = check_transversality(scaled);
    CHECK(v == Approx(-6.0 * oracle::pi).epsilon(1e-8));
    CHECK((std::abs(v) > 1e-8) == (std::abs(check_transversality(s)) > 1e-8));

    HybridSystem tangent = s;
    tangent.X = [](const Vec&) { return vec({1.0, 0.0}); };
    CHECK(std::abs(check_transversality(tangent)) <= 1e-8);
}

TEST_CASE("forcing periodicity predicate", "[hybrid_ode]") {
    const HybridSystem s = polar_hybrid();
    CHECK(check_forcing_period(s, 500, 1) <= 1e-14);
    HybridSystem drift = s;
    drift.g = [](double t, const Vec&, double) { return vec({std::cos(t) + 0.01 * t, 0.0}); };
    CHECK(check_forcing_period(drift, 500, 1) > 1e-3);
    HybridSystem gated = s;
    gated.g = [](double t, const Vec&, double eps) { return vec({eps == 0.0 ? 0.0 : std::cos(2.5 * oracle::pi * t), 0.0}); };
    CHECK(check_forcing_period(gated, 500, 1) <= 1e-14);
}

TEST_CASE("chart lies in the section and inverts", "[hybrid_ode]") {
    const auto [on_section, inverse] = check_chart(polar_hybrid(), 500, 3);
    CHECK(on_section == 0.0);
    CHECK(inverse <= 1e-15);
}

TEST_CASE("flow composes at eps = 0", "[hybrid_ode][property]") {
    const HybridSystem s = polar_hybrid();
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        const double tau = u(rng), t1 = tau + u(rng), t2 = t1 + u(rng);
        const Vec v = vec({0.8 + 0.4 * u(rng), 0.4 * u(rng) - 0.2});
        const Vec mid = flow(s, tau, v, 0.0, StopCondition::fixed_time(t1)).end_state;
        const Vec a = flow(s, t1, mid, 0.0, StopCondition::fixed_time(t2)).end_state;
        const Vec b = flow(s, tau, v, 0.0, StopCondition::fixed_time(t2)).end_state;
        CHECK((a - b).norm() <= 1e-9);
    }
}

TEST_CASE("forced flow is periodic in the start time", "[hybrid_ode][property]") {
    const HybridSystem s = polar_hybrid();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        const double tau = u(rng), t = tau + 1.5 * u(rng), eps = 0.05 * u(rng);
        const Vec v = vec({0.8 + 0.4 * u(rng), 0.4 * u(rng) - 0.2});
        const Vec a = flow(s, tau, v, eps, StopCondition::fixed_time(t)).end_state;
        const Vec b = flow(s, tau + s.T_g, v, eps, StopCondition::fixed_time(t + s.T_g)).end_state;
        CHECK((a - b).norm() <= 1e-9);
    }
}

TEST_CASE("hybrid simulation applies the jump at each crossing", "[hybrid_ode]") {
    const HybridSystem s = polar_hybrid();
    FlowOptions opt;
    opt.dense_dt = 0.01;
    const auto samples = simulate_hybrid(s, 0.0, vec({1.2, 0.0}), 0.0, 2.5, opt);
    REQUIRE(!samples.empty());
    CHECK(samples.back().t <= 2.5 + 1e-12);
    // The run starts post-jump; at t = 1 the radius logistic(1.2, 1) is
    // contracted toward 1 by kappa = 0.5 and the logistic law resumes.
    const double r_jump = 1.0 + 0.5 * (oracle::logistic(1.2, 1.0) - 1.0);
    std::size_t checked = 0;
    for (const auto& p : samples) {
        if (p.t > 1.1 && p.t < 1.9) {
            CHECK(std::abs(p.x.norm() - oracle::logistic(r_jump, p.t - 1.0)) <= 1e-8);
            ++checked;
        }
    }
    CHECK(checked > 50);
}
