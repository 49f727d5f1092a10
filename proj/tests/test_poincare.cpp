#include "oracles.hpp"
#include "perimap/invariant_graph.hpp"
#include "perimap/poincare.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <sstream>

using namespace perimap;
using Catch::Approx;

namespace {

PoincareHandle handle(double r1 = 0.1) {
    PolarHybridParams p;
    p.r1 = r1;
    return make_poincare_handle(polar_hybrid(p));
}

}  // namespace

TEST_CASE("return time on and off the cycle", "[poincare]") {
    const PoincareHandle h = handle();
    for (double tau : {0.0, 0.3, 1.7}) {
        CHECK(std::abs(time_to_return(h, tau, vec({1.0, 0.0}), 0.0) - (tau + 1.0)) <= 1e-9);
        CHECK(std::abs(time_to_return(h, tau, vec({1.2, 0.0}), 0.0) - (tau + 1.0)) <= 1e-9);
    }
}

TEST_CASE("unforced return lag is independent of the start time", "[poincare][property]") {
    const PoincareHandle h = handle();
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        const Vec x = vec({0.9 + 0.2 * u(rng), 0.0});
        const double lag0 = time_to_return(h, 0.0, x, 0.0);
        const double tau = 3.0 * u(rng);
        CHECK(std::abs(time_to_return(h, tau, x, 0.0) - tau - lag0) <= 1e-9);
    }
}

TEST_CASE("reduced map against the closed-form logistic return", "[poincare]") {
    const PoincareHandle h = handle(0.5);
    const ReturnPoint p0 = P_eps(h, 0.4, vec({0.0}), 0.0);
    CHECK(std::abs(p0.tau - 1.4) <= 1e-9);
    CHECK(std::abs(p0.u(0)) <= 1e-10);
    CHECK(std::abs(P_reduced(h, vec({0.0}))(0)) <= 1e-10);

    const double up = P_reduced(h, vec({0.2}))(0);
    CHECK(std::abs(up - oracle::polar_return(0.5, 0.2)) <= 1e-9);
    CHECK(up == Approx(0.0346).margin(1e-4));

    const double down = P_reduced(h, vec({-0.2}))(0);
    CHECK(std::abs(down - oracle::polar_return(0.5, -0.2)) <= 1e-9);
    CHECK(down < 0.0);
    CHECK(std::abs(down) < 0.2);
}

TEST_CASE("return map errors", "[poincare]") {
    CHECK_THROWS_AS(P_eps(handle(0.1), 0.0, vec({0.2}), 0.0), DomainError);
    PoincareHandle h = handle(2.0);
    h.flow_options.max_time = 3.0;
    // D(-1) is the equilibrium at the origin: the orbit never returns.
    CHECK_THROWS_AS(P_eps(h, 0.0, vec({-1.0}), 0.0), IntegrationError);
}

TEST_CASE("forced returns shift by the forcing period", "[poincare][property]") {
    const PoincareHandle h = handle();
    const double Tg = h.system().T_g;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        const double tau = 2.0 * Tg * u(rng);
        const double eps = (i % 2 ? 1e-2 : 1e-3) * (2.0 * u(rng) - 1.0);
        const Vec uu = vec({0.1 * (2.0 * u(rng) - 1.0)});
        const ReturnPoint a = P_eps(h, tau, uu, eps);
        const ReturnPoint b = P_eps(h, tau + Tg, uu, eps);
        CHECK(std::abs(b.tau - a.tau - Tg) <= 1e-8);
        CHECK((b.u - a.u).norm() <= 1e-8);
        const Vec x = h.system().D(uu);
        const double t0 = time_to_return(h, tau, x, eps);
        CHECK(std::abs(time_to_return(h, tau + Tg, x, eps) - t0 - Tg) <= 1e-8);
        CHECK(std::abs(time_to_return(h, tau - Tg, x, eps) - t0 + Tg) <= 1e-8);
    }
}

TEST_CASE("unforced section coordinate is independent of the start time", "[poincare][property]") {
    const PoincareHandle h = handle();
    for (double uu : {-0.08, 0.0, 0.05}) {
        const double ref = P_eps(h, 0.0, vec({uu}), 0.0).u(0);
        for (double tau : {0.13, 0.8, 2.9}) CHECK(std::abs(P_eps(h, tau, vec({uu}), 0.0).u(0) - ref) <= 1e-9);
    }
}

TEST_CASE("wrapped map: return lag and assumptions", "[poincare]") {
    const PoincareHandle h = handle(0.01);
    const MapSpec m = extract_alpha_beta(h, {-0.01, 0.01});
    CHECK(m.k1 == 1);
    CHECK(m.periodic_coord == 0);
    CHECK(m.period == h.system().T_g);
    for (double tau : {0.0, 0.5, 1.3})
        for (double uu : {-0.01, 0.0, 0.007}) CHECK(std::abs(m.alpha_at(1.0, 0.0, vec({tau}), vec({uu}))(0) - 1.0) <= 1e-9);

    AssumptionBox box = default_box(m);
    box.eps_lo = -0.01;
    box.eps_hi = 0.01;
    box.x_hi = {2.0 * m.period};
    AssumptionOptions opt;
    opt.with_bounds = false;
    const AssumptionReport r = check_assumptions(m, box, 60, 3, opt);
    CHECK(std::abs(r.q_estimate - oracle::polar_return_slope(0.5)) <= 5e-3);
    CHECK(std::abs(r.beta_y0(0, 0) - oracle::polar_return_slope(0.5)) <= 1e-6);
    CHECK(r.a2_defect <= 1e-8);
    CHECK(r.periodicity_defect <= 1e-8);
    CHECK_THROWS_AS(m.beta_at(1.0, 0.02, vec({0.0}), vec({0.0})), DomainError);
}

TEST_CASE("wrapped map feeds the curve solver", "[poincare]") {
    const PoincareHandle h = handle();
    const MapSpec m = extract_alpha_beta(h, {-0.1, 0.1});
    CurveConfig cfg;
    cfg.n_nodes = 128;
    cfg.tol = 1e-11;
    const CurveSolution sol = solve_invariant_curve(m, 1.0, 0.01, cfg);
    CHECK(sol.report.converged);
    CHECK(sol.report.invariance_residual <= 10.0 * cfg.tol);
    // Lifted back: the chart point D(phi(tau)) returns to D(phi(tau')) at the return time tau'.
    for (double tau : {0.05, 0.33, 0.71}) {
        const ReturnPoint r = P_eps(h, tau, sol.curve(tau), 0.01);
        CHECK((r.u - sol.curve(r.tau)).norm() <= 1e-9);
    }
}

TEST_CASE("return map CSV rows", "[poincare]") {
    const PoincareHandle h = handle();
    std::vector<PoincareLogRow> rows{log_P_eps(h, 0.0, vec({0.05}), 0.0), log_P_eps(h, 0.2, vec({0.0}), 0.01)};
    std::ostringstream os;
    write_poincare_csv(os, rows);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "tau,u0,eps,tau_next,u_next0,return_lag");
    std::getline(in, line);
    double tau, u, eps, tn, un, lag;
    char c;
    std::istringstream row(line);
    row >> tau >> c >> u >> c >> eps >> c >> tn >> c >> un >> c >> lag;
    CHECK(u == 0.05);
    CHECK(lag == tn - tau);
    CHECK(un == rows[0].u_next(0));
}
