// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "oracles.hpp"
#include "perimap/cycle_analysis.hpp"
#include "perimap/embedding.hpp"
#include "perimap/invariant_graph.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

using namespace perimap;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what, double measured) {
        detail << (detail.tellp() > 0 ? "; " : "") << what << "=" << measured << (ok ? "" : " (violated)");
        pass = pass && ok;
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

CurveConfig curve_config(std::size_t n, double tol) {
    CurveConfig c;
    c.n_nodes = n;
    c.tol = tol;
    return c;
}

struct ShearCurve {
    double q, omega, eps;
    Vec operator()(double x) const { return vec({oracle::shear_curve(q, omega, eps, x)}); }
};

PoincareHandle polar_handle() { return make_poincare_handle(polar_hybrid()); }

MapSpec polar_map(const PoincareHandle& h) { return extract_alpha_beta(h, {-h.effective_r1, h.effective_r1}); }

void closed_form_curve(Outcome& o) {
    const double q = 0.5, omega = 0.25, eps = 0.01;
    const auto t0 = std::chrono::steady_clock::now();
    const CurveSolution sol = solve_invariant_curve(linear_shear(q), omega, eps, curve_config(256, 1e-12));
    const double elapsed = seconds_since(t0);
    double err = 0.0;
    for (int k = 0; k < 10000; ++k) {
        const double x = (k + 0.5) / 10000.0;
        err = std::max(err, std::abs(sol.curve(x)(0) - oracle::shear_curve(q, omega, eps, x)));
    }
    for (std::size_t i = 0; i < sol.curve.n_nodes(); ++i) {
        const double x = sol.curve.node(i);
        err = std::max(err, std::abs(sol.curve.values()[i](0) - oracle::shear_curve(q, omega, eps, x)));
    }
    o.require(err <= 1e-8, "sup_error", err);
    const double phi0 = sol.curve(0.0)(0);
    o.require(std::abs(phi0 + 0.008) <= 1e-8, "phi(0)", phi0);
    o.require(elapsed < 1.0, "seconds", elapsed);
}

void invariance(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const MapSpec e2 = nonlinear_toy();
    const CurveSolution s2 = solve_invariant_curve(e2, 0.25, 0.01, curve_config(256, 1e-12));
    const double r2 = invariance_residual(e2, 0.25, 0.01, s2.curve, 1000, 11);
    o.require(r2 <= 1e-9, "E2_residual", r2);

    const PoincareHandle h = polar_handle();
    const MapSpec m = polar_map(h);
    const CurveSolution sh = solve_invariant_curve(m, 1.0, 0.01, curve_config(128, 1e-11));
    const double rh = invariance_residual(m, 1.0, 0.01, sh.curve, 1000, 12);
    o.require(rh <= 1e-9, "hybrid_residual", rh);
    const double elapsed = seconds_since(t0);
    o.require(elapsed < 30.0, "seconds", elapsed);
}

void attraction(Outcome& o) {
    AttractionOptions opt;
    opt.n_trajectories = 20;
    opt.r0 = 1.0 / 64.0;

    AttractionOptions exact = opt;
    exact.n_steps = 8;
    exact.transient = 0;
    exact.d_floor = 1e-5;
    const AttractionReport r1 = attraction_test(linear_shear(), 0.25, 0.01, ShearCurve{0.5, 0.25, 0.01}, exact);
    const double dev = std::max(std::abs(r1.max_rate - 0.5), std::abs(r1.min_rate - 0.5));
    o.require(dev <= 1e-12 && r1.escaped == 0 && r1.recorded_ratios > 0, "E1_rate_deviation", dev);

    const MapSpec e2 = nonlinear_toy();
    const CurveSolution sol = solve_invariant_curve(e2, 0.25, 0.01, curve_config(256, 1e-12));
    AttractionOptions tail = opt;
    tail.n_steps = 25;
    tail.transient = 5;
    const AttractionReport r2 = attraction_test(e2, 0.25, 0.01, sol.curve, tail);
    const double bound = attraction_rate_bound(0.5);
    o.require(r2.max_rate <= bound && r2.escaped == 0 && r2.recorded_ratios > 0, "E2_max_rate", r2.max_rate);
}

void periodicity(Outcome& o) {
    const double d = periodicity_defect(linear_shear(), 0.25, 0.01).defect;
    o.require(d <= 1e-6, "E1_defect", d);
    ShearParams p;
    p.extra_period = std::sqrt(2.0);
    p.extra_coupling = 1.0;
    const double bad = periodicity_defect(make_shear_map(p, "aperiodic"), 0.25, 0.01).defect;
    o.require(bad > 1e-3, "counterexample_defect", bad);
}

void uniqueness(Outcome& o) {
    const double r0 = 1.0 / 64.0;
    const auto a = PeriodicGridFn::sample(1.0, 128, [r0](double x) {
        return vec({r0 * (0.6 * std::sin(2.0 * oracle::pi * x) + 0.3 * std::cos(6.0 * oracle::pi * x))});
    });
    const auto b = PeriodicGridFn::sample(1.0, 128, [r0](double x) {
        return vec({-r0 * 0.9 * std::cos(4.0 * oracle::pi * x)});
    });
    const double d = uniqueness_test(nonlinear_toy(), 0.25, 0.01, curve_config(128, 1e-12), a, b);
    o.require(d <= 1e-9, "sup_distance", d);
}

void eps_scaling(Outcome& o) {
    const double expected = 1.0 / std::abs(std::exp(std::complex<double>(0.0, 2.0 * oracle::pi * 0.25)) - 0.5);
    const ContinuityTable t1 = continuity_in_eps(linear_shear(), 0.25, {1e-3, 1e-2}, curve_config(256, 1e-12));
    for (const auto& row : t1.rows) {
        const double rel = std::abs(row.ratio - expected) / expected;
        o.require(rel <= 1e-6, "E1_rel_dev@" + std::to_string(row.eps), rel);
    }
    const ContinuityTable t2 = continuity_in_eps(nonlinear_toy(), 0.25, {1e-3, 1e-2}, curve_config(256, 1e-12));
    o.require(t2.ratio_band <= 1.1, "E2_ratio_band", t2.ratio_band);
}

void hybrid_pipeline(Outcome& o) {
    PoincareHandle h = polar_handle();
    const CycleReport rep = analyze_cycle(h);
    o.require(std::abs(rep.u_star(0)) <= 1e-10, "u_star", rep.u_star(0));
    const double dJ = std::abs(rep.spectrum.jacobian(0, 0) - oracle::polar_return_slope(0.5));
    o.require(dJ <= 1e-6, "slope_error", dJ);

    // Shift identities of the return time and section coordinate under tau -> tau + T_g.
    const double Tg = h.system().T_g;
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double shift = 0.0;
    for (int i = 0; i < 40; ++i) {
        const double tau = 2.0 * Tg * u01(rng);
        const double eps = (i % 2 ? 1e-2 : 1e-3) * (2.0 * u01(rng) - 1.0);
        const Vec uu = vec({h.effective_r1 * (2.0 * u01(rng) - 1.0)});
        const ReturnPoint a = P_eps(h, tau, uu, eps);
        const ReturnPoint b = P_eps(h, tau + Tg, uu, eps);
        shift = std::max({shift, std::abs(b.tau - a.tau - Tg), (b.u - a.u).norm()});
    }
    o.require(shift <= 1e-8, "shift_identity_defect", shift);

    const MapSpec m = polar_map(h);
    const CurveConfig cfg = curve_config(128, 1e-11);
    PeriodicityConfig pc;
    pc.n_nodes = 64;
    pc.pullback_steps = 20;
    pc.n_samples = 200;
    for (double eps : {1e-3, 1e-2}) {
        const double d = periodicity_defect(m, 1.0, eps, pc).defect;
        o.require(d <= 1e-6, "periodicity_defect@" + std::to_string(eps), d);
    }
    const ContinuityTable t = continuity_in_eps(m, 1.0, {1e-3, 1e-2}, cfg);
    o.require(t.ratio_band <= 1.1, "ratio_band", t.ratio_band);
}

std::vector<std::pair<double, Vec>> in_domain_samples(const MapSpec& s, std::size_t n, std::uint64_t seed,
                                                      std::vector<std::pair<double, double>>& oe) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::pair<double, Vec>> xy;
    for (std::size_t i = 0; i < n; ++i) {
        oe.emplace_back(-1.0 + 3.0 * u(rng), s.r1 * (2.0 * u(rng) - 1.0));
        const double x = 4.0 * u(rng) - 2.0;
        xy.emplace_back(x, ball_point(rng, s.k2, s.r1, u(rng)));
    }
    return xy;
}

void embedding_identities(Outcome& o) {
    double conj = 0.0;
    for (const MapSpec& s : {linear_shear(), nonlinear_toy()}) {
        for (double lambda : {1.0, 0.5, 0.25}) {
            std::vector<std::pair<double, double>> oe;
            const auto xy = in_domain_samples(s, 100, 17, oe);
            for (std::size_t i = 0; i < xy.size(); ++i)
                conj = std::max(conj, conjugacy_residual(s, lambda, oe[i].first, oe[i].second, vec({xy[i].first}),
                                                         xy[i].second));
        }
    }
    o.require(conj <= 1e-12, "conjugacy_residual", conj);

    const double h = 1e-6;
    auto jump = [h](auto f, double t) {
        const double right = (-3.0 * f(t) + 4.0 * f(t + h) - f(t + 2.0 * h)) / (2.0 * h);
        const double left = (3.0 * f(t) - 4.0 * f(t - h) + f(t - 2.0 * h)) / (2.0 * h);
        return std::abs(right - left);
    };
    double c1 = 0.0;
    for (double r : {1.0, 0.1}) {
        const BumpSpec b{r};
        for (double t : bump_omega_breakpoints())
            c1 = std::max(c1, jump([&](double w) { return bump_psi(b, w, 0.0, vec({0.0})); }, t));
        for (double t : bump_radial_breakpoints(r)) {
            c1 = std::max(c1, jump([&](double e) { return bump_psi(b, 0.5, e, vec({0.0})); }, t));
            c1 = std::max(c1, jump([&](double y) { return bump_psi(b, 0.5, 0.0, vec({y})); }, t));
        }
    }
    o.require(c1 <= 1e-6, "bump_C1_defect", c1);

    const MapSpec e2 = nonlinear_toy();
    const Certificate cert = certify(e2);
    o.require(cert.ok && cert.params.lambda0.has_value(), "certified", cert.ok ? 1.0 : 0.0);
    if (!cert.params.lambda0) return;
    double round_trip = 0.0;
    std::vector<std::pair<double, double>> oe;
    const auto xy = in_domain_samples(e2, 50, 99, oe);
    for (std::size_t i = 0; i < xy.size(); ++i) {
        const Vec z0 = pack_point(oe[i].first, oe[i].second, vec({xy[i].first}), xy[i].second);
        const Vec target = eval_G_lambda(e2, cert.params, z0);
        round_trip = std::max(round_trip, (invert_G(e2, cert.params, target, 1e-13, 500).z - z0).norm());
    }
    o.require(round_trip <= 1e-10, "invert_G_round_trip", round_trip);

    double relation = 0.0;
    for (const MapSpec& s : {linear_shear(), nonlinear_toy()}) {
        const Certificate c = certify(s);
        if (!c.ok || !c.params.lambda0) {
            relation = std::numeric_limits<double>::infinity();
            continue;
        }
        const double l0 = *c.params.lambda0;
        relation = std::max({relation, std::abs(*c.params.eps0 - s.r1 * l0 * l0 / 2.0), std::abs(*c.params.r0 - l0 * s.r1)});
    }
    o.require(relation == 0.0, "constant_relation_defect", relation);
}

void assumption_predicates(Outcome& o) {
    const MapSpec s = linear_shear();
    const AssumptionReport r = check_assumptions(s, default_box(s), 1000, 1);
    o.require(std::abs(r.q_estimate - 0.5) <= 1e-12, "q", r.q_estimate);
    o.require(r.a2_defect <= 1e-12, "a2_defect", r.a2_defect);
    o.require(r.periodicity_defect <= 1e-12, "periodicity_defect", r.periodicity_defect);
    const double mu = spectral_gap(make_embedding_params(s, 1.0, 0.5)).mu;
    o.require(mu == 0.75, "mu", mu);
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
        {"closed-form curve", closed_form_curve},
        {"invariance residual", invariance},
        {"attraction rate", attraction},
        {"emergent periodicity", periodicity},
        {"uniqueness", uniqueness},
        {"eps scaling", eps_scaling},
        {"hybrid pipeline", hybrid_pipeline},
        {"embedding identities", embedding_identities},
        {"assumption predicates", assumption_predicates},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            criteria[i].second(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << (o.detail.tellp() > 0 ? "; " : "") << "exception: " << e.what();
        }
        if (!o.pass) ++failed;
        std::printf("%s criterion %zu (%s) [%.2fs]: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    seconds_since(t0), o.detail.str().c_str());
    }
    std::printf("%d of %zu criteria failed\n", failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
