#pragma once

// T-periodic attracting invariant curves y = phi(x) of f_{w,e} for k1 = 1.
//
// The curve is the fixed point of the graph transform: for each grid node s
// solve x + w alpha(w,e,x,phi(x)) = s (mod T) and set phi'(s) =
// beta(w,e,x,phi(x)). Verification helpers measure invariance off the grid,
// attraction rates, emergent periodicity on a doubled window, uniqueness
// across seeds and the scaling of sup|phi| with e.

#include "perimap/map_core.hpp"
#include "perimap/spline.hpp"

#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <concepts>
#include <optional>
#include <string>
#include <vector>

namespace perimap {

template <class C>
concept Curve = requires(const C& c, double x) {
    { c(x) } -> std::convertible_to<Vec>;
};

/// T-periodic R^{k2}-valued function sampled at x_i = i T / N and interpolated
/// componentwise by periodic cubic splines.
class PeriodicGridFn {
public:
    PeriodicGridFn() = default;

    PeriodicGridFn(double period, std::vector<Vec> values) : period_(period), values_(std::move(values)) {
        if (values_.empty()) throw PreconditionError("PeriodicGridFn needs nodes");
        const Eigen::Index k = values_.front().size();
        components_.reserve(static_cast<std::size_t>(k));
        for (Eigen::Index c = 0; c < k; ++c) {
            std::vector<double> col(values_.size());
            for (std::size_t i = 0; i < values_.size(); ++i) col[i] = values_[i](c);
            components_.emplace_back(period_, std::move(col));
        }
    }

    static PeriodicGridFn constant(double period, std::size_t n, const Vec& c) {
        return PeriodicGridFn(period, std::vector<Vec>(n, c));
    }

    template <class F>
    static PeriodicGridFn sample(double period, std::size_t n, F&& f) {
        std::vector<Vec> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = f(period * static_cast<double>(i) / static_cast<double>(n));
        return PeriodicGridFn(period, std::move(v));
    }

    Vec operator()(double x) const {
        Vec out(static_cast<Eigen::Index>(components_.size()));
        for (std::size_t c = 0; c < components_.size(); ++c) out(static_cast<Eigen::Index>(c)) = components_[c](x);
        return out;
    }

    double period() const { return period_; }
    std::size_t n_nodes() const { return values_.size(); }
    Eigen::Index dim() const { return values_.front().size(); }
    double node(std::size_t i) const { return period_ * static_cast<double>(i) / static_cast<double>(values_.size()); }
    const std::vector<Vec>& values() const { return values_; }

    double sup_norm() const {
        double s = 0.0;
        for (const auto& v : values_) s = std::max(s, v.norm());
        return s;
    }

    /// Sup of the interpolant sampled at `refine` points per grid interval.
    double sup_norm(std::size_t refine) const {
        const std::size_t m = values_.size() * std::max<std::size_t>(refine, 1);
        double s = sup_norm();
        for (std::size_t i = 0; i < m; ++i)
            s = std::max(s, (*this)(period_ * static_cast<double>(i) / static_cast<double>(m)).norm());
        return s;
    }

    /// Sup over nodes of the pointwise distance; grids must match.
    double node_distance(const PeriodicGridFn& other) const {
        if (other.n_nodes() != n_nodes()) throw PreconditionError("node_distance: grid sizes differ");
        double d = 0.0;
        for (std::size_t i = 0; i < values_.size(); ++i) d = std::max(d, (values_[i] - other.values_[i]).norm());
        return d;
    }

private:
    double period_ = 1.0;
    std::vector<Vec> values_;
    std::vector<PeriodicSpline> components_;
};

struct SolverReport {
    std::size_t iterations = 0;
    double final_update = 0.0;
    double invariance_residual = 0.0;
    double periodicity_defect = 0.0;  // of the representation; exactly 0 by construction
    std::vector<double> measured_rates;
    double rate_bound = 0.0;
    bool converged = false;
};

struct CurveConfig {
    std::size_t n_nodes = 256;
    double tol = 1e-12;
    std::size_t max_iter = 2000;
    std::optional<PeriodicGridFn> seed_curve;  // default: phi = 0
    std::size_t residual_samples = 1000;
    std::uint64_t residual_seed = 1;
    double residual_gate_factor = 10.0;
    double root_tol = 1e-14;
    std::optional<double> q;  // contraction constant for rate_bound; estimated when absent
};

/// q + 2(1 - q)/3.
inline double attraction_rate_bound(double q) { return q + 2.0 * (1.0 - q) / 3.0; }

namespace detail {

inline void require_curve_spec(const MapSpec& spec) {
    spec.validate();
    if (spec.k1 != 1) throw PreconditionError("invariant curve solver requires k1 = 1");
    if (!spec.periodic_coord) throw PreconditionError("invariant curve solver requires a periodic x coordinate");
}

inline Vec x1(double x) {
    Vec v(1);
    v(0) = x;
    return v;
}

/// Sampled Lipschitz constant of y -> beta(0,0,0,y) on the r1-disc.
inline double quick_q_estimate(const MapSpec& spec, std::size_t n = 64, std::uint64_t seed = 7) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Vec x0 = Vec::Zero(spec.k1);
    double q = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec a = ball_point(rng, spec.k2, spec.r1, u(rng));
        const Vec b = ball_point(rng, spec.k2, spec.r1, u(rng));
        const double d = (a - b).norm();
        if (d < 1e-6 * spec.r1) continue;
        q = std::max(q, (spec.beta_at(0.0, 0.0, x0, a) - spec.beta_at(0.0, 0.0, x0, b)).norm() / d);
    }
    return q;
}

}  // namespace detail

/// Image of graph(phi) under f_{omega,eps}, re-gridded on phi's nodes.
inline PeriodicGridFn graph_transform(const MapSpec& spec, double omega, double eps, const PeriodicGridFn& phi,
                                      double root_tol = 1e-14) {
    detail::require_curve_spec(spec);
    if (phi.dim() != spec.k2) throw PreconditionError("graph_transform: curve dimension differs from k2");
    if (phi.sup_norm() > spec.r1) throw DomainError("graph_transform: |phi| exceeds r1");
    const double T = spec.period;
    const std::size_t n = phi.n_nodes();
    std::vector<Vec> out(n);

    if (omega == 0.0) {
        // x does not move; the image is beta applied pointwise.
        parallel_for(n, [&](std::size_t i) {
            const double s = phi.node(i);
            out[i] = spec.beta_at(omega, eps, detail::x1(s), phi.values()[i]);
        });
        return PeriodicGridFn(T, std::move(out));
    }

    // Advance map at the nodes; it must be an orientation-preserving lift.
    std::vector<double> adv(n + 1);
    parallel_for(n, [&](std::size_t i) {
        const double x = phi.node(i);
        adv[i] = x + omega * spec.alpha_at(omega, eps, detail::x1(x), phi.values()[i])(0);
    });
    adv[n] = adv[0] + T;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(adv[i + 1] > adv[i]))
            throw PreconditionError("graph_transform: x-advance map is not strictly increasing "
                                    "(not an orientation-preserving circle map at these parameters)");
    }

    auto advance = [&](double x) {
        return x + omega * spec.alpha_at(omega, eps, detail::x1(x), phi(x))(0);
    };

    parallel_for(n, [&](std::size_t j) {
        const double s = phi.node(j);
        // Representative of s + mT inside [adv[0], adv[0] + T).
        double target = s + T * std::ceil((adv[0] - s) / T);
        if (target >= adv[n]) target -= T;
        if (target < adv[0]) target += T;
        const auto it = std::upper_bound(adv.begin(), adv.end(), target);
        if (it == adv.begin() || it == adv.end())
            throw PreconditionError("graph_transform: preimage bracketing failed");
        const std::size_t i = static_cast<std::size_t>(it - adv.begin()) - 1;
        const double lo = phi.node(i);
        const double hi = (i + 1 == n) ? T : phi.node(i + 1);
        double x;
        const double flo = adv[i] - target;
        if (flo == 0.0) {
            x = lo;
        } else {
            const double fhi = adv[i + 1] - target;
            std::uintmax_t iters = 200;
            auto tol = [root_tol](double a, double b) { return std::abs(b - a) <= root_tol * std::max(1.0, std::abs(a)); };
            auto r = boost::math::tools::toms748_solve([&](double z) { return advance(z) - target; }, lo, hi, flo,
                                                       fhi, tol, iters);
            x = 0.5 * (r.first + r.second);
        }
        out[j] = spec.beta_at(omega, eps, detail::x1(x), phi(x));
    });
    return PeriodicGridFn(T, std::move(out));
}

/// sup over sampled x of |beta(w,e,x,phi(x)) - phi(x + w alpha(w,e,x,phi(x)))|.
template <Curve C>
double invariance_residual(const MapSpec& spec, double omega, double eps, const C& phi, std::size_t n_samples,
                           std::uint64_t seed) {
    detail::require_curve_spec(spec);
    Box box{{0.0}, {spec.period}};
    const auto pts = latin_hypercube(box, n_samples, seed);
    std::vector<double> res(n_samples, 0.0);
    parallel_for(n_samples, [&](std::size_t i) {
        const double x = pts[i][0];
        const Vec y = phi(x);
        auto [a, b] = spec.both_at(omega, eps, detail::x1(x), y);
        const Vec image_on_curve = phi(x + omega * a(0));
        res[i] = (b - image_on_curve).norm();
    });
    return n_samples ? *std::max_element(res.begin(), res.end()) : 0.0;
}

struct CurveSolution {
    PeriodicGridFn curve;
    SolverReport report;
};

/// Iterates the graph transform from the seed curve until the sup-norm node
/// update is <= tol, then gates on the off-grid invariance residual.
inline CurveSolution solve_invariant_curve(const MapSpec& spec, double omega, double eps, const CurveConfig& cfg) {
    detail::require_curve_spec(spec);
    if (!(cfg.tol > 0.0)) throw PreconditionError("solve_invariant_curve: tol must be positive");
    CurveSolution sol;
    sol.curve = cfg.seed_curve ? *cfg.seed_curve
                               : PeriodicGridFn::constant(spec.period, cfg.n_nodes, Vec::Zero(spec.k2));
    SolverReport& rep = sol.report;
    rep.rate_bound = attraction_rate_bound(cfg.q ? *cfg.q : detail::quick_q_estimate(spec));
    double prev_update = -1.0;
    for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
        PeriodicGridFn next = graph_transform(spec, omega, eps, sol.curve, cfg.root_tol);
        const double update = next.node_distance(sol.curve);
        sol.curve = std::move(next);
        rep.iterations = it;
        rep.final_update = update;
        if (prev_update > 0.0) rep.measured_rates.push_back(update / prev_update);
        prev_update = update;
        if (update <= cfg.tol) break;
    }
    if (rep.final_update > cfg.tol)
        throw ConvergenceError("solve_invariant_curve: no convergence after " + std::to_string(cfg.max_iter) +
                               " iterations (last update " + std::to_string(rep.final_update) + ")");
    rep.invariance_residual =
        invariance_residual(spec, omega, eps, sol.curve, cfg.residual_samples, cfg.residual_seed);
    rep.converged = rep.invariance_residual <= cfg.residual_gate_factor * cfg.tol;
    return sol;
}

// ---------------------------------------------------------------------------
// Attraction
// ---------------------------------------------------------------------------

struct AttractionOptions {
    std::size_t n_trajectories = 20;
    std::size_t n_steps = 60;
    std::uint64_t seed = 1;
    double r0 = 0.01;           // initial y drawn from the r0-disc
    std::size_t transient = 5;  // rates before this step are reported separately
    double d_floor = 1e-8;      // ratios with d_j below this are not recorded
    double q = 0.5;
    bool start_on_graph = false;
};

struct AttractionReport {
    double max_rate = 0.0;            // over j >= transient
    double max_rate_all = 0.0;        // over all recorded j
    double min_rate = 0.0;            // over j >= transient
    double rate_bound = 0.0;
    double max_initial_distance = 0.0;
    double max_final_distance = 0.0;
    double max_distance = 0.0;        // over all steps and trajectories
    std::size_t recorded_ratios = 0;
    std::size_t escaped = 0;
};

/// Distance of forward trajectories from the curve, d_j = |y_j - phi(x_j)|,
/// and the per-step factors d_{j+1} / d_j.
template <Curve C>
AttractionReport attraction_test(const MapSpec& spec, double omega, double eps, const C& phi,
                                 const AttractionOptions& opt) {
    detail::require_curve_spec(spec);
    AttractionReport rep;
    rep.rate_bound = attraction_rate_bound(opt.q);
    rep.min_rate = std::numeric_limits<double>::infinity();
    Box box{{0.0, 0.0}, {spec.period, 1.0}};
    const auto pts = latin_hypercube(box, opt.n_trajectories, opt.seed);
    std::mt19937_64 rng(opt.seed ^ 0xa0761d6478bd642fULL);
    for (const auto& s : pts) {
        Vec x = detail::x1(s[0]);
        Vec y = opt.start_on_graph ? Vec(phi(s[0])) : ball_point(rng, spec.k2, opt.r0, s[1]);
        double d = (y - phi(x(0))).norm();
        rep.max_initial_distance = std::max(rep.max_initial_distance, d);
        rep.max_distance = std::max(rep.max_distance, d);
        bool escaped = false;
        for (std::size_t j = 0; j < opt.n_steps; ++j) {
            auto [a, b] = spec.both_at(omega, eps, x, y);
            if (b.norm() > spec.r1) {
                escaped = true;
                break;
            }
            x += omega * a;
            y = std::move(b);
            const double dn = (y - phi(x(0))).norm();
            rep.max_distance = std::max(rep.max_distance, dn);
            if (d >= opt.d_floor) {
                const double ratio = dn / d;
                ++rep.recorded_ratios;
                rep.max_rate_all = std::max(rep.max_rate_all, ratio);
                if (j >= opt.transient) {
                    rep.max_rate = std::max(rep.max_rate, ratio);
                    rep.min_rate = std::min(rep.min_rate, ratio);
                }
            }
            d = dn;
        }
        if (escaped) ++rep.escaped;
        rep.max_final_distance = std::max(rep.max_final_distance, d);
    }
    if (!std::isfinite(rep.min_rate)) rep.min_rate = 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Emergent periodicity on a doubled window
// ---------------------------------------------------------------------------

struct PeriodicityConfig {
    std::size_t n_nodes = 128;        // nodes per period on the window [0, 2T]
    std::size_t pullback_steps = 60;  // n in y_n = phi(x_n) from (x_0, 0)
    std::size_t n_samples = 400;
    double root_tol = 1e-13;
};

struct PeriodicityResult {
    double defect = 0.0;
    std::vector<double> nodes;
    std::vector<Vec> values;
};

namespace detail {

struct PullbackEnd {
    double x;
    Vec y;
};

inline PullbackEnd push_forward(const MapSpec& spec, double omega, double eps, double x0, std::size_t n) {
    Vec x = x1(x0);
    Vec y = Vec::Zero(spec.k2);
    for (std::size_t j = 0; j < n; ++j) {
        auto [a, b] = spec.both_at(omega, eps, x, y);
        if (b.norm() > spec.r1) throw DomainError("pullback orbit left the r1-disc");
        x += omega * a;
        y = std::move(b);
    }
    return {x(0), y};
}

/// Value of the invariant curve at s, computed as y_n along the orbit from
/// (x_0, 0) whose n-th x-iterate equals s. No periodic identification is used.
inline Vec pullback_value(const MapSpec& spec, double omega, double eps, double s, std::size_t n, double root_tol) {
    if (omega == 0.0) return push_forward(spec, omega, eps, s, n).y;
    auto f = [&](double x0) { return push_forward(spec, omega, eps, x0, n).x - s; };
    // x_n(x0) = x0 + R(x0) with R bounded: shift by R(s), then widen.
    const double guess = s - f(s);
    double lo = guess, hi = guess;
    double flo = f(lo), fhi = flo;
    const double step = std::max(spec.period, 1e-3);
    for (int k = 0; k < 200 && !(flo <= 0.0 && fhi >= 0.0); ++k) {
        if (flo > 0.0) {
            lo -= step;
            flo = f(lo);
        }
        if (fhi < 0.0) {
            hi += step;
            fhi = f(hi);
        }
    }
    if (!(flo <= 0.0 && fhi >= 0.0)) throw PreconditionError("pullback: could not bracket the orbit start");
    double x0;
    if (flo == 0.0) {
        x0 = lo;
    } else if (fhi == 0.0) {
        x0 = hi;
    } else {
        std::uintmax_t iters = 200;
        auto tol = [root_tol](double a, double b) { return std::abs(b - a) <= root_tol * std::max(1.0, std::abs(a)); };
        auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
        x0 = 0.5 * (r.first + r.second);
    }
    return push_forward(spec, omega, eps, x0, n).y;
}

}  // namespace detail

/// Computes the invariant curve on [0, 2T] without periodic identification
/// (orbit pullback at the nodes, clamped spline between them) and returns
/// sup over x in [0, T] of |phi(x + T) - phi(x)|.
inline PeriodicityResult periodicity_defect(const MapSpec& spec, double omega, double eps,
                                            const PeriodicityConfig& cfg = {}) {
    detail::require_curve_spec(spec);
    const double T = spec.period;
    const std::size_t m = 2 * cfg.n_nodes;  // intervals on [0, 2T]
    const double h = 2.0 * T / static_cast<double>(m);
    PeriodicityResult res;
    res.nodes.resize(m + 1);
    res.values.resize(m + 1);
    parallel_for(m + 1, [&](std::size_t i) {
        const double s = h * static_cast<double>(i);
        res.nodes[i] = s;
        res.values[i] = detail::pullback_value(spec, omega, eps, s, cfg.pullback_steps, cfg.root_tol);
    });
    std::vector<ClampedSpline> comps;
    for (Eigen::Index c = 0; c < spec.k2; ++c) {
        std::vector<double> col(m + 1);
        for (std::size_t i = 0; i <= m; ++i) col[i] = res.values[i](c);
        comps.emplace_back(0.0, h, std::move(col));
    }
    for (std::size_t k = 0; k <= cfg.n_samples; ++k) {
        const double x = T * static_cast<double>(k) / static_cast<double>(cfg.n_samples);
        double d2 = 0.0;
        for (const auto& sp : comps) {
            const double d = sp(x + T) - sp(x);
            d2 += d * d;
        }
        res.defect = std::max(res.defect, std::sqrt(d2));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Uniqueness and e-continuity
// ---------------------------------------------------------------------------

/// Sup-norm distance between the curves converged from two seeds.
inline double uniqueness_test(const MapSpec& spec, double omega, double eps, CurveConfig cfg,
                              const PeriodicGridFn& seed_a, const PeriodicGridFn& seed_b) {
    cfg.seed_curve = seed_a;
    const CurveSolution a = solve_invariant_curve(spec, omega, eps, cfg);
    cfg.seed_curve = seed_b;
    const CurveSolution b = solve_invariant_curve(spec, omega, eps, cfg);
    return a.curve.node_distance(b.curve);
}

struct ContinuityRow {
    double eps = 0.0;
    double sup_norm = 0.0;
    double ratio = 0.0;  // sup_norm / |eps|, 0 when eps = 0
    bool ok = false;
    std::string error;
};

struct ContinuityTable {
    std::vector<ContinuityRow> rows;
    double ratio_band = 0.0;      // max ratio / min ratio over eps != 0
    bool vanishes_at_zero = true;  // sup_norm nondecreasing in |eps|, ~0 at eps = 0
    bool band_ok = false;          // ratio_band <= band_limit
};

inline ContinuityTable continuity_in_eps(const MapSpec& spec, double omega, std::vector<double> eps_list,
                                         const CurveConfig& cfg, double band_limit = 1.5) {
    std::sort(eps_list.begin(), eps_list.end());
    ContinuityTable tab;
    for (double e : eps_list) {
        ContinuityRow row;
        row.eps = e;
        try {
            const CurveSolution sol = solve_invariant_curve(spec, omega, e, cfg);
            row.sup_norm = sol.curve.sup_norm(32);
            row.ratio = e != 0.0 ? row.sup_norm / std::abs(e) : 0.0;
            row.ok = sol.report.converged;
        } catch (const Error& err) {
            row.error = err.what();
        }
        tab.rows.push_back(std::move(row));
    }
    double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
    for (const auto& r : tab.rows) {
        if (!r.ok || r.eps == 0.0) continue;
        rmin = std::min(rmin, r.ratio);
        rmax = std::max(rmax, r.ratio);
    }
    tab.ratio_band = rmax > 0.0 ? rmax / rmin : 0.0;
    tab.band_ok = rmax > 0.0 && tab.ratio_band <= band_limit;
    for (const auto& a : tab.rows) {
        if (!a.ok) {
            tab.vanishes_at_zero = false;
            continue;
        }
        if (a.eps == 0.0 && a.sup_norm > cfg.tol) tab.vanishes_at_zero = false;
        for (const auto& b : tab.rows)
            if (b.ok && std::abs(b.eps) > std::abs(a.eps) && b.sup_norm < a.sup_norm) tab.vanishes_at_zero = false;
    }
    return tab;
}

}  // namespace perimap
