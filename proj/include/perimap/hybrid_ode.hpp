#pragma once

// Periodically forced hybrid systems
//
//     x' = X(x) + e g(t, x, e),        x(t) = Delta(x(t-))  if  H(x(t-)) = 0,
//
// with a chart D : R^k2 -> S = {H = 0}, and the forced flow with detection of
// the first transversal crossing of S.

#include "perimap/core.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/toms748_solve.hpp>
#include <boost/numeric/odeint.hpp>

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace perimap {

struct HybridSystem {
    std::string name;
    Eigen::Index k2 = 1;  // state dimension is k2 + 1
    double T_g = 1.0;     // forcing period
    double r1 = 0.1;      // chart radius
    std::function<Vec(const Vec&)> X;
    std::function<Vec(double t, const Vec& x, double eps)> g;
    std::function<Vec(const Vec&)> Delta;
    std::function<double(const Vec&)> H;
    std::function<Vec(const Vec&)> D;          // R^k2 -> R^{k2+1}
    std::function<Vec(const Vec&)> D_inverse;  // left inverse of D on its image
    int event_direction = +1;                  // accepted sign of dH/dt at a crossing; 0 accepts both

    Eigen::Index dim() const { return k2 + 1; }
};

struct FlowOptions {
    double rtol = 1e-10;
    double atol = 1e-12;
    double event_tol = 1e-12;
    double max_time = 50.0;  // horizon for event mode, relative to the start time
    double max_dt = 0.05;
    double initial_dt = 1e-3;
    double dense_dt = 0.0;  // > 0 records samples on this time grid
    std::optional<int> direction;  // overrides the system's event direction
};

struct StepStats {
    std::size_t steps = 0;
    std::size_t event_refinements = 0;
    std::size_t grazing_suspects = 0;
    double min_dt = std::numeric_limits<double>::infinity();
};

struct FlowSample {
    double t;
    Vec x;
};

struct FlowResult {
    double end_time = 0.0;
    Vec end_state;
    bool event_hit = false;
    std::vector<FlowSample> dense_samples;
    StepStats step_stats;
};

struct StopCondition {
    enum class Kind { Event, FixedTime };
    Kind kind = Kind::Event;
    double t_end = 0.0;

    static StopCondition event() { return {Kind::Event, 0.0}; }
    static StopCondition fixed_time(double t) { return {Kind::FixedTime, t}; }
};

/// Gradient of H by central differences.
inline Vec grad_H(const HybridSystem& sys, const Vec& x) {
    auto f = [&](const Vec& p) {
        Vec v(1);
        v(0) = sys.H(p);
        return v;
    };
    return fd_jacobian(f, x).row(0).transpose();
}

/// Moves x onto S along grad H (one Newton step on H).
inline Vec project_to_section(const HybridSystem& sys, const Vec& x) {
    const Vec gh = grad_H(sys, x);
    const double n2 = gh.squaredNorm();
    if (n2 == 0.0) return x;
    return x - (sys.H(x) / n2) * gh;
}

namespace detail {

using OdeState = std::vector<double>;

inline constexpr int kEventSubsamples = 4;

inline Vec to_vec(const OdeState& s) { return Eigen::Map<const Vec>(s.data(), static_cast<Eigen::Index>(s.size())); }

inline OdeState to_state(const Vec& v) { return OdeState(v.data(), v.data() + v.size()); }

/// Integrates from (tau, v) up to t_stop. With detect_events, stops at the
/// first accepted crossing of S (subject to the departure standoff).
inline FlowResult integrate(const HybridSystem& sys, double tau, const Vec& v, double eps, double t_stop,
                            bool detect_events, const FlowOptions& opt) {
    namespace odeint = boost::numeric::odeint;
    using Stepper = odeint::runge_kutta_dopri5<OdeState>;

    FlowResult res;
    if (v.size() != sys.dim()) throw PreconditionError("flow: state dimension mismatch");
    if (t_stop < tau) throw PreconditionError("flow: end time precedes start time");
    if (t_stop == tau) {
        res.end_time = tau;
        res.end_state = v;
        if (opt.dense_dt > 0.0) res.dense_samples.push_back({tau, v});
        return res;
    }

    auto rhs = [&](const OdeState& s, OdeState& ds, double t) {
        const Vec x = to_vec(s);
        Vec f = sys.X(x);
        if (eps != 0.0) f += eps * sys.g(t, x, eps);
        if (!f.allFinite()) throw EvaluationError("vector field returned a non-finite value");
        ds.assign(f.data(), f.data() + f.size());
    };

    auto dense = odeint::make_dense_output(opt.atol, opt.rtol, opt.max_dt, Stepper());
    dense.initialize(to_state(v), tau, std::min(opt.initial_dt, t_stop - tau));

    const int direction = opt.direction.value_or(sys.event_direction);
    const double standoff = 10.0 * opt.event_tol;
    bool armed = std::abs(sys.H(v)) > standoff;
    double h_prev = sys.H(v);

    auto h_at = [&](double t) {
        OdeState st(static_cast<std::size_t>(v.size()));
        dense.calc_state(t, st);
        return sys.H(to_vec(st));
    };

    double next_sample = tau;
    OdeState tmp(static_cast<std::size_t>(v.size()));
    auto emit_samples = [&](double upto) {
        if (!(opt.dense_dt > 0.0)) return;
        while (next_sample <= upto) {
            dense.calc_state(next_sample, tmp);
            res.dense_samples.push_back({next_sample, to_vec(tmp)});
            next_sample += opt.dense_dt;
        }
    };
    if (opt.dense_dt > 0.0) {
        res.dense_samples.push_back({tau, v});
        next_sample = tau + opt.dense_dt;
    }

    try {
        while (true) {
            const auto span = dense.do_step(rhs);
            const double t0 = span.first, t1 = span.second;
            ++res.step_stats.steps;
            const double dt = t1 - t0;
            res.step_stats.min_dt = std::min(res.step_stats.min_dt, dt);
            if (dt < 1e-14 * std::max(1.0, std::abs(t1))) throw IntegrationError("flow: step size underflow");

            const Vec x1 = to_vec(dense.current_state());
            if (detect_events) {
                const double h1 = sys.H(x1);
                if (!armed) {
                    if (std::abs(h1) > standoff) armed = true;
                } else {
                    // H on a uniform sub-grid of the step; a crossing is the
                    // first accepted sign change between consecutive samples.
                    std::array<double, kEventSubsamples + 1> ts{}, hs{};
                    for (int k = 0; k <= kEventSubsamples; ++k) {
                        ts[k] = k == kEventSubsamples ? t1 : t0 + (t1 - t0) * k / kEventSubsamples;
                        hs[k] = k == 0 ? h_prev : k == kEventSubsamples ? h1 : h_at(ts[k]);
                    }
                    int hit = -1;
                    for (int k = 0; k < kEventSubsamples && hit < 0; ++k) {
                        const bool up = hs[k] < 0.0 && hs[k + 1] >= 0.0;
                        const bool down = hs[k] > 0.0 && hs[k + 1] <= 0.0;
                        if ((direction >= 0 && up) || (direction <= 0 && down)) hit = k;
                    }
                    if (hit >= 0) {
                        double te = ts[hit + 1];
                        if (hs[hit + 1] != 0.0) {
                            std::uintmax_t iters = 200;
                            auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-13; };
                            const auto r = boost::math::tools::toms748_solve(h_at, ts[hit], ts[hit + 1], hs[hit],
                                                                             hs[hit + 1], tol, iters);
                            res.step_stats.event_refinements += static_cast<std::size_t>(iters);
                            te = std::abs(h_at(r.first)) <= std::abs(h_at(r.second)) ? r.first : r.second;
                        }
                        if (te <= t_stop) {
                            emit_samples(te);
                            dense.calc_state(te, tmp);
                            res.end_time = te;
                            res.end_state = to_vec(tmp);
                            res.event_hit = true;
                            if (opt.dense_dt > 0.0) res.dense_samples.push_back({te, res.end_state});
                            return res;
                        }
                    } else {
                        // No sign change: an interior dip of |H| below the
                        // standoff is a tangential touch, flagged and skipped.
                        int kmin = 0;
                        for (int k = 1; k <= kEventSubsamples; ++k)
                            if (std::abs(hs[k]) < std::abs(hs[kmin])) kmin = k;
                        double hmin = std::abs(hs[kmin]);
                        if (kmin > 0 && kmin < kEventSubsamples) {
                            const auto m = boost::math::tools::brent_find_minima(
                                [&](double t) { return std::abs(h_at(t)); }, ts[kmin - 1], ts[kmin + 1], 40);
                            hmin = m.second;
                        }
                        if (hmin < standoff) ++res.step_stats.grazing_suspects;
                    }
                }
                h_prev = h1;
            }
            if (t1 >= t_stop) {
                emit_samples(t_stop);
                dense.calc_state(t_stop, tmp);
                res.end_time = t_stop;
                res.end_state = to_vec(tmp);
                return res;
            }
            emit_samples(t1);
        }
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw IntegrationError(std::string("flow: integrator failure: ") + e.what());
    }
}

}  // namespace detail

/// Solution of the forced (non-jumping) flow from (tau, v). In event mode the
/// run ends at the first accepted crossing of S; reaching tau + max_time first
/// is an error (no return on the probed horizon).
inline FlowResult flow(const HybridSystem& sys, double tau, const Vec& v, double eps, StopCondition stop,
                       const FlowOptions& opt = {}) {
    if (stop.kind == StopCondition::Kind::FixedTime)
        return detail::integrate(sys, tau, v, eps, stop.t_end, false, opt);
    FlowResult r = detail::integrate(sys, tau, v, eps, tau + opt.max_time, true, opt);
    if (!r.event_hit) throw IntegrationError("flow: no crossing of the switching surface within max_time");
    return r;
}

/// Hybrid trajectory on [tau, t_end]: flows, applies Delta at each crossing,
/// and concatenates dense samples.
inline std::vector<FlowSample> simulate_hybrid(const HybridSystem& sys, double tau, const Vec& v, double eps,
                                               double t_end, FlowOptions opt, std::size_t max_jumps = 1000) {
    if (!(opt.dense_dt > 0.0)) opt.dense_dt = 1e-2;
    std::vector<FlowSample> out;
    double t = tau;
    Vec x = v;
    for (std::size_t k = 0; k <= max_jumps; ++k) {
        FlowResult r = detail::integrate(sys, t, x, eps, t_end, true, opt);
        out.insert(out.end(), r.dense_samples.begin(), r.dense_samples.end());
        if (!r.event_hit) return out;
        t = r.end_time;
        x = sys.Delta(r.end_state);
    }
    return out;
}

/// grad H . X at D(anchor).
inline double check_transversality(const HybridSystem& sys, const Vec& anchor) {
    const Vec x = sys.D(anchor);
    return grad_H(sys, x).dot(sys.X(x));
}

inline double check_transversality(const HybridSystem& sys) { return check_transversality(sys, Vec::Zero(sys.k2)); }

/// Sampled sup of |g(t + T_g, x, e) - g(t, x, e)| over t in [0, T_g], x in a
/// box around the chart, e in [-1, 1].
inline double check_forcing_period(const HybridSystem& sys, std::size_t n_samples, std::uint64_t seed) {
    const Eigen::Index n = sys.dim();
    const Vec c = sys.D(Vec::Zero(sys.k2));
    Box box;
    box.lo = {0.0, -1.0};
    box.hi = {sys.T_g, 1.0};
    for (Eigen::Index i = 0; i < n; ++i) {
        box.lo.push_back(c(i) - 2.0);
        box.hi.push_back(c(i) + 2.0);
    }
    double defect = 0.0;
    for (const auto& s : latin_hypercube(box, n_samples, seed)) {
        Vec x(n);
        for (Eigen::Index i = 0; i < n; ++i) x(i) = s[2 + static_cast<std::size_t>(i)];
        defect = std::max(defect, (sys.g(s[0] + sys.T_g, x, s[1]) - sys.g(s[0], x, s[1])).norm());
    }
    return defect;
}

/// Sampled sup of |H(D(u))| and |D^{-1}(D(u)) - u| over the r1-disc.
inline std::pair<double, double> check_chart(const HybridSystem& sys, std::size_t n_samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double on_section = 0.0, inverse = 0.0;
    for (std::size_t i = 0; i < n_samples; ++i) {
        const Vec u = ball_point(rng, sys.k2, sys.r1, unit(rng));
        const Vec x = sys.D(u);
        on_section = std::max(on_section, std::abs(sys.H(x)));
        inverse = std::max(inverse, (sys.D_inverse(x) - u).norm());
    }
    return {on_section, inverse};
}

// ---------------------------------------------------------------------------
// Built-in: planar cycle with radial jump
// ---------------------------------------------------------------------------

struct PolarHybridParams {
    double kappa = 0.5;      // jump contracts the radius: r -> 1 + kappa (r - 1)
    double T_g = 0.8;
    double amplitude = 1.0;  // g = amplitude * (cos(2 pi t / T_g), 0)
    double r1 = 0.1;
};

/// r' = r(1 - r), theta' = 2 pi in Cartesian coordinates; S = {x2 = 0}
/// crossed upward on x1 > 0; chart D(u) = (1 + u, 0).
inline HybridSystem polar_hybrid(const PolarHybridParams& p = {}) {
    HybridSystem s;
    s.name = "polar-hybrid";
    s.k2 = 1;
    s.T_g = p.T_g;
    s.r1 = p.r1;
    s.X = [](const Vec& x) {
        const double r = x.norm();
        Vec f(2);
        f(0) = x(0) * (1.0 - r) - 2.0 * kPi * x(1);
        f(1) = x(1) * (1.0 - r) + 2.0 * kPi * x(0);
        return f;
    };
    s.g = [p](double t, const Vec&, double) {
        Vec f(2);
        f(0) = p.amplitude * std::cos(2.0 * kPi * t / p.T_g);
        f(1) = 0.0;
        return f;
    };
    s.Delta = [k = p.kappa](const Vec& x) {
        const double r = x.norm();
        if (r == 0.0) return Vec(x);
        return Vec(x * ((1.0 + k * (r - 1.0)) / r));
    };
    s.H = [](const Vec& x) { return x(1); };
    s.D = [](const Vec& u) {
        Vec x(2);
        x(0) = 1.0 + u(0);
        x(1) = 0.0;
        return x;
    };
    s.D_inverse = [](const Vec& x) {
        Vec u(1);
        u(0) = x(0) - 1.0;
        return u;
    };
    s.event_direction = +1;
    return s;
}

}  // namespace perimap
