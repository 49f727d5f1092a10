#pragma once

// Periodically perturbed maps of the form
//
//     f_{w,e}(x, y) = (x + w * alpha(w, e, x, y), beta(w, e, x, y)),
//
// trajectory iteration, and sampled certification of the standing
// assumptions (boundedness, e = 0 degeneracy, contraction in y,
// periodicity in one x coordinate).

#include "perimap/core.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace perimap {

using MapFn = std::function<Vec(double omega, double eps, const Vec& x, const Vec& y)>;

/// Both components in one call. Optional; used when alpha and beta share an
/// expensive computation (a Poincare return, for instance).
using JointMapFn = std::function<std::pair<Vec, Vec>(double omega, double eps, const Vec& x, const Vec& y)>;

struct MapSpec {
    std::string name;
    Eigen::Index k1 = 1;
    Eigen::Index k2 = 1;
    double r1 = 1.0;
    MapFn alpha;
    MapFn beta;
    JointMapFn joint;
    /// Zero-based index of the coordinate in which alpha and beta are periodic.
    std::optional<Eigen::Index> periodic_coord;
    double period = 0.0;

    Vec alpha_at(double omega, double eps, const Vec& x, const Vec& y) const {
        Vec a = alpha(omega, eps, x, y);
        require_finite(a, "alpha");
        return a;
    }

    Vec beta_at(double omega, double eps, const Vec& x, const Vec& y) const {
        Vec b = beta(omega, eps, x, y);
        require_finite(b, "beta");
        return b;
    }

    std::pair<Vec, Vec> both_at(double omega, double eps, const Vec& x, const Vec& y) const {
        std::pair<Vec, Vec> ab = joint ? joint(omega, eps, x, y)
                                       : std::pair<Vec, Vec>{alpha(omega, eps, x, y), beta(omega, eps, x, y)};
        require_finite(ab.first, "alpha");
        require_finite(ab.second, "beta");
        return ab;
    }

    void validate() const {
        if (k1 < 1 || k2 < 1) throw PreconditionError("map dimensions must be positive");
        if (!(r1 > 0.0)) throw PreconditionError("r1 must be positive");
        if (!alpha || !beta) throw PreconditionError("alpha and beta must be set");
        if (periodic_coord) {
            if (*periodic_coord < 0 || *periodic_coord >= k1)
                throw PreconditionError("periodic coordinate out of range");
            if (!(period > 0.0)) throw PreconditionError("period must be positive when a periodic coordinate is set");
        }
    }
};

struct MapPoint {
    Vec x;
    Vec y;
};

/// One application of f_{omega,eps}. Throws DomainError when |y| > r1.
inline MapPoint eval_map(const MapSpec& spec, double omega, double eps, const Vec& x, const Vec& y) {
    if (y.norm() > spec.r1) throw DomainError("eval_map: |y| exceeds r1");
    auto [a, b] = spec.both_at(omega, eps, x, y);
    return {x + omega * a, std::move(b)};
}

struct Trajectory {
    std::vector<MapPoint> points;
    double omega = 0.0;
    double eps = 0.0;
    bool escaped = false;
};

/// Iterates up to n steps. Stops early (escaped = true) as soon as an iterate
/// leaves the closed r1-disc; the escaping iterate is not appended.
inline Trajectory iterate(const MapSpec& spec, double omega, double eps, const Vec& x0, const Vec& y0,
                          std::size_t n) {
    if (y0.norm() > spec.r1) throw DomainError("iterate: |y0| exceeds r1");
    Trajectory tr;
    tr.omega = omega;
    tr.eps = eps;
    tr.points.reserve(n + 1);
    tr.points.push_back({x0, y0});
    for (std::size_t j = 0; j < n; ++j) {
        const MapPoint& p = tr.points.back();
        auto [a, b] = spec.both_at(omega, eps, p.x, p.y);
        if (b.norm() > spec.r1) {
            tr.escaped = true;
            break;
        }
        tr.points.push_back({p.x + omega * a, std::move(b)});
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Assumption checks
// ---------------------------------------------------------------------------

struct AssumptionBox {
    double omega_lo = 0.0;
    double omega_hi = 1.0;
    double eps_lo = 0.0;
    double eps_hi = 0.0;
    std::vector<double> x_lo;
    std::vector<double> x_hi;
};

/// omega in [0,1], eps in (-r1, r1), the periodic coordinate over one period
/// and every other x coordinate over [-1, 1].
inline AssumptionBox default_box(const MapSpec& spec) {
    AssumptionBox box;
    box.eps_lo = -spec.r1;
    box.eps_hi = spec.r1;
    box.x_lo.assign(static_cast<std::size_t>(spec.k1), -1.0);
    box.x_hi.assign(static_cast<std::size_t>(spec.k1), 1.0);
    if (spec.periodic_coord) {
        box.x_lo[static_cast<std::size_t>(*spec.periodic_coord)] = 0.0;
        box.x_hi[static_cast<std::size_t>(*spec.periodic_coord)] = spec.period;
    }
    return box;
}

struct SampledBounds {
    double sup_alpha = 0.0;
    double sup_beta = 0.0;
    double sup_dalpha = 0.0;   // sup |D_{x,y} alpha|
    double sup_dbeta = 0.0;    // sup |D_{x,y} beta|
    double sup_d2alpha = 0.0;  // sup of coordinate second differences
    double sup_d2beta = 0.0;
};

struct AssumptionReport {
    double q_estimate = 0.0;
    Mat beta_y0;
    bool beta_y0_invertible = false;
    double a2_defect = 0.0;
    double periodicity_defect = 0.0;
    SampledBounds bounds;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
};

struct AssumptionOptions {
    bool with_bounds = true;
    /// A Jacobian whose smallest singular value is below this is "singular".
    double singular_tol = 1e-8;
};

/// Central-difference Jacobian of y -> beta(0, 0, 0, y) at y = 0.
inline Mat beta_jacobian_at_origin(const MapSpec& spec) {
    const Vec x0 = Vec::Zero(spec.k1);
    auto f = [&](const Vec& y) { return spec.beta_at(0.0, 0.0, x0, y); };
    return fd_jacobian(f, Vec::Zero(spec.k2));
}

namespace detail {

inline Vec slice_x(const std::vector<double>& s, std::size_t off, Eigen::Index k) {
    Vec v(k);
    for (Eigen::Index i = 0; i < k; ++i) v(i) = s[off + static_cast<std::size_t>(i)];
    return v;
}

}  // namespace detail

inline AssumptionReport check_assumptions(const MapSpec& spec, const AssumptionBox& box, std::size_t n_samples,
                                          std::uint64_t seed, const AssumptionOptions& opt = {}) {
    spec.validate();
    if (n_samples < 2) throw PreconditionError("check_assumptions: n_samples must be >= 2");
    const auto k1 = spec.k1;
    const auto k2 = spec.k2;
    const Vec x0 = Vec::Zero(k1);

    AssumptionReport rep;
    rep.n_samples = n_samples;
    rep.seed = seed;

    // Sample layout: omega, eps, x (k1), radial1, radial2.
    Box b;
    b.lo = {box.omega_lo, box.eps_lo};
    b.hi = {box.omega_hi, box.eps_hi};
    for (Eigen::Index i = 0; i < k1; ++i) {
        b.lo.push_back(box.x_lo[static_cast<std::size_t>(i)]);
        b.hi.push_back(box.x_hi[static_cast<std::size_t>(i)]);
    }
    b.lo.push_back(0.0);
    b.hi.push_back(1.0);
    b.lo.push_back(0.0);
    b.hi.push_back(1.0);
    const auto pts = latin_hypercube(b, n_samples, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);

    std::vector<Vec> y1s(n_samples), y2s(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const auto& s = pts[i];
        y1s[i] = ball_point(rng, k2, spec.r1, s[2 + static_cast<std::size_t>(k1)]);
        y2s[i] = ball_point(rng, k2, spec.r1, s[3 + static_cast<std::size_t>(k1)]);
    }

    // A3: Lipschitz constant of y -> beta(0,0,0,y) on the r1-disc.
    for (std::size_t i = 0; i < n_samples; ++i) {
        const double dy = (y1s[i] - y2s[i]).norm();
        if (dy < 1e-6 * spec.r1) continue;
        const Vec b1 = spec.beta_at(0.0, 0.0, x0, y1s[i]);
        const Vec b2 = spec.beta_at(0.0, 0.0, x0, y2s[i]);
        rep.q_estimate = std::max(rep.q_estimate, (b1 - b2).norm() / dy);
    }
    rep.beta_y0 = beta_jacobian_at_origin(spec);
    rep.beta_y0_invertible = min_singular_value(rep.beta_y0) > opt.singular_tol;

    // A2: at eps = 0, alpha and beta do not depend on omega or x; beta(0) = 0.
    rep.a2_defect = spec.beta_at(0.0, 0.0, x0, Vec::Zero(k2)).norm();
    for (std::size_t i = 0; i < n_samples; ++i) {
        const auto& s = pts[i];
        const Vec x = detail::slice_x(s, 2, k1);
        const Vec& y = y1s[i];
        const double w = s[0];
        rep.a2_defect = std::max(rep.a2_defect,
                                 (spec.alpha_at(w, 0.0, x, y) - spec.alpha_at(0.0, 0.0, x0, y)).norm());
        rep.a2_defect = std::max(rep.a2_defect,
                                 (spec.beta_at(w, 0.0, x, y) - spec.beta_at(0.0, 0.0, x0, y)).norm());
    }

    // A1': invariance under x^k -> x^k + T.
    if (spec.periodic_coord) {
        for (std::size_t i = 0; i < n_samples; ++i) {
            const auto& s = pts[i];
            const Vec x = detail::slice_x(s, 2, k1);
            Vec xs = x;
            xs(*spec.periodic_coord) += spec.period;
            const Vec& y = y1s[i];
            auto [a0, b0] = spec.both_at(s[0], s[1], x, y);
            auto [a1, b1] = spec.both_at(s[0], s[1], xs, y);
            rep.periodicity_defect = std::max({rep.periodicity_defect, (a1 - a0).norm(), (b1 - b0).norm()});
        }
    }

    if (opt.with_bounds) {
        SampledBounds& bd = rep.bounds;
        const double shrink = 1.0 - 1e-3;
        for (std::size_t i = 0; i < n_samples; ++i) {
            const auto& s = pts[i];
            const double w = s[0];
            const double e = s[1];
            Vec p(k1 + k2);
            p.head(k1) = detail::slice_x(s, 2, k1);
            p.tail(k2) = y1s[i] * shrink;
            if (p.tail(k2).norm() + fd_step_second(p.norm()) > spec.r1) p.tail(k2) *= 0.5;
            auto fa = [&](const Vec& z) { return spec.alpha_at(w, e, z.head(k1), z.tail(k2)); };
            auto fb = [&](const Vec& z) { return spec.beta_at(w, e, z.head(k1), z.tail(k2)); };
            const Vec a = fa(p);
            const Vec bb = fb(p);
            bd.sup_alpha = std::max(bd.sup_alpha, a.norm());
            bd.sup_beta = std::max(bd.sup_beta, bb.norm());
            bd.sup_dalpha = std::max(bd.sup_dalpha, op_norm(fd_jacobian(fa, p)));
            bd.sup_dbeta = std::max(bd.sup_dbeta, op_norm(fd_jacobian(fb, p)));
            const double h2 = fd_step_second(p.norm());
            Vec q = p;
            for (Eigen::Index j = 0; j < p.size(); ++j) {
                q(j) = p(j) + h2;
                const Vec ap = fa(q), bp = fb(q);
                q(j) = p(j) - h2;
                const Vec am = fa(q), bm = fb(q);
                q(j) = p(j);
                bd.sup_d2alpha = std::max(bd.sup_d2alpha, (ap - 2.0 * a + am).norm() / (h2 * h2));
                bd.sup_d2beta = std::max(bd.sup_d2beta, (bp - 2.0 * bb + bm).norm() / (h2 * h2));
            }
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Built-in maps
// ---------------------------------------------------------------------------

struct ShearParams {
    double q = 0.5;
    double coupling = 1.0;  // beta gains eps * coupling * sin(2 pi x / period)
    double period = 1.0;
    double r1 = 1.0;
    double quad = 0.0;  // beta gains quad * eps * y^2 (nonlinear-toy)
    /// Optional extra forcing eps * extra_coupling * sin(2 pi x / extra_period);
    /// with an extra period incommensurate with `period` this breaks periodicity.
    double extra_period = 0.0;
    double extra_coupling = 0.0;
};

inline MapSpec make_shear_map(const ShearParams& p, std::string name) {
    MapSpec s;
    s.name = std::move(name);
    s.k1 = 1;
    s.k2 = 1;
    s.r1 = p.r1;
    s.periodic_coord = 0;
    s.period = p.period;
    s.alpha = [](double, double, const Vec&, const Vec&) { return Vec::Ones(1); };
    s.beta = [p](double, double eps, const Vec& x, const Vec& y) {
        double v = p.q * y(0) + eps * p.coupling * std::sin(2.0 * kPi * x(0) / p.period);
        if (p.quad != 0.0) v += p.quad * eps * y(0) * y(0);
        if (p.extra_period > 0.0) v += eps * p.extra_coupling * std::sin(2.0 * kPi * x(0) / p.extra_period);
        Vec out(1);
        out(0) = v;
        return out;
    };
    return s;
}

/// alpha = 1, beta = q y + eps sin(2 pi x / T).
inline MapSpec linear_shear(double q = 0.5, double period = 1.0, double r1 = 1.0, double coupling = 1.0) {
    ShearParams p;
    p.q = q;
    p.period = period;
    p.r1 = r1;
    p.coupling = coupling;
    return make_shear_map(p, "linear-shear");
}

/// alpha = 1, beta = q y + eps sin(2 pi x / T) + quad eps y^2.
inline MapSpec nonlinear_toy(double q = 0.5, double quad = 0.1, double period = 1.0, double r1 = 1.0,
                             double coupling = 1.0) {
    ShearParams p;
    p.q = q;
    p.quad = quad;
    p.period = period;
    p.r1 = r1;
    p.coupling = coupling;
    return make_shear_map(p, "nonlinear-toy");
}

}  // namespace perimap
