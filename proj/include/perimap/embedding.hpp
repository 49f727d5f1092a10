#pragma once

// Rescaled embedding of f_{w,e} into a map of (w, e, x, y):
//
//   F_l(w,e,x,y) = (A_l (w,e,x) + a~_l(w,e,x,y),  B y + b~_l(w,e,x,y))
//   A_l          = [1 0 0; 0 1 0; l*alpha(0) 0 I],   B = beta_y(0)
//   a~_l         = (0, 0, l*w*(alpha(l w, l^2 e, x, l y) - alpha(0)))
//   b~_l         = beta(l w, l^2 e, x, l y) / l - B y
//
// its bump-globalized version G_l, the rescaling conjugacy
// h_l(w,e,x,y) = (w/l, e/l^2, x, y/l), inversion of G_l by fixed-point
// iteration, and sampled certificates for l0, mu, eps0 and r0.
//
// Points of the extended space are packed as z = [w, e, x(k1), y(k2)].

#include "perimap/map_core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace perimap {

struct BumpSpec {
    double r1 = 1.0;
};

struct EmbeddingParams {
    double lambda = 1.0;
    Mat B;
    Mat A_lambda;
    double mu = 0.0;
    double q = 0.0;
    std::optional<double> lambda0;
    std::optional<double> eps0;
    std::optional<double> r0;

    // Derived data carried alongside the certificate.
    Vec alpha0;
    double r1 = 1.0;
    Eigen::Index k1 = 1;
    Eigen::Index k2 = 1;
    double delta = 0.0;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Packing helpers
// ---------------------------------------------------------------------------

inline Vec pack_point(double omega, double eps, const Vec& x, const Vec& y) {
    Vec z(2 + x.size() + y.size());
    z(0) = omega;
    z(1) = eps;
    z.segment(2, x.size()) = x;
    z.tail(y.size()) = y;
    return z;
}

struct PointView {
    double omega;
    double eps;
    Vec x;
    Vec y;
};

inline PointView unpack_point(const Vec& z, Eigen::Index k1, Eigen::Index k2) {
    return {z(0), z(1), z.segment(2, k1), z.tail(k2)};
}

// ---------------------------------------------------------------------------
// Linear part
// ---------------------------------------------------------------------------

/// B = beta_y(0) by central differences.
inline Mat beta_y0(const MapSpec& spec) { return beta_jacobian_at_origin(spec); }

inline Vec alpha_at_origin(const MapSpec& spec) {
    return spec.alpha_at(0.0, 0.0, Vec::Zero(spec.k1), Vec::Zero(spec.k2));
}

inline Mat make_A_lambda(const Vec& alpha0, double lambda) {
    const Eigen::Index k1 = alpha0.size();
    Mat A = Mat::Identity(k1 + 2, k1 + 2);
    A.block(2, 0, k1, 1) = lambda * alpha0;
    return A;
}

inline EmbeddingParams make_embedding_params(const MapSpec& spec, double lambda, double q) {
    if (!(lambda > 0.0)) throw PreconditionError("lambda must be positive");
    EmbeddingParams p;
    p.lambda = lambda;
    p.B = beta_y0(spec);
    p.alpha0 = alpha_at_origin(spec);
    p.A_lambda = make_A_lambda(p.alpha0, lambda);
    p.mu = (op_norm(p.B) + 1.0) / 2.0;
    p.q = q;
    p.r1 = spec.r1;
    p.k1 = spec.k1;
    p.k2 = spec.k2;
    return p;
}

/// Records lambda0 and the derived constants eps0 = r1 l0^2 / 2, r0 = l0 r1.
inline void set_lambda0(EmbeddingParams& p, double lambda0) {
    p.lambda0 = lambda0;
    p.eps0 = p.r1 * lambda0 * lambda0 / 2.0;
    p.r0 = lambda0 * p.r1;
}

// ---------------------------------------------------------------------------
// Nonlinear terms
// ---------------------------------------------------------------------------

namespace detail {

inline void check_scaled_domain(const MapSpec& spec, double lambda, const Vec& y) {
    if (!(lambda > 0.0)) throw PreconditionError("lambda must be positive");
    if ((lambda * y).norm() > spec.r1) throw DomainError("|lambda * y| exceeds r1");
}

}  // namespace detail

/// Third block of a~_l (the first two blocks are identically zero).
inline Vec tilde_alpha(const MapSpec& spec, const Vec& alpha0, double lambda, double omega, double eps,
                       const Vec& x, const Vec& y) {
    detail::check_scaled_domain(spec, lambda, y);
    const Vec a = spec.alpha_at(lambda * omega, lambda * lambda * eps, x, lambda * y);
    return lambda * omega * (a - alpha0);
}

inline Vec tilde_alpha(const MapSpec& spec, double lambda, double omega, double eps, const Vec& x, const Vec& y) {
    return tilde_alpha(spec, alpha_at_origin(spec), lambda, omega, eps, x, y);
}

inline Vec tilde_beta(const MapSpec& spec, const Mat& B, double lambda, double omega, double eps, const Vec& x,
                      const Vec& y) {
    detail::check_scaled_domain(spec, lambda, y);
    const Vec b = spec.beta_at(lambda * omega, lambda * lambda * eps, x, lambda * y);
    return b / lambda - B * y;
}

inline Vec tilde_beta(const MapSpec& spec, double lambda, double omega, double eps, const Vec& x, const Vec& y) {
    return tilde_beta(spec, beta_y0(spec), lambda, omega, eps, x, y);
}

// ---------------------------------------------------------------------------
// Bump function
// ---------------------------------------------------------------------------

/// C^1 smoothstep 3t^2 - 2t^3 clamped to [0, 1].
inline double smoothstep(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    return t * t * (3.0 - 2.0 * t);
}

/// 1 on [0,1], 0 outside [-1,2].
inline double bump_omega(double omega) {
    if (omega >= 0.0 && omega <= 1.0) return 1.0;
    if (omega < 0.0) return smoothstep(omega + 1.0);
    return smoothstep(2.0 - omega);
}

/// 1 for |s| <= r/2, 0 for |s| >= r.
inline double bump_radial(double s, double r) {
    const double a = std::abs(s);
    if (a <= 0.5 * r) return 1.0;
    return smoothstep((r - a) / (0.5 * r));
}

/// Psi(w, e, y): product of the omega, eps and |y| profiles.
inline double bump_psi(const BumpSpec& bump, double omega, double eps, const Vec& y) {
    const double pw = bump_omega(omega);
    if (pw == 0.0) return 0.0;
    const double pe = bump_radial(eps, bump.r1);
    if (pe == 0.0) return 0.0;
    return pw * pe * bump_radial(y.norm(), bump.r1);
}

/// Breakpoints of the one-dimensional profiles.
inline std::vector<double> bump_omega_breakpoints() { return {-1.0, 0.0, 1.0, 2.0}; }
inline std::vector<double> bump_radial_breakpoints(double r) { return {-r, -0.5 * r, 0.5 * r, r}; }

// ---------------------------------------------------------------------------
// F_lambda, G_lambda, conjugacy
// ---------------------------------------------------------------------------

/// F_l(z) = (w, e, x + l w alpha(l w, l^2 e, x, l y), beta(l w, l^2 e, x, l y) / l).
inline Vec eval_F_lambda(const MapSpec& spec, double lambda, const Vec& z) {
    const auto p = unpack_point(z, spec.k1, spec.k2);
    detail::check_scaled_domain(spec, lambda, p.y);
    const double w = lambda * p.omega;
    const double e = lambda * lambda * p.eps;
    auto [a, b] = spec.both_at(w, e, p.x, lambda * p.y);
    return pack_point(p.omega, p.eps, p.x + w * a, b / lambda);
}

inline Vec eval_F_lambda(const MapSpec& spec, const EmbeddingParams& params, const Vec& z) {
    return eval_F_lambda(spec, params.lambda, z);
}

/// Linear part blockdiag(A_l, B) applied to z.
inline Vec apply_linear_part(const EmbeddingParams& params, const Vec& z) {
    const Eigen::Index k1 = params.k1, k2 = params.k2;
    Vec out(z.size());
    out.head(k1 + 2) = params.A_lambda * z.head(k1 + 2);
    out.tail(k2) = params.B * z.tail(k2);
    return out;
}

/// Bumped nonlinearity Psi(l w, e, y) * (0, 0, a~_l, b~_l).
inline Vec bumped_nonlinearity(const MapSpec& spec, const EmbeddingParams& params, const Vec& z) {
    const auto p = unpack_point(z, params.k1, params.k2);
    Vec g = Vec::Zero(z.size());
    const double psi = bump_psi(BumpSpec{params.r1}, params.lambda * p.omega, p.eps, p.y);
    if (psi == 0.0) return g;
    g.segment(2, params.k1) = psi * tilde_alpha(spec, params.alpha0, params.lambda, p.omega, p.eps, p.x, p.y);
    g.tail(params.k2) = psi * tilde_beta(spec, params.B, params.lambda, p.omega, p.eps, p.x, p.y);
    return g;
}

inline Vec eval_G_lambda(const MapSpec& spec, const EmbeddingParams& params, const Vec& z) {
    return apply_linear_part(params, z) + bumped_nonlinearity(spec, params, z);
}

inline Vec h_lambda(double lambda, const Vec& z, Eigen::Index k2) {
    Vec out = z;
    out(0) = z(0) / lambda;
    out(1) = z(1) / (lambda * lambda);
    out.tail(k2) = z.tail(k2) / lambda;
    return out;
}

/// |F_l(h_l(z)) - h_l(F_1(z))|; zero up to rounding for every spec.
inline double conjugacy_residual(const MapSpec& spec, double lambda, double omega, double eps, const Vec& x,
                                 const Vec& y) {
    if (!(lambda > 0.0)) throw PreconditionError("conjugacy_residual: lambda must be positive");
    const Vec z = pack_point(omega, eps, x, y);
    const Vec lhs = eval_F_lambda(spec, lambda, h_lambda(lambda, z, spec.k2));
    const Vec rhs = h_lambda(lambda, eval_F_lambda(spec, 1.0, z), spec.k2);
    return (lhs - rhs).norm();
}

// ---------------------------------------------------------------------------
// Inversion of G_lambda
// ---------------------------------------------------------------------------

struct InversionResult {
    Vec z;
    std::size_t iterations = 0;
    double residual = 0.0;
};

/// Solves G_l(z) = target by z <- L^{-1}(target - g(z)), L the linear part.
inline InversionResult invert_G(const MapSpec& spec, const EmbeddingParams& params, const Vec& target, double tol,
                                std::size_t max_iter) {
    if (min_singular_value(params.B) < 1e-12) throw SingularMatrixError("invert_G: B is singular");
    const Eigen::Index k1 = params.k1, k2 = params.k2;
    const Mat A_inv = params.A_lambda.inverse();
    const Mat B_inv = params.B.inverse();
    auto solve_linear = [&](const Vec& r) {
        Vec out(r.size());
        out.head(k1 + 2) = A_inv * r.head(k1 + 2);
        out.tail(k2) = B_inv * r.tail(k2);
        return out;
    };
    InversionResult res;
    res.z = solve_linear(target);
    for (std::size_t it = 1; it <= max_iter; ++it) {
        const Vec g = bumped_nonlinearity(spec, params, res.z);
        res.iterations = it;
        res.residual = (apply_linear_part(params, res.z) + g - target).norm();
        if (res.residual <= tol) return res;
        Vec next = solve_linear(target - g);
        if (!next.allFinite()) break;
        res.z = std::move(next);
    }
    throw ConvergenceError("invert_G: fixed-point iteration did not converge (lambda too large?)");
}

// ---------------------------------------------------------------------------
// lambda0 search and spectral gap
// ---------------------------------------------------------------------------

struct Lambda0Options {
    double omega_lo = -1.0;  // sampled omega range is [omega_lo / l, omega_hi / l]
    double omega_hi = 2.0;
    std::optional<double> eps_lo;  // default (-r1, r1)
    std::optional<double> eps_hi;
    std::size_t n_samples = 200;
    std::uint64_t seed = 1;
    int ladder_depth = 20;  // probes l = 2^0 ... 2^-ladder_depth
};

struct Lambda0Probe {
    double lambda = 0.0;
    double sup_alpha = 0.0;  // sup |a~| + |Da~|
    double sup_beta = 0.0;   // sup |b~| + |Db~|
    bool pass = false;
};

struct Lambda0Estimate {
    std::optional<double> lambda0;
    std::vector<Lambda0Probe> probes;
    std::string failure;  // names the offending bound when nothing passes
};

namespace detail {

inline double jacobian_norm_scaled(const std::function<Vec(const Vec&)>& f, const Vec& z,
                                   const std::vector<bool>& free) {
    const Vec f0 = f(z);
    Mat jac = Mat::Zero(f0.size(), z.size());
    Vec p = z;
    for (Eigen::Index j = 0; j < z.size(); ++j) {
        if (!free[static_cast<std::size_t>(j)]) continue;
        const double h = fd_step_first(std::abs(z(j)));
        p(j) = z(j) + h;
        const Vec fp = f(p);
        p(j) = z(j) - h;
        const Vec fm = f(p);
        p(j) = z(j);
        jac.col(j) = (fp - fm) / (2.0 * h);
    }
    return op_norm(jac);
}

}  // namespace detail

/// Sampled sup of |a~_l| + |Da~_l| and |b~_l| + |Db~_l| at one lambda.
/// Derivatives are taken along the coordinates the sampling domain spans.
inline Lambda0Probe probe_lambda(const MapSpec& spec, const Mat& B, const Vec& alpha0, double lambda,
                                 const Lambda0Options& opt) {
    const auto k1 = spec.k1, k2 = spec.k2;
    const double eps_lo = opt.eps_lo.value_or(-spec.r1);
    const double eps_hi = opt.eps_hi.value_or(spec.r1);
    const AssumptionBox xbox = default_box(spec);
    Box box;
    box.lo = {opt.omega_lo / lambda, eps_lo};
    box.hi = {opt.omega_hi / lambda, eps_hi};
    for (Eigen::Index i = 0; i < k1; ++i) {
        box.lo.push_back(xbox.x_lo[static_cast<std::size_t>(i)]);
        box.hi.push_back(xbox.x_hi[static_cast<std::size_t>(i)]);
    }
    box.lo.push_back(0.0);
    box.hi.push_back(1.0);
    const auto pts = latin_hypercube(box, opt.n_samples, opt.seed);
    std::mt19937_64 rng(opt.seed ^ 0x5bd1e995ULL);

    std::vector<bool> free(static_cast<std::size_t>(2 + k1 + k2), true);
    free[1] = eps_hi > eps_lo;

    const double y_radius = spec.r1 * (1.0 - 1e-4);
    Lambda0Probe probe;
    probe.lambda = lambda;
    for (const auto& s : pts) {
        Vec z(2 + k1 + k2);
        z(0) = s[0];
        z(1) = s[1];
        for (Eigen::Index i = 0; i < k1; ++i) z(2 + i) = s[2 + static_cast<std::size_t>(i)];
        z.tail(k2) = ball_point(rng, k2, y_radius, s[2 + static_cast<std::size_t>(k1)]);
        std::function<Vec(const Vec&)> fa = [&](const Vec& p) {
            return tilde_alpha(spec, alpha0, lambda, p(0), p(1), p.segment(2, k1), p.tail(k2));
        };
        std::function<Vec(const Vec&)> fb = [&](const Vec& p) {
            return tilde_beta(spec, B, lambda, p(0), p(1), p.segment(2, k1), p.tail(k2));
        };
        probe.sup_alpha = std::max(probe.sup_alpha, fa(z).norm() + detail::jacobian_norm_scaled(fa, z, free));
        probe.sup_beta = std::max(probe.sup_beta, fb(z).norm() + detail::jacobian_norm_scaled(fb, z, free));
    }
    return probe;
}

/// Largest l on the ladder {1, 1/2, ..., 2^-depth} at which both smallness
/// bounds hold with the given delta.
inline Lambda0Estimate estimate_lambda0(const MapSpec& spec, double delta, const Lambda0Options& opt = {}) {
    Lambda0Estimate est;
    if (!(delta > 0.0)) {
        est.failure = "delta must be strictly positive";
        return est;
    }
    const Mat B = beta_y0(spec);
    const Vec alpha0 = alpha_at_origin(spec);
    for (int k = 0; k <= opt.ladder_depth; ++k) {
        const double lambda = std::ldexp(1.0, -k);
        Lambda0Probe probe = probe_lambda(spec, B, alpha0, lambda, opt);
        probe.pass = probe.sup_alpha <= delta && probe.sup_beta <= delta;
        est.probes.push_back(probe);
        if (probe.pass) {
            est.lambda0 = lambda;
            return est;
        }
    }
    const Lambda0Probe& last = est.probes.back();
    est.failure = last.sup_alpha > delta ? "sup |a~| + |Da~| = " + std::to_string(last.sup_alpha) + " > delta"
                                         : "sup |b~| + |Db~| = " + std::to_string(last.sup_beta) + " > delta";
    return est;
}

struct SpectralGap {
    double mu = 0.0;
    double norm_B = 0.0;
    double norm_A_inv = 0.0;
    bool ok = false;
};

/// mu = (|B| + 1) / 2; ok iff |B| <= q < 1 and |A_l^{-1}| <= 1/mu at l0 (or
/// at params.lambda when no l0 is recorded).
inline SpectralGap spectral_gap(const EmbeddingParams& params) {
    SpectralGap gap;
    gap.norm_B = op_norm(params.B);
    gap.mu = (gap.norm_B + 1.0) / 2.0;
    const double lambda = params.lambda0.value_or(params.lambda);
    const Mat A = params.alpha0.size() > 0 ? make_A_lambda(params.alpha0, lambda) : params.A_lambda;
    gap.norm_A_inv = 1.0 / min_singular_value(A);
    constexpr double slack = 1e-8;
    gap.ok = gap.norm_B <= params.q + slack && params.q < 1.0 && gap.norm_A_inv <= 1.0 / gap.mu;
    return gap;
}

// ---------------------------------------------------------------------------
// Full certificate
// ---------------------------------------------------------------------------

struct CertifyOptions {
    std::optional<double> delta;  // default (1 - q) / 3
    Lambda0Options lambda0;
    std::size_t assumption_samples = 256;
};

struct Certificate {
    EmbeddingParams params;
    AssumptionReport assumptions;
    SpectralGap gap;
    Lambda0Estimate search;
    bool ok = false;
};

/// Assumption report, then the largest ladder lambda at which both the
/// smallness bounds and the spectral gap hold.
inline Certificate certify(const MapSpec& spec, const CertifyOptions& opt = {}) {
    Certificate cert;
    AssumptionOptions aopt;
    aopt.with_bounds = false;
    cert.assumptions =
        check_assumptions(spec, default_box(spec), opt.assumption_samples, opt.lambda0.seed, aopt);
    const double q = cert.assumptions.q_estimate;
    const double delta = opt.delta.value_or((1.0 - q) / 3.0);

    cert.params = make_embedding_params(spec, 1.0, q);
    cert.params.delta = delta;
    cert.params.n_samples = opt.lambda0.n_samples;
    cert.params.seed = opt.lambda0.seed;

    if (!(delta > 0.0)) {
        cert.search.failure = "delta must be strictly positive";
        cert.gap = spectral_gap(cert.params);
        return cert;
    }
    const Mat& B = cert.params.B;
    const Vec& alpha0 = cert.params.alpha0;
    for (int k = 0; k <= opt.lambda0.ladder_depth; ++k) {
        const double lambda = std::ldexp(1.0, -k);
        Lambda0Probe probe = probe_lambda(spec, B, alpha0, lambda, opt.lambda0);
        EmbeddingParams trial = cert.params;
        trial.lambda = lambda;
        trial.A_lambda = make_A_lambda(alpha0, lambda);
        const SpectralGap gap = spectral_gap(trial);
        probe.pass = probe.sup_alpha <= delta && probe.sup_beta <= delta && gap.ok;
        cert.search.probes.push_back(probe);
        if (probe.pass) {
            cert.search.lambda0 = lambda;
            cert.params = trial;
            set_lambda0(cert.params, lambda);
            cert.gap = gap;
            cert.ok = cert.assumptions.beta_y0_invertible;
            return cert;
        }
    }
    cert.search.failure = "no probed lambda satisfies both smallness bounds and the spectral gap";
    cert.gap = spectral_gap(cert.params);
    return cert;
}

}  // namespace perimap
