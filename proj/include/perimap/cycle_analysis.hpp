#pragma once

// Fixed point of the reduced return map, its derivative and spectrum, and a
// norm in which the derivative contracts.

#include "perimap/poincare.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <complex>

namespace perimap {

struct FixedPointResult {
    Vec u;
    int iterations = 0;
    double residual = 0.0;
};

/// Newton on P(u) - u with a central-difference Jacobian. Residual is measured
/// at the returned point; iterations counts evaluations of that residual.
inline FixedPointResult find_fixed_point(const PoincareHandle& h, const Vec& u_guess, double tol = 1e-12,
                                         int max_iter = 50) {
    if (!(tol > 0.0)) throw PreconditionError("find_fixed_point: tol must be positive");
    Vec u = u_guess;
    const Eigen::Index k = u.size();
    try {
        for (int it = 1; it <= max_iter; ++it) {
            const Vec r = P_reduced(h, u) - u;
            if (r.norm() <= tol) return {u, it, r.norm()};
            const double step = 1e-6 * std::max(1.0, u.norm());
            Mat J = fd_jacobian([&](const Vec& p) { return Vec(P_reduced(h, p) - p); }, u, step);
            Eigen::FullPivLU<Mat> lu(J);
            if (!lu.isInvertible() || min_singular_value(J) < 1e-12)
                throw SingularMatrixError("find_fixed_point: singular Newton step");
            const Vec du = lu.solve(-r);
            u += du;
            if (!u.allFinite() || u.size() != k) throw ConvergenceError("find_fixed_point: divergence");
        }
    } catch (const SingularMatrixError&) {
        throw;
    } catch (const ConvergenceError&) {
        throw;
    } catch (const Error& e) {
        throw ConvergenceError(std::string("find_fixed_point: divergence (") + e.what() + ")");
    }
    throw ConvergenceError("find_fixed_point: no convergence within max_iter");
}

/// Numerical stand-ins for the open interval (0, 1) of admissible moduli.
inline constexpr double kMinModulus = 1e-8;
inline constexpr double kUnitMargin = 1e-6;

struct Spectrum {
    Mat jacobian;
    std::vector<std::complex<double>> eigenvalues;
    double spectral_radius = 0.0;
    double min_modulus = 0.0;
    double fd_step = 0.0;
    double richardson_defect = 0.0;  // relative gap between steps h and h/2
    bool richardson_ok = false;
    bool a3_certified = false;  // all moduli in [kMinModulus, 1 - kUnitMargin]
};

inline Spectrum spectrum_of(const Mat& J) {
    Spectrum s;
    s.jacobian = J;
    Eigen::EigenSolver<Mat> es(J, false);
    if (es.info() != Eigen::Success) throw ConvergenceError("eigenvalue solve failed");
    s.min_modulus = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < J.rows(); ++i) {
        const std::complex<double> l = es.eigenvalues()(i);
        s.eigenvalues.push_back(l);
        s.spectral_radius = std::max(s.spectral_radius, std::abs(l));
        s.min_modulus = std::min(s.min_modulus, std::abs(l));
    }
    s.a3_certified = s.min_modulus >= kMinModulus && s.spectral_radius <= 1.0 - kUnitMargin;
    return s;
}

inline Spectrum jacobian_and_spectrum(const PoincareHandle& h, const Vec& u_star, std::optional<double> fd_step = {}) {
    const double step = fd_step.value_or(1e-6 * std::max(1.0, u_star.norm()));
    auto P = [&](const Vec& u) { return P_reduced(h, u); };
    const Mat J = fd_jacobian(P, u_star, step);
    const Mat J2 = fd_jacobian(P, u_star, step / 2.0);
    Spectrum s = spectrum_of(J);
    s.fd_step = step;
    s.richardson_defect = (J - J2).norm() / std::max(J.norm(), 1e-300);
    s.richardson_ok = s.richardson_defect <= 1e-5 || (J - J2).norm() <= 1e-10;
    return s;
}

struct AdaptedNorm {
    int m = 1;
    double rho = 0.0;
    double rho_hat = 0.5;
    Mat S;                        // |v| = ||S v||_2
    double induced_norm = 0.0;    // ||S B S^{-1}||_2
    double telescoping_bound = 0.0;
    double sampled_max = 0.0;     // max |B v| over sampled adapted-unit v

    double operator()(const Vec& v) const { return (S * v).norm(); }
};

/// Weighted norm |v|^2 = sum_{i<m} ||B^i v||^2 / rho_hat^{2i}, with m the
/// smallest power satisfying ||B^m|| <= rho_hat^m. Then |Bv|^2 <= rho_hat^2 |v|^2.
inline AdaptedNorm adapted_norm(const Mat& B, std::size_t n_check = 10000, std::uint64_t seed = 1) {
    if (B.rows() != B.cols() || B.rows() == 0) throw PreconditionError("adapted_norm: B must be square");
    const Spectrum sp = spectrum_of(B);
    if (!(sp.spectral_radius < 1.0)) throw PreconditionError("adapted_norm: spectral radius >= 1");
    AdaptedNorm a;
    a.rho = sp.spectral_radius;
    a.rho_hat = (a.rho + 1.0) / 2.0;
    const Eigen::Index n = B.rows();

    Mat P = Mat::Identity(n, n);
    int m = 0;
    for (int i = 1; i <= 64; ++i) {
        P = P * B;
        if (op_norm(P) <= std::pow(a.rho_hat, i)) {
            m = i;
            break;
        }
    }
    if (m == 0) throw ConvergenceError("adapted_norm: no power of B within 64 steps contracts at rate rho_hat");
    a.m = m;

    Mat W = Mat::Zero(n, n);
    Mat Bi = Mat::Identity(n, n);
    double w = 1.0;
    for (int i = 0; i < m; ++i) {
        W += w * w * (Bi.transpose() * Bi);
        Bi = Bi * B;
        w /= a.rho_hat;
    }
    Eigen::LLT<Mat> llt(W);
    if (llt.info() != Eigen::Success) throw SingularMatrixError("adapted_norm: weight not positive definite");
    a.S = llt.matrixU();
    const Mat S_inv = a.S.inverse();
    a.induced_norm = op_norm(a.S * B * S_inv);
    a.telescoping_bound = a.rho_hat;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    for (std::size_t s = 0; s < n_check; ++s) {
        Vec z(n);
        for (Eigen::Index i = 0; i < n; ++i) z(i) = nd(rng);
        const double zn = z.norm();
        if (zn == 0.0) continue;
        const Vec v = S_inv * (z / zn);
        a.sampled_max = std::max(a.sampled_max, a(B * v) / a(v));
    }
    return a;
}

struct ContractionCertificate {
    double q = 0.0;
    bool ok = false;
    double largest_radius = 0.0;  // largest sampled radius with every pair ratio below 1
    std::size_t n_pairs = 0;
};

/// Sampled Lipschitz constant of u -> beta(tau, u, eps) in the adapted norm
/// over tau in [0, T_g], eps in range, u in the u_range-disc.
inline ContractionCertificate certify_contraction(const PoincareHandle& h, double u_range,
                                                  std::pair<double, double> eps_range, const AdaptedNorm& norm,
                                                  std::size_t n_samples, std::uint64_t seed) {
    const HybridSystem& s = h.system();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    struct Draw {
        double tau, eps;
        Vec u1, u2;
    };
    std::vector<Draw> draws;
    for (std::size_t i = 0; i < n_samples; ++i) {
        Draw d;
        d.tau = s.T_g * unit(rng);
        d.eps = eps_range.first + (eps_range.second - eps_range.first) * unit(rng);
        d.u1 = ball_point(rng, s.k2, u_range, unit(rng));
        d.u2 = ball_point(rng, s.k2, u_range, unit(rng));
        draws.push_back(std::move(d));
    }
    std::vector<std::pair<double, double>> radius_ratio(n_samples, {0.0, -1.0});
    parallel_for(n_samples, [&](std::size_t i) {
        const Draw& d = draws[i];
        const double du = norm(d.u1 - d.u2);
        if (du <= 1e-6 * u_range) return;
        const Vec b1 = P_eps(h, d.tau, d.u1, d.eps).u;
        const Vec b2 = P_eps(h, d.tau, d.u2, d.eps).u;
        radius_ratio[i] = {std::max(d.u1.norm(), d.u2.norm()), norm(b1 - b2) / du};
    });
    std::sort(radius_ratio.begin(), radius_ratio.end());
    ContractionCertificate c;
    bool broken = false;
    for (const auto& [r, ratio] : radius_ratio) {
        if (ratio < 0.0) continue;
        ++c.n_pairs;
        c.q = std::max(c.q, ratio);
        if (ratio >= 1.0) broken = true;
        if (!broken) c.largest_radius = r;
    }
    c.ok = c.n_pairs > 0 && c.q < 1.0;
    return c;
}

struct CycleReport {
    Vec u_star;
    double T_star = 0.0;
    double fixed_point_residual = 0.0;
    int newton_iterations = 0;
    Spectrum spectrum;
    std::optional<AdaptedNorm> adapted;
    double transversality = 0.0;
    bool transversal = false;
    bool certified = false;  // A3 spectrum, adapted-norm contraction and transversality
};

struct AnalyzeOptions {
    Vec u_guess;  // defaults to zero
    double tol = 1e-12;
    int max_iter = 50;
    double transversality_floor = 1e-8;
};

inline CycleReport analyze_cycle(PoincareHandle& h, const AnalyzeOptions& opt = {}) {
    const HybridSystem& s = h.system();
    CycleReport rep;
    const Vec guess = opt.u_guess.size() == s.k2 ? opt.u_guess : Vec::Zero(s.k2);
    const FixedPointResult fp = find_fixed_point(h, guess, opt.tol, opt.max_iter);
    rep.u_star = fp.u;
    rep.fixed_point_residual = fp.residual;
    rep.newton_iterations = fp.iterations;
    rep.T_star = time_to_return(h, 0.0, s.D(fp.u), 0.0);
    h.u_star = fp.u;
    h.T_star = rep.T_star;
    rep.spectrum = jacobian_and_spectrum(h, fp.u);
    if (rep.spectrum.spectral_radius < 1.0) rep.adapted = adapted_norm(rep.spectrum.jacobian);
    rep.transversality = check_transversality(s, fp.u);
    rep.transversal = std::abs(rep.transversality) >= opt.transversality_floor;
    rep.certified = rep.spectrum.a3_certified && rep.adapted && rep.adapted->induced_norm < 1.0 && rep.transversal;
    return rep;
}

}  // namespace perimap
