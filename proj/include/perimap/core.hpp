#pragma once

// Shared vocabulary: vector/matrix aliases, error types, norms, finite
// differences, stratified sampling and a small deterministic parallel_for.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace perimap {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kMachineEps = std::numeric_limits<double>::epsilon();

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the region where the map is defined (e.g. |y| > r1).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A user-supplied evaluator returned NaN/Inf.
class EvaluationError : public Error {
public:
    using Error::Error;
};

/// Iterative procedure failed to reach its tolerance.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Linear part is numerically singular.
class SingularMatrixError : public Error {
public:
    using Error::Error;
};

/// Precondition of an algorithm does not hold (monotonicity, bracketing, ...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// ODE integration failure (step underflow, no event within the horizon).
class IntegrationError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Small numeric helpers
// ---------------------------------------------------------------------------

inline Vec vec(std::initializer_list<double> xs) {
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

inline void require_finite(const Vec& v, const char* what) {
    if (!v.allFinite()) throw EvaluationError(std::string(what) + " returned a non-finite value");
}

/// Induced 2-norm (largest singular value).
inline double op_norm(const Mat& m) {
    if (m.size() == 0) return 0.0;
    if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
    Eigen::JacobiSVD<Mat> svd(m);
    return svd.singularValues()(0);
}

inline double min_singular_value(const Mat& m) {
    if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
    Eigen::JacobiSVD<Mat> svd(m);
    return svd.singularValues()(svd.singularValues().size() - 1);
}

/// Step for first-order central differences, cbrt(eps) * max(1, |p|).
inline double fd_step_first(double point_norm) {
    return std::cbrt(kMachineEps) * std::max(1.0, point_norm);
}

/// Step for second differences, eps^(1/4) * max(1, |p|).
inline double fd_step_second(double point_norm) {
    return std::pow(kMachineEps, 0.25) * std::max(1.0, point_norm);
}

/// Central-difference Jacobian of f at p.
template <class F>
Mat fd_jacobian(F&& f, const Vec& p, double h = -1.0) {
    if (h <= 0.0) h = fd_step_first(p.norm());
    Vec f0 = f(p);
    Mat jac(f0.size(), p.size());
    Vec q = p;
    for (Eigen::Index j = 0; j < p.size(); ++j) {
        q(j) = p(j) + h;
        Vec fp = f(q);
        q(j) = p(j) - h;
        Vec fm = f(q);
        q(j) = p(j);
        jac.col(j) = (fp - fm) / (2.0 * h);
    }
    return jac;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Axis-aligned sampling box.
struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    std::size_t dim() const { return lo.size(); }
};

/// Latin-hypercube samples in `box`: each coordinate is stratified into n
/// equal cells, one point per cell, cells permuted independently.
inline std::vector<std::vector<double>> latin_hypercube(const Box& box, std::size_t n,
                                                         std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t d = box.dim();
    std::vector<std::vector<double>> pts(n, std::vector<double>(d));
    std::vector<std::size_t> perm(n);
    for (std::size_t k = 0; k < d; ++k) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        const double width = box.hi[k] - box.lo[k];
        for (std::size_t i = 0; i < n; ++i) {
            const double u = (static_cast<double>(perm[i]) + unit(rng)) / static_cast<double>(n);
            pts[i][k] = box.lo[k] + width * u;
        }
    }
    return pts;
}

/// Uniform sample from the closed ball of radius r in R^k. Stratification is
/// applied to the radial coordinate through `u_radial` in [0,1].
inline Vec ball_point(std::mt19937_64& rng, Eigen::Index k, double r, double u_radial) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec dir(k);
    do {
        for (Eigen::Index i = 0; i < k; ++i) dir(i) = normal(rng);
    } while (dir.norm() == 0.0);
    dir /= dir.norm();
    return dir * (r * std::pow(u_radial, 1.0 / static_cast<double>(k)));
}

// ---------------------------------------------------------------------------
// Parallelism
// ---------------------------------------------------------------------------

/// Worker count: PERIMAP_THREADS if set (>= 1), otherwise hardware concurrency.
inline unsigned thread_count() {
    if (const char* env = std::getenv("PERIMAP_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, n). Iterations must be independent; results are
/// identical for any thread count. The first exception thrown is rethrown.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace perimap
