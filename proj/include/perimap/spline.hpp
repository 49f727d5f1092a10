#pragma once

// Cubic splines on uniform grids: periodic (cyclic tridiagonal solve) and
// clamped with one-sided fourth-order end slopes.

#include "perimap/core.hpp"

#include <cmath>
#include <vector>

namespace perimap {

namespace detail {

// Thomas algorithm; a = sub, b = diag, c = super (a[0], c[n-1] unused).
inline std::vector<double> solve_tridiagonal(std::vector<double> a, std::vector<double> b, std::vector<double> c,
                                             std::vector<double> d) {
    const std::size_t n = b.size();
    for (std::size_t i = 1; i < n; ++i) {
        const double m = a[i] / b[i - 1];
        b[i] -= m * c[i - 1];
        d[i] -= m * d[i - 1];
    }
    std::vector<double> x(n);
    x[n - 1] = d[n - 1] / b[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = (d[i] - c[i] * x[i + 1]) / b[i];
    return x;
}

// Solves the cyclic system with constant stencil (1, 4, 1) by Sherman-Morrison.
inline std::vector<double> solve_cyclic_141(const std::vector<double>& rhs) {
    const std::size_t n = rhs.size();
    const double gamma = -4.0;
    std::vector<double> a(n, 1.0), b(n, 4.0), c(n, 1.0);
    b[0] -= gamma;
    b[n - 1] -= 1.0 / gamma;  // corner products alpha * beta / gamma with alpha = beta = 1
    const std::vector<double> x = solve_tridiagonal(a, b, c, rhs);
    std::vector<double> u(n, 0.0);
    u[0] = gamma;
    u[n - 1] = 1.0;
    const std::vector<double> z = solve_tridiagonal(a, b, c, u);
    const double fact = (x[0] + x[n - 1] / gamma) / (1.0 + z[0] + z[n - 1] / gamma);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - fact * z[i];
    return out;
}

inline double cubic_segment(double y0, double y1, double m0, double m1, double s, double h) {
    const double r = 1.0 - s;
    return r * y0 + s * y1 + h * h / 6.0 * ((r * r * r - r) * m0 + (s * s * s - s) * m1);
}

}  // namespace detail

/// Periodic cubic spline through y_i at x_i = i * period / N.
class PeriodicSpline {
public:
    PeriodicSpline() = default;

    PeriodicSpline(double period, std::vector<double> values) : period_(period), y_(std::move(values)) {
        const std::size_t n = y_.size();
        if (n < 3) throw PreconditionError("periodic spline needs at least 3 nodes");
        if (!(period_ > 0.0)) throw PreconditionError("periodic spline needs a positive period");
        h_ = period_ / static_cast<double>(n);
        std::vector<double> rhs(n);
        const double f = 6.0 / (h_ * h_);
        for (std::size_t i = 0; i < n; ++i) {
            const double prev = y_[(i + n - 1) % n];
            const double next = y_[(i + 1) % n];
            rhs[i] = f * (next - 2.0 * y_[i] + prev);
        }
        m_ = detail::solve_cyclic_141(rhs);
    }

    double operator()(double x) const {
        const std::size_t n = y_.size();
        double t = x - period_ * std::floor(x / period_);
        if (t >= period_) t -= period_;
        if (t < 0.0) t = 0.0;
        const double u = t / h_;
        std::size_t i = static_cast<std::size_t>(u);
        if (i >= n) i = n - 1;
        const double s = u - static_cast<double>(i);
        const std::size_t j = (i + 1) % n;
        return detail::cubic_segment(y_[i], y_[j], m_[i], m_[j], s, h_);
    }

    double period() const { return period_; }
    const std::vector<double>& values() const { return y_; }

private:
    double period_ = 1.0;
    double h_ = 1.0;
    std::vector<double> y_;
    std::vector<double> m_;
};

/// Cubic spline on [x0, x0 + n h] through n + 1 uniform nodes, clamped to end
/// slopes estimated by fourth-order one-sided differences. No wrap-around.
class ClampedSpline {
public:
    ClampedSpline() = default;

    ClampedSpline(double x0, double h, std::vector<double> values) : x0_(x0), h_(h), y_(std::move(values)) {
        const std::size_t m = y_.size();
        if (m < 5) throw PreconditionError("clamped spline needs at least 5 nodes");
        const std::size_t n = m - 1;
        const double d0 = (-25.0 * y_[0] + 48.0 * y_[1] - 36.0 * y_[2] + 16.0 * y_[3] - 3.0 * y_[4]) / (12.0 * h_);
        const double dn = (25.0 * y_[n] - 48.0 * y_[n - 1] + 36.0 * y_[n - 2] - 16.0 * y_[n - 3] + 3.0 * y_[n - 4]) /
                          (12.0 * h_);
        std::vector<double> a(m, 1.0), b(m, 4.0), c(m, 1.0), d(m);
        b[0] = 2.0;
        b[n] = 2.0;
        d[0] = 6.0 / h_ * ((y_[1] - y_[0]) / h_ - d0);
        d[n] = 6.0 / h_ * (dn - (y_[n] - y_[n - 1]) / h_);
        for (std::size_t i = 1; i < n; ++i) d[i] = 6.0 / (h_ * h_) * (y_[i + 1] - 2.0 * y_[i] + y_[i - 1]);
        m_ = detail::solve_tridiagonal(a, b, c, d);
    }

    double operator()(double x) const {
        const std::size_t n = y_.size() - 1;
        double u = (x - x0_) / h_;
        u = std::clamp(u, 0.0, static_cast<double>(n));
        std::size_t i = static_cast<std::size_t>(u);
        if (i >= n) i = n - 1;
        const double s = u - static_cast<double>(i);
        return detail::cubic_segment(y_[i], y_[i + 1], m_[i], m_[i + 1], s, h_);
    }

    double lo() const { return x0_; }
    double hi() const { return x0_ + h_ * static_cast<double>(y_.size() - 1); }

private:
    double x0_ = 0.0;
    double h_ = 1.0;
    std::vector<double> y_;
    std::vector<double> m_;
};

}  // namespace perimap
