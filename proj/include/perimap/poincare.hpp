#pragma once

// Section-induced return maps of a forced hybrid system and their rewriting
// as a map of the (x := tau, y := u) form consumed by the curve solver.

#include "perimap/hybrid_ode.hpp"
#include "perimap/map_core.hpp"

#include <memory>
#include <ostream>
#include <utility>

namespace perimap {

struct PoincareHandle {
    std::shared_ptr<const HybridSystem> sys;
    FlowOptions flow_options;
    Vec u_star;                                              // reduced anchor; zero until located
    double T_star = std::numeric_limits<double>::quiet_NaN();  // reduced return lag at u_star
    double effective_r1 = 0.0;

    const HybridSystem& system() const { return *sys; }
};

inline PoincareHandle make_poincare_handle(HybridSystem sys, FlowOptions opt = {}) {
    PoincareHandle h;
    h.effective_r1 = sys.r1;
    h.u_star = Vec::Zero(sys.k2);
    h.sys = std::make_shared<const HybridSystem>(std::move(sys));
    h.flow_options = opt;
    return h;
}

/// Absolute first-hit time of S by the forced flow started at (tau, Delta(x)).
inline double time_to_return(const PoincareHandle& h, double tau, const Vec& x, double eps) {
    const HybridSystem& s = h.system();
    return flow(s, tau, s.Delta(x), eps, StopCondition::event(), h.flow_options).end_time;
}

struct ReturnPoint {
    double tau;  // absolute return time
    Vec u;       // chart coordinates of the return point
};

/// (tau, u) -> (T_e(tau, D(u)), D^{-1}(return point)).
inline ReturnPoint P_eps(const PoincareHandle& h, double tau, const Vec& u, double eps) {
    const HybridSystem& s = h.system();
    if (u.size() != s.k2) throw PreconditionError("P_eps: chart dimension mismatch");
    if (u.norm() > h.effective_r1) throw DomainError("P_eps: u outside the chart disc");
    const FlowResult r = flow(s, tau, s.Delta(s.D(u)), eps, StopCondition::event(), h.flow_options);
    const Vec on_s = project_to_section(s, r.end_state);
    Vec u_next = s.D_inverse(on_s);
    if (!u_next.allFinite()) throw EvaluationError("P_eps: chart inversion failed");
    if ((s.D(u_next) - on_s).norm() > 1e-6 * std::max(1.0, on_s.norm()))
        throw EvaluationError("P_eps: return point lies off the chart image");
    return {r.end_time, std::move(u_next)};
}

/// u-component of P_0(0, u).
inline Vec P_reduced(const PoincareHandle& h, const Vec& u) { return P_eps(h, 0.0, u, 0.0).u; }

/// Map form with x := tau: alpha = T_e(tau, D(u)) - tau, beta = u-component.
/// The omega argument is ignored; solve with omega = 1.
inline MapSpec extract_alpha_beta(const PoincareHandle& h, std::pair<double, double> eps_range) {
    const HybridSystem& s = h.system();
    MapSpec m;
    m.name = s.name + "-poincare";
    m.k1 = 1;
    m.k2 = s.k2;
    m.r1 = h.effective_r1;
    m.periodic_coord = 0;
    m.period = s.T_g;
    auto check_eps = [eps_range](double eps) {
        if (eps < eps_range.first || eps > eps_range.second) throw DomainError("poincare map: eps outside range");
    };
    m.joint = [h, check_eps](double, double eps, const Vec& x, const Vec& y) {
        check_eps(eps);
        const ReturnPoint r = P_eps(h, x(0), y, eps);
        Vec a(1);
        a(0) = r.tau - x(0);
        return std::make_pair(a, r.u);
    };
    m.alpha = [j = m.joint](double om, double eps, const Vec& x, const Vec& y) { return j(om, eps, x, y).first; };
    m.beta = [j = m.joint](double om, double eps, const Vec& x, const Vec& y) { return j(om, eps, x, y).second; };
    return m;
}

struct PoincareLogRow {
    double tau;
    Vec u;
    double eps;
    double tau_next;
    Vec u_next;
};

inline PoincareLogRow log_P_eps(const PoincareHandle& h, double tau, const Vec& u, double eps) {
    const ReturnPoint r = P_eps(h, tau, u, eps);
    return {tau, u, eps, r.tau, r.u};
}

inline void write_poincare_csv(std::ostream& os, const std::vector<PoincareLogRow>& rows) {
    if (rows.empty()) return;
    const Eigen::Index k = rows.front().u.size();
    os << "tau";
    for (Eigen::Index i = 0; i < k; ++i) os << ",u" << i;
    os << ",eps,tau_next";
    for (Eigen::Index i = 0; i < k; ++i) os << ",u_next" << i;
    os << ",return_lag\n";
    char buf[32];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.16e", v);
        os << buf;
    };
    for (const auto& r : rows) {
        put(r.tau);
        for (Eigen::Index i = 0; i < k; ++i) os << ',', put(r.u(i));
        os << ',', put(r.eps);
        os << ',', put(r.tau_next);
        for (Eigen::Index i = 0; i < k; ++i) os << ',', put(r.u_next(i));
        os << ',', put(r.tau_next - r.tau);
        os << '\n';
    }
}

}  // namespace perimap
