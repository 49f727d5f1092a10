#pragma once

// JSON and CSV serialization of reports. CSV numbers use 17 significant
// digits so values round-trip exactly.

#include "perimap/cycle_analysis.hpp"
#include "perimap/embedding.hpp"
#include "perimap/invariant_graph.hpp"

#include <json.hpp>

#include <cstdio>
#include <ostream>
#include <string>

namespace perimap::io {

using json = nlohmann::ordered_json;

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.16e", v);
    return buf;
}

inline json to_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline json to_json(const Mat& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        a.push_back(std::move(row));
    }
    return a;
}

template <class T>
json to_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

inline json to_json(const SampledBounds& b) {
    return {{"sup_alpha", b.sup_alpha},     {"sup_beta", b.sup_beta},       {"sup_dalpha", b.sup_dalpha},
            {"sup_dbeta", b.sup_dbeta},     {"sup_d2alpha", b.sup_d2alpha}, {"sup_d2beta", b.sup_d2beta}};
}

inline json to_json(const AssumptionReport& r) {
    return {{"q_estimate", r.q_estimate},
            {"beta_y0", to_json(r.beta_y0)},
            {"beta_y0_invertible", r.beta_y0_invertible},
            {"a2_defect", r.a2_defect},
            {"periodicity_defect", r.periodicity_defect},
            {"bounds", to_json(r.bounds)},
            {"n_samples", r.n_samples},
            {"seed", r.seed}};
}

inline json to_json(const EmbeddingParams& p) {
    return {{"lambda", p.lambda},       {"lambda0", to_json(p.lambda0)}, {"eps0", to_json(p.eps0)},
            {"r0", to_json(p.r0)},      {"mu", p.mu},                    {"q", p.q},
            {"B", to_json(p.B)},        {"A_lambda", to_json(p.A_lambda)}, {"r1", p.r1},
            {"delta", p.delta},         {"n_samples", p.n_samples},      {"seed", p.seed}};
}

inline json to_json(const SpectralGap& g) {
    return {{"mu", g.mu}, {"norm_B", g.norm_B}, {"norm_A_inv", g.norm_A_inv}, {"ok", g.ok}};
}

inline json to_json(const Certificate& c) {
    json probes = json::array();
    for (const auto& p : c.search.probes)
        probes.push_back({{"lambda", p.lambda}, {"sup_alpha", p.sup_alpha}, {"sup_beta", p.sup_beta}, {"pass", p.pass}});
    return {{"ok", c.ok},
            {"params", to_json(c.params)},
            {"spectral_gap", to_json(c.gap)},
            {"assumptions", to_json(c.assumptions)},
            {"lambda0_search", {{"probes", probes}, {"failure", c.search.failure}}}};
}

inline json to_json(const SolverReport& r) {
    return {{"iterations", r.iterations},
            {"final_update", r.final_update},
            {"invariance_residual", r.invariance_residual},
            {"periodicity_defect", r.periodicity_defect},
            {"measured_rates", r.measured_rates},
            {"rate_bound", r.rate_bound},
            {"converged", r.converged}};
}

inline json to_json(const Spectrum& s) {
    json ev = json::array();
    for (const auto& l : s.eigenvalues) ev.push_back({{"re", l.real()}, {"im", l.imag()}, {"modulus", std::abs(l)}});
    return {{"jacobian", to_json(s.jacobian)},
            {"eigenvalues", ev},
            {"spectral_radius", s.spectral_radius},
            {"min_modulus", s.min_modulus},
            {"fd_step", s.fd_step},
            {"richardson_defect", s.richardson_defect},
            {"richardson_ok", s.richardson_ok},
            {"a3_certified", s.a3_certified}};
}

inline json to_json(const AdaptedNorm& a) {
    return {{"m", a.m},
            {"rho", a.rho},
            {"rho_hat", a.rho_hat},
            {"S", to_json(a.S)},
            {"induced_norm", a.induced_norm},
            {"telescoping_bound", a.telescoping_bound},
            {"sampled_max", a.sampled_max}};
}

inline json to_json(const CycleReport& r) {
    json j = {{"u_star", to_json(r.u_star)},
              {"T_star", r.T_star},
              {"fixed_point_residual", r.fixed_point_residual},
              {"newton_iterations", r.newton_iterations}};
    const json sp = to_json(r.spectrum);
    for (auto it = sp.begin(); it != sp.end(); ++it) j[it.key()] = it.value();
    j["adapted_norm"] = r.adapted ? to_json(*r.adapted) : json(nullptr);
    j["transversality"] = r.transversality;
    j["transversal"] = r.transversal;
    j["certified"] = r.certified;
    return j;
}

inline json to_json(const ContractionCertificate& c) {
    return {{"q", c.q}, {"ok", c.ok}, {"largest_radius", c.largest_radius}, {"n_pairs", c.n_pairs}};
}

/// Node table: x, phi_0, ..., phi_{k-1}.
inline void write_curve_csv(std::ostream& os, const PeriodicGridFn& phi) {
    os << "x";
    for (Eigen::Index i = 0; i < phi.dim(); ++i) os << ",phi" << i;
    os << '\n';
    for (std::size_t n = 0; n < phi.n_nodes(); ++n) {
        os << fmt(phi.node(n));
        for (Eigen::Index i = 0; i < phi.dim(); ++i) os << ',' << fmt(phi.values()[n](i));
        os << '\n';
    }
}

inline void write_continuity_csv(std::ostream& os, const ContinuityTable& t) {
    os << "eps,sup_norm,ratio,ok\n";
    for (const auto& r : t.rows) os << fmt(r.eps) << ',' << fmt(r.sup_norm) << ',' << fmt(r.ratio) << ',' << (r.ok ? 1 : 0) << '\n';
}

}  // namespace perimap::io
