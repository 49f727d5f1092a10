#pragma once

// Configuration-driven pipeline behind the command-line tool.

#include "perimap/io.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace perimap {

enum class Mode { CheckMap, Certify, SolveCurve, HybridAnalyze, SweepEps, CylinderData };

inline Mode parse_mode(const std::string& s) {
    if (s == "check-map") return Mode::CheckMap;
    if (s == "certify") return Mode::Certify;
    if (s == "solve-curve") return Mode::SolveCurve;
    if (s == "hybrid-analyze") return Mode::HybridAnalyze;
    if (s == "sweep-eps") return Mode::SweepEps;
    if (s == "cylinder-data") return Mode::CylinderData;
    throw ConfigError("unknown mode '" + s + "'");
}

inline std::string mode_name(Mode m) {
    switch (m) {
        case Mode::CheckMap: return "check-map";
        case Mode::Certify: return "certify";
        case Mode::SolveCurve: return "solve-curve";
        case Mode::HybridAnalyze: return "hybrid-analyze";
        case Mode::SweepEps: return "sweep-eps";
        case Mode::CylinderData: return "cylinder-data";
    }
    return "";
}

struct ExperimentConfig {
    std::optional<Mode> mode;
    std::string system = "linear-shear";
    std::map<std::string, double> params;
    double omega = 0.25;
    double eps = 0.01;
    std::vector<double> eps_list;
    double band_limit = 1.5;
    std::size_t n_nodes = 256;
    double tol = 1e-12;
    std::size_t max_iter = 2000;
    std::size_t n_samples = 1000;
    std::optional<std::uint64_t> seed;
    std::size_t n_trajectories = 8;
    FlowOptions flow;
    std::string out_dir = ".";
};

namespace detail {

using io::json;

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError("'" + where + "' must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError("unknown key '" + where + "." + it.key() + "'");
}

inline double get_number(const json& obj, const std::string& key, const std::string& where) {
    const json& v = obj.at(key);
    if (!v.is_number()) throw ConfigError("'" + where + "." + key + "' must be a number");
    return v.get<double>();
}

inline std::size_t get_count(const json& obj, const std::string& key, const std::string& where) {
    const json& v = obj.at(key);
    if (!v.is_number_unsigned() || v.get<std::size_t>() == 0)
        throw ConfigError("'" + where + "." + key + "' must be a positive integer");
    return v.get<std::size_t>();
}

inline double get_positive(const json& obj, const std::string& key, const std::string& where) {
    const double v = get_number(obj, key, where);
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("'" + where + "." + key + "' must be strictly positive");
    return v;
}

inline const std::map<std::string, std::set<std::string>>& system_params() {
    static const std::map<std::string, std::set<std::string>> table = {
        {"linear-shear", {"q", "period", "r1", "coupling"}},
        {"nonlinear-toy", {"q", "quad", "period", "r1", "coupling"}},
        {"polar-hybrid", {"kappa", "T_g", "amplitude", "r1"}},
    };
    return table;
}

}  // namespace detail

/// Strict parse: unknown keys, non-positive tolerances and malformed values
/// raise ConfigError naming the offending key.
inline ExperimentConfig parse_config(const io::json& j) {
    using detail::get_count;
    using detail::get_number;
    using detail::get_positive;
    ExperimentConfig c;
    detail::reject_unknown(j, {"mode", "system", "omega", "eps", "eps_list", "band_limit", "solver", "sampling",
                               "flow", "n_trajectories", "output"},
                           "config");
    if (j.contains("mode")) {
        if (!j["mode"].is_string()) throw ConfigError("'config.mode' must be a string");
        c.mode = parse_mode(j["mode"].get<std::string>());
    }
    if (j.contains("system")) {
        const auto& s = j["system"];
        detail::reject_unknown(s, {"name", "params"}, "system");
        if (!s.contains("name") || !s["name"].is_string()) throw ConfigError("'system.name' must be a string");
        c.system = s["name"].get<std::string>();
        const auto& table = detail::system_params();
        const auto found = table.find(c.system);
        if (found == table.end()) throw ConfigError("unknown system 'system.name' = '" + c.system + "'");
        if (s.contains("params")) {
            detail::reject_unknown(s["params"], found->second, "system.params");
            for (auto it = s["params"].begin(); it != s["params"].end(); ++it)
                c.params[it.key()] = get_number(s["params"], it.key(), "system.params");
        }
    }
    if (j.contains("omega")) c.omega = get_number(j, "omega", "config");
    if (j.contains("eps")) c.eps = get_number(j, "eps", "config");
    if (j.contains("eps_list")) {
        if (!j["eps_list"].is_array() || j["eps_list"].empty())
            throw ConfigError("'config.eps_list' must be a non-empty array");
        for (const auto& v : j["eps_list"]) {
            if (!v.is_number()) throw ConfigError("'config.eps_list' entries must be numbers");
            c.eps_list.push_back(v.get<double>());
        }
    }
    if (j.contains("band_limit")) c.band_limit = get_positive(j, "band_limit", "config");
    if (j.contains("n_trajectories")) c.n_trajectories = get_count(j, "n_trajectories", "config");
    if (j.contains("solver")) {
        const auto& s = j["solver"];
        detail::reject_unknown(s, {"n_nodes", "tol", "max_iter"}, "solver");
        if (s.contains("n_nodes")) c.n_nodes = get_count(s, "n_nodes", "solver");
        if (s.contains("tol")) c.tol = get_positive(s, "tol", "solver");
        if (s.contains("max_iter")) c.max_iter = get_count(s, "max_iter", "solver");
    }
    if (j.contains("sampling")) {
        const auto& s = j["sampling"];
        detail::reject_unknown(s, {"n_samples", "seed"}, "sampling");
        if (s.contains("n_samples")) c.n_samples = get_count(s, "n_samples", "sampling");
        if (s.contains("seed")) {
            if (!s["seed"].is_number_unsigned()) throw ConfigError("'sampling.seed' must be a non-negative integer");
            c.seed = s["seed"].get<std::uint64_t>();
        }
    }
    if (j.contains("flow")) {
        const auto& s = j["flow"];
        detail::reject_unknown(s, {"rtol", "atol", "event_tol", "max_time", "max_dt"}, "flow");
        if (s.contains("rtol")) c.flow.rtol = get_positive(s, "rtol", "flow");
        if (s.contains("atol")) c.flow.atol = get_positive(s, "atol", "flow");
        if (s.contains("event_tol")) c.flow.event_tol = get_positive(s, "event_tol", "flow");
        if (s.contains("max_time")) c.flow.max_time = get_positive(s, "max_time", "flow");
        if (s.contains("max_dt")) c.flow.max_dt = get_positive(s, "max_dt", "flow");
    }
    if (j.contains("output")) {
        const auto& s = j["output"];
        detail::reject_unknown(s, {"dir"}, "output");
        if (!s.contains("dir") || !s["dir"].is_string()) throw ConfigError("'output.dir' must be a string");
        c.out_dir = s["dir"].get<std::string>();
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    io::json j;
    try {
        j = io::json::parse(in);
    } catch (const io::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

inline bool is_hybrid(const ExperimentConfig& c) { return c.system == "polar-hybrid"; }

inline double param(const ExperimentConfig& c, const std::string& k, double fallback) {
    const auto it = c.params.find(k);
    return it == c.params.end() ? fallback : it->second;
}

inline MapSpec build_map(const ExperimentConfig& c) {
    ShearParams p;
    p.q = param(c, "q", 0.5);
    p.period = param(c, "period", 1.0);
    p.r1 = param(c, "r1", 1.0);
    p.coupling = param(c, "coupling", 1.0);
    if (c.system == "nonlinear-toy") p.quad = param(c, "quad", 0.1);
    return make_shear_map(p, c.system);
}

inline HybridSystem build_hybrid(const ExperimentConfig& c) {
    PolarHybridParams p;
    p.kappa = param(c, "kappa", p.kappa);
    p.T_g = param(c, "T_g", p.T_g);
    p.amplitude = param(c, "amplitude", p.amplitude);
    p.r1 = param(c, "r1", p.r1);
    return polar_hybrid(p);
}

struct RunResult {
    bool passed = false;
    std::vector<std::string> artifacts;
    std::vector<std::string> failures;
};

namespace detail {

class Artifacts {
public:
    Artifacts(std::filesystem::path dir, RunResult& r) : dir_(std::move(dir)), r_(r) {
        std::filesystem::create_directories(dir_);
    }

    void json(const std::string& name, const io::json& j) {
        write(name, j.dump(2) + "\n");
    }

    void text(const std::string& name, const std::string& s) { write(name, s); }

private:
    void write(const std::string& name, const std::string& s) {
        const auto p = dir_ / name;
        std::ofstream out(p, std::ios::binary);
        if (!out) throw Error("cannot write artifact '" + p.string() + "'");
        out << s;
        r_.artifacts.push_back(p.string());
    }

    std::filesystem::path dir_;
    RunResult& r_;
};

inline void expect(RunResult& r, bool cond, const std::string& what) {
    if (!cond) r.failures.push_back(what);
}

inline CurveConfig curve_config(const ExperimentConfig& c) {
    CurveConfig cfg;
    cfg.n_nodes = c.n_nodes;
    cfg.tol = c.tol;
    cfg.max_iter = c.max_iter;
    cfg.residual_samples = c.n_samples;
    cfg.residual_seed = *c.seed;
    return cfg;
}

struct MapContext {
    MapSpec spec;
    double omega;
    std::optional<PoincareHandle> handle;
};

inline MapContext map_context(const ExperimentConfig& c) {
    if (!is_hybrid(c)) return {build_map(c), c.omega, std::nullopt};
    PoincareHandle h = make_poincare_handle(build_hybrid(c), c.flow);
    const double r1 = h.system().r1;
    MapSpec spec = extract_alpha_beta(h, {-r1, r1});
    return {std::move(spec), 1.0, std::move(h)};
}

}  // namespace detail

/// Runs one mode and writes its artifacts. passed is true iff every invariant
/// asserted for the mode held.
inline RunResult run(const ExperimentConfig& c) {
    if (!c.mode) throw ConfigError("no mode given");
    if (!c.seed) throw ConfigError("'sampling.seed' is required");
    RunResult res;
    detail::Artifacts out(c.out_dir, res);
    const std::uint64_t seed = *c.seed;
    using detail::expect;

    switch (*c.mode) {
        case Mode::CheckMap: {
            const auto ctx = detail::map_context(c);
            const AssumptionReport rep = check_assumptions(ctx.spec, default_box(ctx.spec), c.n_samples, seed);
            out.json("assumptions.json", io::to_json(rep));
            expect(res, rep.q_estimate < 1.0, "q_estimate < 1");
            expect(res, rep.beta_y0_invertible, "beta_y(0) invertible");
            expect(res, rep.a2_defect <= 1e-8, "a2_defect <= 1e-8");
            expect(res, rep.periodicity_defect <= 1e-8, "periodicity_defect <= 1e-8");
            break;
        }
        case Mode::Certify: {
            const auto ctx = detail::map_context(c);
            CertifyOptions opt;
            opt.lambda0.seed = seed;
            opt.assumption_samples = c.n_samples;
            const Certificate cert = certify(ctx.spec, opt);
            out.json("certificate.json", io::to_json(cert));
            expect(res, cert.ok, "certificate issued");
            break;
        }
        case Mode::SolveCurve: {
            const auto ctx = detail::map_context(c);
            const CurveSolution sol = solve_invariant_curve(ctx.spec, ctx.omega, c.eps, detail::curve_config(c));
            std::ostringstream csv;
            io::write_curve_csv(csv, sol.curve);
            out.text("curve.csv", csv.str());
            out.json("solver_report.json", io::to_json(sol.report));
            expect(res, sol.report.converged, "invariance residual within gate");
            break;
        }
        case Mode::HybridAnalyze: {
            if (!is_hybrid(c)) throw ConfigError("'system.name' must name a hybrid system for hybrid-analyze");
            PoincareHandle h = make_poincare_handle(build_hybrid(c), c.flow);
            const CycleReport rep = analyze_cycle(h);
            io::json j = io::to_json(rep);
            if (rep.adapted) {
                const double r1 = h.system().r1;
                const ContractionCertificate cc =
                    certify_contraction(h, r1, {0.0, 0.0}, *rep.adapted, std::min<std::size_t>(c.n_samples, 200), seed);
                j["contraction"] = io::to_json(cc);
                expect(res, cc.ok, "sampled contraction q < 1");
            }
            out.json("cycle_report.json", j);
            expect(res, rep.fixed_point_residual <= 1e-10, "fixed-point residual");
            expect(res, rep.certified, "spectrum, adapted norm and transversality certified");
            break;
        }
        case Mode::SweepEps: {
            const auto ctx = detail::map_context(c);
            if (c.eps_list.empty()) throw ConfigError("'config.eps_list' is required for sweep-eps");
            const ContinuityTable tab =
                continuity_in_eps(ctx.spec, ctx.omega, c.eps_list, detail::curve_config(c), c.band_limit);
            std::ostringstream csv;
            io::write_continuity_csv(csv, tab);
            out.text("continuity.csv", csv.str());
            for (const auto& r : tab.rows) expect(res, r.ok, "converged at eps = " + io::fmt(r.eps));
            expect(res, tab.band_ok, "ratio band within limit");
            expect(res, tab.vanishes_at_zero, "sup norm monotone in |eps|");
            break;
        }
        case Mode::CylinderData: {
            if (!is_hybrid(c)) throw ConfigError("'system.name' must name a hybrid system for cylinder-data");
            const auto ctx = detail::map_context(c);
            const HybridSystem& sys = ctx.handle->system();
            const CurveSolution sol = solve_invariant_curve(ctx.spec, 1.0, c.eps, detail::curve_config(c));
            expect(res, sol.report.converged, "invariance residual within gate");
            FlowOptions fo = c.flow;
            fo.dense_dt = sys.T_g / 200.0;
            std::vector<std::vector<FlowSample>> runs(c.n_trajectories);
            parallel_for(c.n_trajectories, [&](std::size_t i) {
                const double tau = sys.T_g * static_cast<double>(i) / static_cast<double>(c.n_trajectories);
                const Vec x0 = sys.Delta(sys.D(sol.curve(tau)));
                runs[i] = simulate_hybrid(sys, tau, x0, c.eps, tau + sys.T_g, fo);
            });
            std::ostringstream csv;
            csv << "trajectory,t,t_mod";
            for (Eigen::Index k = 0; k < sys.dim(); ++k) csv << ",x" << k;
            csv << '\n';
            for (std::size_t i = 0; i < runs.size(); ++i) {
                for (const auto& s : runs[i]) {
                    csv << i << ',' << io::fmt(s.t) << ',' << io::fmt(s.t - sys.T_g * std::floor(s.t / sys.T_g));
                    for (Eigen::Index k = 0; k < s.x.size(); ++k) csv << ',' << io::fmt(s.x(k));
                    csv << '\n';
                    expect(res, s.x.allFinite(), "finite trajectory samples");
                }
            }
            out.text("cylinder.csv", csv.str());
            std::ostringstream curve;
            io::write_curve_csv(curve, sol.curve);
            out.text("curve.csv", curve.str());
            break;
        }
    }
    res.passed = res.failures.empty();
    return res;
}

}  // namespace perimap
