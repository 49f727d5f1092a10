#include "perimap/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

// Exit codes: 0 all mode invariants held, 1 an invariant failed,
// 2 configuration or usage error, 3 solver or runtime error.
int main(int argc, char** argv) {
    CLI::App app{"perimap: attracting invariant curves of periodically perturbed maps and hybrid systems"};
    std::string mode, config_path, out_dir;
    std::optional<std::uint64_t> seed;
    app.add_option("mode", mode, "check-map | certify | solve-curve | hybrid-analyze | sweep-eps | cylinder-data")
        ->required();
    app.add_option("--config", config_path, "JSON experiment configuration")->required();
    app.add_option("--out", out_dir, "artifact directory (overrides output.dir)");
    app.add_option("--seed", seed, "sampling seed (overrides sampling.seed)");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    perimap::ExperimentConfig cfg;
    try {
        cfg = perimap::load_config(config_path);
        const perimap::Mode m = perimap::parse_mode(mode);
        if (cfg.mode && *cfg.mode != m)
            throw perimap::ConfigError("'config.mode' = '" + perimap::mode_name(*cfg.mode) +
                                       "' conflicts with command-line mode '" + mode + "'");
        cfg.mode = m;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (seed) cfg.seed = *seed;
        if (!cfg.seed) throw perimap::ConfigError("'sampling.seed' is required (or pass --seed)");
    } catch (const perimap::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }

    try {
        const perimap::RunResult r = perimap::run(cfg);
        for (const auto& a : r.artifacts) std::cout << "wrote " << a << '\n';
        for (const auto& f : r.failures) std::cerr << "invariant failed: " << f << '\n';
        return r.passed ? 0 : 1;
    } catch (const perimap::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << mode << ": " << e.what() << '\n';
        return 3;
    }
}
