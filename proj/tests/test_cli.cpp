#include "oracles.hpp"

#include <json.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Workspace {
    fs::path dir;
    explicit Workspace(const std::string& tag) {
        dir = fs::temp_directory_path() / ("perimap_cli_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workspace() { fs::remove_all(dir); }

    fs::path config(const std::string& name, const std::string& text) const {
        const fs::path p = dir / name;
        std::ofstream(p) << text;
        return p;
    }
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(PERIMAP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kShear =
    R"({"system":{"name":"linear-shear","params":{"q":0.5}},"omega":0.25,"eps":0.01,)"
    R"("solver":{"n_nodes":256,"tol":1e-12},"sampling":{"seed":1}})";

const char* kPolar =
    R"({"system":{"name":"polar-hybrid","params":{"kappa":0.5}},"eps":0.01,)"
    R"("solver":{"n_nodes":64,"tol":1e-10},"sampling":{"seed":1,"n_samples":200}})";

}  // namespace

TEST_CASE("solve-curve output matches the closed-form curve", "[cli]") {
    Workspace ws("solve");
    const fs::path cfg = ws.config("c.json", kShear);
    REQUIRE(run_cli("solve-curve --config " + cfg.string() + " --out " + (ws.dir / "o").string()) == 0);
    std::ifstream in(ws.dir / "o" / "curve.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "x,phi0");
    double err = 0.0;
    int rows = 0;
    while (std::getline(in, line)) {
        double x = 0.0, phi = 0.0;
        REQUIRE(std::sscanf(line.c_str(), "%lf,%lf", &x, &phi) == 2);
        err = std::max(err, std::abs(phi - oracle::shear_curve(0.5, 0.25, 0.01, x)));
        ++rows;
    }
    CHECK(rows == 256);
    CHECK(err <= 1e-8);
    const auto report = nlohmann::json::parse(slurp(ws.dir / "o" / "solver_report.json"));
    CHECK(report["converged"].get<bool>());
}

TEST_CASE("hybrid-analyze reports the closed-form multiplier", "[cli]") {
    Workspace ws("hybrid");
    const fs::path cfg = ws.config("c.json", kPolar);
    REQUIRE(run_cli("hybrid-analyze --config " + cfg.string() + " --out " + ws.dir.string()) == 0);
    const auto rep = nlohmann::json::parse(slurp(ws.dir / "cycle_report.json"));
    const double J = rep["jacobian"][0][0].get<double>();
    CHECK(std::abs(J - oracle::polar_return_slope(0.5)) <= 1e-6);
    CHECK(std::abs(rep["u_star"][0].get<double>()) <= 1e-10);
    CHECK(rep["certified"].get<bool>());
}

TEST_CASE("configuration errors exit with the usage code", "[cli][error]") {
    Workspace ws("errors");
    const std::string out = " --out " + ws.dir.string();
    SECTION("non-positive tolerance") {
        const fs::path cfg = ws.config("c.json", R"({"solver":{"tol":-1},"sampling":{"seed":1}})");
        CHECK(run_cli("solve-curve --config " + cfg.string() + out) == 2);
    }
    SECTION("unknown key") {
        const fs::path cfg = ws.config("c.json", R"({"omgea":0.25,"sampling":{"seed":1}})");
        CHECK(run_cli("solve-curve --config " + cfg.string() + out) == 2);
    }
    SECTION("unknown system parameter") {
        const fs::path cfg =
            ws.config("c.json", R"({"system":{"name":"polar-hybrid","params":{"q":0.5}},"sampling":{"seed":1}})");
        CHECK(run_cli("hybrid-analyze --config " + cfg.string() + out) == 2);
    }
    SECTION("missing seed, then supplied on the command line") {
        const fs::path cfg = ws.config("c.json", R"({"system":{"name":"linear-shear","params":{"q":0.5}}})");
        CHECK(run_cli("check-map --config " + cfg.string() + out) == 2);
        CHECK(run_cli("check-map --config " + cfg.string() + out + " --seed 3") == 0);
    }
    SECTION("mode conflicting with the config") {
        const fs::path cfg = ws.config("c.json", R"({"mode":"certify","sampling":{"seed":1}})");
        CHECK(run_cli("solve-curve --config " + cfg.string() + out) == 2);
    }
    SECTION("unknown mode and missing config") {
        CHECK(run_cli("fly --config " + (ws.dir / "none.json").string()) == 2);
        CHECK(run_cli("solve-curve") == 2);
    }
}

TEST_CASE("repeated runs with the same seed are byte-identical", "[cli][property]") {
    Workspace ws("determinism");
    const fs::path shear = ws.config("s.json", kShear);
    const fs::path polar = ws.config("p.json", kPolar);
    for (const char* mode : {"check-map", "solve-curve"}) {
        REQUIRE(run_cli(std::string(mode) + " --config " + shear.string() + " --out " + (ws.dir / "a").string()) == 0);
        REQUIRE(run_cli(std::string(mode) + " --config " + shear.string() + " --out " + (ws.dir / "b").string()) == 0);
    }
    REQUIRE(run_cli("hybrid-analyze --config " + polar.string() + " --out " + (ws.dir / "a").string()) == 0);
    REQUIRE(run_cli("hybrid-analyze --config " + polar.string() + " --out " + (ws.dir / "b").string()) == 0);
    int compared = 0;
    for (const auto& e : fs::directory_iterator(ws.dir / "a")) {
        const fs::path twin = ws.dir / "b" / e.path().filename();
        REQUIRE(fs::exists(twin));
        CHECK(slurp(e.path()) == slurp(twin));
        ++compared;
    }
    CHECK(compared >= 4);
}
