// Experiment runner and command line: config schema validation, output
// artifacts, exit codes, and byte-level reproducibility across thread counts.

#include <doctest.h>

#include "absde/errors.hpp"
#include "absde/runlab.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

using namespace absde;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("absde_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    REQUIRE(out.good());
    out << text;
}

// Runs the installed command line binary; returns its exit code.
int run_cli(const std::string& args, const std::string& env_prefix = "") {
    const std::string cmd =
        env_prefix + std::string(ABSDE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int raw = std::system(cmd.c_str());
    REQUIRE(raw != -1);
    REQUIRE(WIFEXITED(raw));
    return WEXITSTATUS(raw);
}

std::string capture_cli(const std::string& args) {
    const std::string cmd = std::string(ABSDE_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[512];
    while (std::size_t got = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, got);
    pclose(pipe);
    return out;
}

} // namespace

TEST_CASE("config defaults come from the scenario, overrides are validated") {
    ExperimentConfig c = parse_experiment_config(R"({"scenario":"linear_y"})");
    CHECK(c.scenario_name == "linear_y");
    CHECK(c.paths == c.scenario.default_paths);
    CHECK(c.steps == c.scenario.default_steps);
    CHECK(c.seed == 1);
    CHECK(c.horizon == c.scenario.default_horizon);
    CHECK(!c.checks.empty());
    CHECK(c.checks == c.scenario.recommended_checks);

    ExperimentConfig o = parse_experiment_config(
        R"({"scenario":"linear_y","paths":500,"steps":20,"seed":9,"degree":2})");
    CHECK(o.paths == 500);
    CHECK(o.steps == 20);
    CHECK(o.seed == 9);
    CHECK(o.solver.basis.degree == 2);
}

TEST_CASE("schema violations raise with the offending field named") {
    auto message_of = [](const std::string& text) {
        try {
            parse_experiment_config(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };

    CHECK_THROWS_AS(parse_experiment_config("not json at all"), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(R"({"paths":100})"), ConfigError); // no scenario
    CHECK_THROWS_AS(parse_experiment_config(R"({"scenario":"no_such"})"), ConfigError);
    CHECK(message_of(R"({"scenario":"linear_y","pathz":100})").find("pathz") !=
          std::string::npos);
    CHECK_THROWS_AS(parse_experiment_config(R"({"scenario":"linear_y","paths":"many"})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(R"({"scenario":"linear_y","paths":1})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(R"({"scenario":"linear_y","steps":0})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(R"({"scenario":"linear_y","y_clamp":-1})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(R"({"scenario":"linear_y","z_clamp":-0.5})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(R"({"scenario":"linear_y","clip_sd":-3})"),
                    ConfigError);
}

TEST_CASE("check names are validated against the catalog and the scenario") {
    CHECK(!check_catalog().empty());
    for (const char* name : {"reference", "terminal_match", "replay", "universal_bounds"})
        CHECK(std::find(check_catalog().begin(), check_catalog().end(), name) !=
              check_catalog().end());

    CHECK_THROWS_AS(
        parse_experiment_config(R"({"scenario":"linear_y","checks":["no_such_check"]})"),
        ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(
                        R"({"scenario":"linear_y","checks":["reference","reference"]})"),
                    ConfigError);
    // Capability mismatches.
    CHECK_THROWS_AS(
        parse_experiment_config(R"({"scenario":"comparison_pair","checks":["reference"]})"),
        ConfigError);
    CHECK_THROWS_AS(
        parse_experiment_config(R"({"scenario":"linear_y","checks":["comparison"]})"),
        ConfigError);
    CHECK_THROWS_AS(
        parse_experiment_config(R"({"scenario":"linear_y","checks":["m_convergence"]})"),
        ConfigError);
    CHECK_THROWS_AS(parse_experiment_config(
                        R"({"scenario":"zero","steps":4,"checks":["u_regularity"]})"),
                    ConfigError);
}

TEST_CASE("rows serialize to a stable CSV table") {
    std::vector<CheckRow> rows;
    rows.push_back({"alpha", 1.0, 2.0, 1.0, true});
    rows.push_back({"beta", -0.5, 0.125, 0.625, false});
    CHECK(rows_to_csv(rows) ==
          "check,lhs,rhs,slack,pass\n"
          "alpha,1,2,1,1\n"
          "beta,-0.5,0.125,0.625,0\n");
}

TEST_CASE("scenario listing names every registered scenario") {
    const std::string text = list_scenarios_text();
    for (const std::string& name : scenario_names())
        CHECK(text.find(name) != std::string::npos);
}

TEST_CASE("an in-process run writes the results table and the manifest") {
    fs::path dir = fresh_dir("inproc");
    ExperimentConfig c = parse_experiment_config(
        R"({"scenario":"linear_y","paths":500,"steps":20,
            "checks":["reference","terminal_match","replay"],"out_dir":")" +
        dir.string() + R"("})");
    RunOutcome out = run_experiment_config(c);
    CHECK(out.exit_code == 0);
    CHECK(out.rows.size() == 3);
    REQUIRE(out.reference.has_value());
    CHECK(std::abs(out.y_start - *out.reference) <= 1e-4 * std::max(1.0, *out.reference));

    const std::string csv = slurp(out.csv_path);
    CHECK(csv.rfind("check,lhs,rhs,slack,pass\n", 0) == 0);
    CHECK(csv.find("reference,") != std::string::npos);

    nlohmann::json man = nlohmann::json::parse(slurp(out.manifest_path));
    CHECK(man["scenario"] == "linear_y");
    CHECK(man["paths"] == 500);
    CHECK(man["n_failed"] == 0);
    CHECK(man["y_start"].is_number());
    CHECK(man["cascade"].is_null()); // Lipschitz scenario: no truncation cascade
}

TEST_CASE("command line: exit codes, artifacts, thread-count reproducibility") {
    fs::path dir = fresh_dir("cli");
    const fs::path cfg = dir / "run.json";
    spit(cfg, R"({"scenario":"linear_y","paths":400,"steps":20,
                  "checks":["reference","terminal_match","fixed_point_residual"]})");

    // Clean run: exit 0 and both artifacts in place.
    const std::string out1 = (dir / "out1").string();
    CHECK(run_cli("run " + cfg.string() + " --out " + out1) == 0);
    CHECK(fs::exists(fs::path(out1) / "results.csv"));
    CHECK(fs::exists(fs::path(out1) / "manifest.json"));

    // A failing check exits 1: a value truncation far below the true value
    // pins the start value away from the reference.
    const fs::path bad = dir / "bad.json";
    spit(bad, R"({"scenario":"linear_y","paths":400,"steps":20,"y_clamp":0.05,
                  "checks":["reference"]})");
    CHECK(run_cli("run " + bad.string() + " --out " + (dir / "out_bad").string()) == 1);

    // Schema violations and usage errors exit 2.
    const fs::path broken = dir / "broken.json";
    spit(broken, R"({"scenario":"linear_y","pathz":7})");
    CHECK(run_cli("run " + broken.string()) == 2);
    CHECK(run_cli("run " + (dir / "missing.json").string()) == 2);
    CHECK(run_cli("frobnicate") == 2);

    // Same seed, different thread counts: byte-identical results.
    const std::string t1 = (dir / "t1").string();
    const std::string t3 = (dir / "t3").string();
    CHECK(run_cli("run " + cfg.string() + " --seed 5 --out " + t1, "ABSDE_THREADS=1 ") == 0);
    CHECK(run_cli("run " + cfg.string() + " --seed 5 --out " + t3, "ABSDE_THREADS=3 ") == 0);
    CHECK(slurp(fs::path(t1) / "results.csv") == slurp(fs::path(t3) / "results.csv"));

    // Overrides land in the manifest.
    nlohmann::json man = nlohmann::json::parse(slurp(fs::path(t1) / "manifest.json"));
    CHECK(man["seed"] == 5);

    // The listing subcommand prints every scenario.
    const std::string listing = capture_cli("list-scenarios");
    for (const std::string& name : scenario_names())
        CHECK(listing.find(name) != std::string::npos);
}
