#include "absde/errors.hpp"
#include "absde/runlab.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

// Exit codes: 0 all checks passed, 1 at least one check failed, 2 bad usage
// or config schema violation, 3 solver failed to converge.
int main(int argc, char** argv) {
    CLI::App app{"Regression Monte Carlo laboratory for anticipated backward SDEs with jumps"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<std::string> out_dir;
    std::vector<std::string> checks;

    CLI::App* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
    run->add_option("config", config_path, "Path to the JSON config file")->required();
    run->add_option("--seed", seed, "Master seed override");
    run->add_option("--paths", paths, "Simulated path count override");
    run->add_option("--out", out_dir, "Output directory override");
    run->add_option("--check", checks, "Run only the named checks (repeatable)");

    CLI::App* list = app.add_subcommand("list-scenarios", "List the registered scenarios");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (list->parsed()) {
        std::fputs(absde::list_scenarios_text().c_str(), stdout);
        return 0;
    }

    try {
        absde::RunOverrides overrides;
        overrides.seed = seed;
        overrides.paths = paths;
        overrides.out_dir = out_dir;
        overrides.checks = checks;
        absde::RunOutcome outcome = absde::run_experiment(config_path, overrides);
        for (const auto& row : outcome.rows)
            std::printf("%-24s %s  lhs=%.10g rhs=%.10g slack=%.3g\n", row.name.c_str(),
                        row.pass ? "PASS" : "FAIL", row.lhs, row.rhs, row.slack);
        std::printf("y_start = %.10g\n", outcome.y_start);
        if (outcome.reference) std::printf("reference = %.10g\n", *outcome.reference);
        std::printf("wrote %s and %s\n", outcome.csv_path.c_str(), outcome.manifest_path.c_str());
        return outcome.exit_code;
    } catch (const absde::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const absde::ConvergenceError& e) {
        std::fprintf(stderr, "convergence failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
