#pragma once

#include "absde/norms.hpp"
#include "absde/scenarios.hpp"
#include "absde/solver.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace absde {

// Fully resolved experiment description: scenario defaults with overrides
// already applied and every field validated. Produced by
// parse_experiment_config; consumed by run_experiment.
struct ExperimentConfig {
    std::string scenario_name;
    Scenario scenario;
    std::uint64_t seed = 1;
    std::size_t paths = 0;
    std::size_t steps = 0;
    double horizon = 0.0;
    double start_time = 0.0;
    std::vector<double> x0;
    SolverConfig solver;
    std::vector<double> p_list{2.0, 4.0};
    double bound_rel_tol = 1e-2;
    std::vector<std::string> checks;
    std::string out_dir = "results";
};

// Names accepted in the "checks" array, in canonical execution order.
const std::vector<std::string>& check_catalog();

// Parses and validates a JSON experiment description. Unknown fields, type
// mismatches, and checks inapplicable to the scenario all raise ConfigError
// with the offending field named.
ExperimentConfig parse_experiment_config(const std::string& json_text);

// Command-line overrides applied on top of the parsed config.
struct RunOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<std::string> out_dir;
    std::vector<std::string> checks; // nonempty replaces the config's list
};

struct RunOutcome {
    int exit_code = 0; // 0 all checks passed, 1 at least one failed
    std::vector<CheckRow> rows;
    double y_start = 0.0;
    std::optional<double> reference;
    std::string csv_path;
    std::string manifest_path;
};

// Loads the config file, runs the experiment, writes results.csv and
// manifest.json under out_dir, and returns the outcome. Throws ConfigError on
// schema violations and ConvergenceError when the solver fails to converge.
RunOutcome run_experiment(const std::string& config_path, const RunOverrides& overrides);

// Same pipeline starting from an already-parsed config (for in-process use).
RunOutcome run_experiment_config(ExperimentConfig config);

// Human-readable scenario listing for the command line.
std::string list_scenarios_text();

// Serializes rows as "check,lhs,rhs,slack,pass" CSV text (%.17g, pass as 0/1).
std::string rows_to_csv(const std::vector<CheckRow>& rows);

} // namespace absde
