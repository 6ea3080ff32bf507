#include "absde/runlab.hpp"

#include "absde/driver.hpp"
#include "absde/errors.hpp"
#include "absde/moment_checks.hpp"
#include "absde/rng.hpp"
#include "absde/simulate.hpp"
#include "absde/verify.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

namespace absde {

namespace {

using nlohmann::json;

const std::set<std::string>& known_fields() {
    static const std::set<std::string> fields = {
        "scenario",  "seed",           "paths",  "steps",      "horizon",
        "start_time", "x0",            "degree", "ridge",      "tolerance",
        "max_iterations", "window",    "m_schedule", "checks", "p_list",
        "bound_rel_tol", "out_dir",    "y_clamp", "z_clamp", "clip_sd",
    };
    return fields;
}

double get_number(const json& j, const char* name) {
    const json& v = j.at(name);
    if (!v.is_number()) throw ConfigError(std::string("'") + name + "' must be a number");
    double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(std::string("'") + name + "' must be finite");
    return d;
}

std::size_t get_count(const json& j, const char* name, std::size_t lo) {
    const json& v = j.at(name);
    if (!v.is_number_integer() && !v.is_number_unsigned())
        throw ConfigError(std::string("'") + name + "' must be an integer");
    if (v.is_number_integer() && v.get<long long>() < 0)
        throw ConfigError(std::string("'") + name + "' must be nonnegative");
    auto n = v.get<std::uint64_t>();
    if (n < lo)
        throw ConfigError(std::string("'") + name + "' must be at least " + std::to_string(lo));
    return static_cast<std::size_t>(n);
}

std::vector<double> get_number_array(const json& j, const char* name) {
    const json& v = j.at(name);
    if (!v.is_array()) throw ConfigError(std::string("'") + name + "' must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& e : v) {
        if (!e.is_number())
            throw ConfigError(std::string("'") + name + "' must contain only numbers");
        double d = e.get<double>();
        if (!std::isfinite(d))
            throw ConfigError(std::string("'") + name + "' must contain only finite numbers");
        out.push_back(d);
    }
    return out;
}

void validate_checks(const std::vector<std::string>& checks, const Scenario& scenario,
                     std::size_t steps) {
    const auto& catalog = check_catalog();
    std::set<std::string> seen;
    for (const auto& name : checks) {
        if (std::find(catalog.begin(), catalog.end(), name) == catalog.end())
            throw ConfigError("unknown check '" + name + "'");
        if (!seen.insert(name).second) throw ConfigError("duplicate check '" + name + "'");
        if (name == "reference" && !scenario.has_reference)
            throw ConfigError("check 'reference' requires a scenario with a reference value");
        if (name == "comparison" && scenario.drivers.size() != 2)
            throw ConfigError("check 'comparison' requires a two-driver scenario");
        if (name == "m_convergence" && scenario.drivers.front().globally_lipschitz)
            throw ConfigError(
                "check 'm_convergence' requires a quadratic-exponential scenario");
        if (name == "u_regularity" && steps < 8)
            throw ConfigError("check 'u_regularity' requires at least 8 time steps");
    }
}

// max <= ceiling * median row over a set of positive ratios; vacuous pass
// when the set is empty.
CheckRow uniformity_row(const std::string& name, std::vector<double> ratios, double ceiling) {
    CheckRow row;
    row.name = name;
    if (ratios.empty()) {
        row.pass = true;
        return row;
    }
    std::sort(ratios.begin(), ratios.end());
    double median = ratios[(ratios.size() - 1) / 2];
    row.lhs = ratios.back();
    row.rhs = ceiling * median + 1e-9;
    row.slack = row.rhs - row.lhs;
    row.pass = row.slack >= 0.0;
    return row;
}

std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

const std::vector<std::string>& check_catalog() {
    static const std::vector<std::string> catalog = {
        "reference",       "terminal_match", "fixed_point_residual",
        "universal_bounds", "jump_norm_chain", "doleans",
        "energy",          "compensator_moment", "stability",
        "comparison",      "u_regularity",   "z_growth",
        "m_convergence",   "structure",      "lipschitz_coeffs",
        "moment_bounds",   "replay",
    };
    return catalog;
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& item : j.items())
        if (known_fields().find(item.key()) == known_fields().end())
            throw ConfigError("unknown field '" + item.key() + "'");
    if (!j.contains("scenario") || !j.at("scenario").is_string())
        throw ConfigError("'scenario' (string) is required");

    ExperimentConfig config;
    config.scenario_name = j.at("scenario").get<std::string>();
    try {
        config.scenario = make_scenario(config.scenario_name);
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    const Scenario& scenario = config.scenario;
    config.paths = scenario.default_paths;
    config.steps = scenario.default_steps;
    config.horizon = scenario.default_horizon;
    config.start_time = scenario.default_start.t;
    config.x0 = scenario.default_start.x;
    config.solver = scenario.default_config;
    config.checks = scenario.recommended_checks;

    if (j.contains("seed")) config.seed = static_cast<std::uint64_t>(get_count(j, "seed", 0));
    if (j.contains("paths")) config.paths = get_count(j, "paths", 2);
    if (j.contains("steps")) config.steps = get_count(j, "steps", 1);
    if (j.contains("horizon")) {
        config.horizon = get_number(j, "horizon");
        if (config.horizon <= 0.0) throw ConfigError("'horizon' must be positive");
    }
    if (j.contains("start_time")) {
        config.start_time = get_number(j, "start_time");
        if (config.start_time < 0.0) throw ConfigError("'start_time' must be nonnegative");
    }
    if (config.start_time >= config.horizon)
        throw ConfigError("'start_time' must be strictly before the horizon");
    if (j.contains("x0")) {
        config.x0 = get_number_array(j, "x0");
        if (config.x0.size() != scenario.model.dim_x)
            throw ConfigError("'x0' must have " + std::to_string(scenario.model.dim_x) +
                              " entries for this scenario");
    }
    if (j.contains("degree"))
        config.solver.basis.degree = get_count(j, "degree", 0);
    if (j.contains("ridge")) {
        config.solver.basis.ridge = get_number(j, "ridge");
        if (config.solver.basis.ridge < 0.0) throw ConfigError("'ridge' must be nonnegative");
    }
    if (j.contains("tolerance")) {
        config.solver.tolerance = get_number(j, "tolerance");
        if (config.solver.tolerance <= 0.0) throw ConfigError("'tolerance' must be positive");
    }
    if (j.contains("max_iterations"))
        config.solver.max_iterations = get_count(j, "max_iterations", 1);
    if (j.contains("window")) {
        config.solver.window = get_number(j, "window");
        if (config.solver.window < 0.0) throw ConfigError("'window' must be nonnegative");
    }
    if (j.contains("m_schedule")) {
        config.solver.m_schedule = get_number_array(j, "m_schedule");
        if (config.solver.m_schedule.empty())
            throw ConfigError("'m_schedule' must not be empty");
        double prev = 0.0;
        for (double m : config.solver.m_schedule) {
            if (m <= prev)
                throw ConfigError("'m_schedule' must be positive and strictly increasing");
            prev = m;
        }
    }
    if (j.contains("y_clamp")) {
        config.solver.y_clamp = get_number(j, "y_clamp");
        if (config.solver.y_clamp < 0.0) throw ConfigError("'y_clamp' must be nonnegative");
    } else {
        // Recompute the default truncation at the configured horizon.
        try {
            config.solver.y_clamp = 1.2 * universal_bound_Y(bound_params(
                                              scenario.drivers.back(), config.horizon));
        } catch (const OverflowError&) {
            config.solver.y_clamp = 0.0;
        }
    }
    if (j.contains("clip_sd")) {
        config.solver.basis.clip_sd = get_number(j, "clip_sd");
        if (config.solver.basis.clip_sd < 0.0) throw ConfigError("'clip_sd' must be nonnegative");
    }
    if (j.contains("z_clamp")) {
        config.solver.z_clamp = get_number(j, "z_clamp");
        if (config.solver.z_clamp < 0.0) throw ConfigError("'z_clamp' must be nonnegative");
    }
    if (j.contains("p_list")) {
        config.p_list = get_number_array(j, "p_list");
        if (config.p_list.empty()) throw ConfigError("'p_list' must not be empty");
        for (double p : config.p_list)
            if (p < 1.0) throw ConfigError("'p_list' entries must be at least 1");
    }
    if (j.contains("bound_rel_tol")) {
        config.bound_rel_tol = get_number(j, "bound_rel_tol");
        if (config.bound_rel_tol < 0.0) throw ConfigError("'bound_rel_tol' must be nonnegative");
    }
    if (j.contains("checks")) {
        const json& v = j.at("checks");
        if (!v.is_array()) throw ConfigError("'checks' must be an array of strings");
        config.checks.clear();
        for (const auto& e : v) {
            if (!e.is_string()) throw ConfigError("'checks' must contain only strings");
            config.checks.push_back(e.get<std::string>());
        }
    }
    if (j.contains("out_dir")) {
        const json& v = j.at("out_dir");
        if (!v.is_string()) throw ConfigError("'out_dir' must be a string");
        config.out_dir = v.get<std::string>();
        if (config.out_dir.empty()) throw ConfigError("'out_dir' must not be empty");
    }
    validate_checks(config.checks, scenario, config.steps);
    return config;
}

std::string rows_to_csv(const std::vector<CheckRow>& rows) {
    std::string out = "check,lhs,rhs,slack,pass\n";
    char buf[512];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%d\n", row.name.c_str(), row.lhs,
                      row.rhs, row.slack, row.pass ? 1 : 0);
        out += buf;
    }
    return out;
}

RunOutcome run_experiment_config(ExperimentConfig config) {
    const Scenario& scenario = config.scenario;
    TimeGrid grid = TimeGrid::uniform(config.horizon, config.steps);
    try {
        (void)grid.node_at(config.start_time);
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("'start_time': ") + e.what());
    }
    StartDatum start{config.start_time, config.x0};
    PathBundle bundle =
        simulate_paths(scenario.model, scenario.marks, grid, start, config.paths, config.seed);

    const DriverSpec& raw = scenario.drivers.front();
    std::optional<DiscreteSolution> sol;
    std::optional<CascadeReport> cascade;
    DriverSpec solved_driver = raw; // the driver actually iterated to the fixed point
    if (raw.globally_lipschitz) {
        auto result = solve_lipschitz_absde(bundle, scenario.model, scenario.marks, raw,
                                            config.solver);
        sol = std::move(result.solution);
    } else {
        auto result = solve_qexp_absde(bundle, scenario.model, scenario.marks, raw, config.solver);
        cascade = std::move(result.cascade);
        sol = std::move(result.solution);
        solved_driver = regularize_driver(raw, scenario.marks, cascade->levels.back().m,
                                          bundle.dim_w());
    }

    NormConfig norm_config;
    norm_config.p_list = config.p_list;
    norm_config.basis = config.solver.basis;
    NormReport norms = estimate_norms(*sol, bundle, scenario.marks, norm_config);

    RunOutcome outcome;
    outcome.y_start = sol->y_start();

    for (const auto& name : config.checks) {
        if (name == "reference") {
            double ref = scenario.reference(bundle);
            outcome.reference = ref;
            CheckRow row;
            row.name = "reference";
            row.lhs = std::abs(outcome.y_start - ref);
            row.rhs = scenario.reference_tol * std::max(1.0, std::abs(ref));
            row.slack = row.rhs - row.lhs;
            row.pass = row.slack >= 0.0;
            outcome.rows.push_back(row);
        } else if (name == "terminal_match") {
            outcome.rows.push_back(terminal_match_check(*sol, bundle, raw));
        } else if (name == "fixed_point_residual") {
            outcome.rows.push_back(fixed_point_residual_check(*sol, bundle, scenario.model,
                                                              scenario.marks, solved_driver,
                                                              config.solver));
        } else if (name == "universal_bounds") {
            auto rows = check_universal_bounds(norms, bound_params(raw, config.horizon),
                                               config.bound_rel_tol);
            outcome.rows.insert(outcome.rows.end(), rows.begin(), rows.end());
        } else if (name == "jump_norm_chain") {
            auto rows = check_jump_norm_lemmas(norms);
            outcome.rows.insert(outcome.rows.end(), rows.begin(), rows.end());
        } else if (name == "doleans") {
            outcome.rows.push_back(doleans_check(*sol, bundle).row);
        } else if (name == "energy") {
            auto rows = energy_check(*sol, bundle, norms.h2_bmo);
            outcome.rows.insert(outcome.rows.end(), rows.begin(), rows.end());
        } else if (name == "compensator_moment") {
            outcome.rows.push_back(compensator_moment_check(*sol, bundle, scenario.marks));
        } else if (name == "stability") {
            auto bump = [](std::span<const double> x) { return std::cos(x[0]); };
            StabilityReport report = stability_experiment(bundle, scenario.model, scenario.marks,
                                                          raw, config.solver, bump);
            outcome.rows.insert(outcome.rows.end(), report.rows.begin(), report.rows.end());
        } else if (name == "comparison") {
            ComparisonReport report =
                comparison_experiment(bundle, scenario.model, scenario.marks, scenario.drivers[0],
                                      scenario.drivers[1], config.solver);
            outcome.rows.push_back(report.row);
        } else if (name == "u_regularity") {
            std::vector<double> times = {grid.t(0), grid.t(config.steps / 4),
                                         grid.t(config.steps / 2)};
            std::vector<std::vector<double>> points;
            for (double off : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
                std::vector<double> p = config.x0;
                p[0] += off;
                points.push_back(std::move(p));
            }
            UTable table = build_u_map(scenario.model, scenario.marks, raw, grid, times, points,
                                       std::min<std::size_t>(config.paths, 4000),
                                       derive_stream_seed(config.seed, 9001), config.solver);
            URegularityConfig ucfg;
            ucfg.alpha = raw.holder_alpha;
            ucfg.rho = raw.growth_rho;
            URegularityReport report = u_regularity_check(table, ucfg);
            outcome.rows.insert(outcome.rows.end(), report.rows.begin(), report.rows.end());
        } else if (name == "z_growth") {
            auto reports = z_growth_check(*sol, bundle, scenario.marks, raw.growth_rho);
            for (const auto& rep : reports) outcome.rows.push_back(rep.row);
        } else if (name == "m_convergence") {
            auto rows = m_convergence_check(*cascade);
            outcome.rows.insert(outcome.rows.end(), rows.begin(), rows.end());
        } else if (name == "structure") {
            std::vector<double> tail_times = {0.0, config.horizon / 2, config.horizon};
            auto probes = make_structure_probes(200, 13, scenario.model.dim_x,
                                                scenario.model.dim_w, scenario.marks.n_marks(),
                                                tail_times, 2.0, 2.0, 2.0, 0.5);
            StructureReport report = check_structure_condition(raw, scenario.marks, probes, 1e-9);
            CheckRow row;
            row.name = "structure_envelope";
            row.lhs = std::max(report.max_upper_violation, report.max_lower_violation);
            row.rhs = 1e-9;
            row.slack = row.rhs - row.lhs;
            row.pass = report.pass;
            outcome.rows.push_back(row);
        } else if (name == "lipschitz_coeffs") {
            LipschitzProbeReport report =
                lipschitz_probe_check(scenario.model, scenario.marks, config.horizon, 3.0, 200, 17);
            CheckRow row;
            row.name = "coefficient_lipschitz";
            row.lhs = std::max({report.max_drift_ratio, report.max_diffusion_ratio,
                                report.max_jump_ratio});
            row.rhs = 1.0 + 1e-9;
            row.slack = row.rhs - row.lhs;
            row.pass = report.pass;
            outcome.rows.push_back(row);
        } else if (name == "moment_bounds") {
            auto shifted = [&](double off) {
                std::vector<double> p = config.x0;
                p[0] += off;
                return p;
            };
            double mid = grid.t(config.steps / 2);
            std::vector<MomentPair> pairs = {
                {{0.0, shifted(0.0)}, {0.0, shifted(1.0)}},
                {{0.0, shifted(2.0)}, {0.0, shifted(3.0)}},
                {{mid, shifted(0.0)}, {mid, shifted(2.0)}},
                {{0.0, shifted(1.0)}, {mid, shifted(1.0)}},
            };
            MomentBoundConfig mc;
            mc.p = 2.0;
            mc.h = std::min(0.1, config.horizon / 4);
            mc.n_paths = std::min<std::size_t>(config.paths, 10000);
            mc.seed = derive_stream_seed(config.seed, 9002);
            auto rows = check_moment_bounds(scenario.model, scenario.marks, grid, pairs, mc);
            std::vector<double> sup_ratios, modulus_ratios, flow_ratios;
            for (const auto& r : rows) {
                sup_ratios.push_back(r.sup_ratio);
                modulus_ratios.push_back(r.modulus_ratio);
                if (r.flow_ratio > 0.0) flow_ratios.push_back(r.flow_ratio);
            }
            outcome.rows.push_back(uniformity_row("moment_sup_uniform", sup_ratios, 10.0));
            outcome.rows.push_back(uniformity_row("moment_modulus_uniform", modulus_ratios, 10.0));
            outcome.rows.push_back(uniformity_row("moment_flow_uniform", flow_ratios, 10.0));
        } else if (name == "replay") {
            double dev = replay_max_deviation(bundle, scenario.model, scenario.marks);
            CheckRow row;
            row.name = "replay_exact";
            row.lhs = dev;
            row.rhs = 0.0;
            row.slack = -dev;
            row.pass = dev == 0.0;
            outcome.rows.push_back(row);
        } else {
            throw ConfigError("unknown check '" + name + "'");
        }
    }

    bool all_pass = true;
    std::vector<std::string> failed;
    for (const auto& row : outcome.rows)
        if (!row.pass) {
            all_pass = false;
            failed.push_back(row.name);
        }
    outcome.exit_code = all_pass ? 0 : 1;

    namespace fs = std::filesystem;
    fs::path dir(config.out_dir);
    fs::create_directories(dir);
    fs::path csv_path = dir / "results.csv";
    {
        std::ofstream out(csv_path);
        if (!out) throw Error("cannot write " + csv_path.string());
        out << rows_to_csv(outcome.rows);
    }
    outcome.csv_path = csv_path.string();

    json man;
    man["scenario"] = config.scenario_name;
    man["seed"] = config.seed;
    man["paths"] = config.paths;
    man["steps"] = config.steps;
    man["horizon"] = config.horizon;
    man["start_time"] = config.start_time;
    man["x0"] = config.x0;
    man["degree"] = config.solver.basis.degree;
    man["ridge"] = config.solver.basis.ridge;
    man["tolerance"] = config.solver.tolerance;
    man["max_iterations"] = config.solver.max_iterations;
    man["window"] = config.solver.window;
    man["m_schedule"] = config.solver.m_schedule;
    man["y_clamp"] = config.solver.y_clamp;
    man["z_clamp"] = config.solver.z_clamp;
    man["clip_sd"] = config.solver.basis.clip_sd;
    man["p_list"] = config.p_list;
    man["bound_rel_tol"] = config.bound_rel_tol;
    man["checks"] = config.checks;
    man["y_start"] = outcome.y_start;
    if (outcome.reference)
        man["reference"] = *outcome.reference;
    else
        man["reference"] = nullptr;
    man["norms"] = {{"s_inf", norms.s_inf},   {"h2_bmo", norms.h2_bmo}, {"j2_b", norms.j2_b},
                    {"j2_bmo", norms.j2_bmo}, {"j_inf", norms.j_inf},   {"n_events", norms.n_events}};
    if (cascade) {
        json levels = json::array();
        for (const auto& level : cascade->levels)
            levels.push_back({{"m", level.m},
                              {"distance_to_previous", level.distance_to_previous}});
        man["cascade"] = levels;
        man["early_stopped"] = cascade->early_stopped;
    } else {
        man["cascade"] = nullptr;
    }
    man["n_checks"] = outcome.rows.size();
    man["n_failed"] = failed.size();
    man["failed"] = failed;

    fs::path man_path = dir / "manifest.json";
    {
        std::ofstream out(man_path);
        if (!out) throw Error("cannot write " + man_path.string());
        out << man.dump(2) << '\n';
    }
    outcome.manifest_path = man_path.string();
    return outcome;
}

RunOutcome run_experiment(const std::string& config_path, const RunOverrides& overrides) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file: " + config_path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    ExperimentConfig config = parse_experiment_config(buffer.str());
    if (overrides.seed) config.seed = *overrides.seed;
    if (overrides.paths) {
        if (*overrides.paths < 2) throw ConfigError("'paths' must be at least 2");
        config.paths = *overrides.paths;
    }
    if (overrides.out_dir) {
        if (overrides.out_dir->empty()) throw ConfigError("'out_dir' must not be empty");
        config.out_dir = *overrides.out_dir;
    }
    if (!overrides.checks.empty()) {
        validate_checks(overrides.checks, config.scenario, config.steps);
        config.checks = overrides.checks;
    }
    return run_experiment_config(std::move(config));
}

std::string list_scenarios_text() {
    std::string out;
    for (const auto& name : scenario_names()) {
        Scenario s = make_scenario(name);
        out += name + "\n  " + s.description + "\n";
        out += "  defaults: horizon " + format_g17(s.default_horizon) + ", steps " +
               std::to_string(s.default_steps) + ", paths " + std::to_string(s.default_paths) +
               (s.has_reference ? ", reference available" : "") + "\n";
        out += "  checks:";
        for (const auto& c : s.recommended_checks) out += " " + c;
        out += "\n";
    }
    return out;
}

} // namespace absde
