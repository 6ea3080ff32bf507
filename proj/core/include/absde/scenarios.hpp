#pragma once

#include "absde/driver.hpp"
#include "absde/forward_model.hpp"
#include "absde/marks.hpp"
#include "absde/simulate.hpp"
#include "absde/solver.hpp"

#include <functional>
#include <string>
#include <vector>

namespace absde {

// Named, fully wired experiment: forward model, mark measure, driver(s),
// defaults, and the checks that are meaningful for it. Comparison pairs carry
// two drivers ordered pointwise (drivers[0].f <= drivers[1].f).
struct Scenario {
    std::string name;
    std::string description;
    ForwardModel model;
    MarkMeasureSpec marks;
    std::vector<DriverSpec> drivers;
    StartDatum default_start;
    double default_horizon = 1.0;
    std::size_t default_steps = 100;
    std::size_t default_paths = 20000;
    SolverConfig default_config;
    std::vector<std::string> recommended_checks;

    // Independent start-value reference where one exists: closed form, the
    // scheme's own deterministic recursion, or an exponential-moment Monte
    // Carlo estimate on the same bundle. Pass band is
    // |y_start - ref| <= reference_tol * max(1, |ref|).
    bool has_reference = false;
    double reference_tol = 0.0;
    std::function<double(const PathBundle&)> reference;
};

// Names in registry order.
const std::vector<std::string>& scenario_names();

// Builds a registered scenario; throws InvalidArgument for unknown names.
Scenario make_scenario(const std::string& name);

} // namespace absde
