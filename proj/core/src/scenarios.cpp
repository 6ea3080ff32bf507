#include "absde/scenarios.hpp"

#include "absde/verify.hpp"

#include "absde/errors.hpp"
#include "absde/parallel.hpp"

#include <cmath>
#include <cstddef>

namespace absde {

namespace {

ForwardModel brownian_model() {
    return ForwardModel::scalar([](double, double) { return 0.0; },
                                [](double, double) { return 1.0; }, {}, 1.0);
}

// Deterministic backward recursions on the bundle's grid; these are the exact
// fixed points of the scheme when every regression is exact on constants.
double linear_y_recursion(const PathBundle& bundle) {
    const TimeGrid& g = bundle.grid();
    double y = 1.0;
    for (std::size_t i = g.n_steps(); i-- > bundle.start_node();) y *= 1.0 + g.dt(i);
    return y;
}

double sup_recursion(const PathBundle& bundle, double delta) {
    const TimeGrid& g = bundle.grid();
    double y = 1.0;
    for (std::size_t i = g.n_steps(); i-- > bundle.start_node();) y /= 1.0 - delta * g.dt(i);
    return y;
}

double deferred_recursion(const PathBundle& bundle, double theta) {
    const TimeGrid& g = bundle.grid();
    const std::size_t n = g.n_nodes();
    std::vector<double> y(n, 0.0);
    y[n - 1] = 1.0;
    for (std::size_t i = n - 1; i-- > bundle.start_node();) {
        // Nearest tail node to t_i + theta, first best on ties (same rule as
        // the deferred-value functional).
        const double target = g.t(i) + theta;
        std::size_t best = i;
        double best_gap = std::abs(g.t(i) - target);
        for (std::size_t j = i + 1; j < n; ++j) {
            const double gap = std::abs(g.t(j) - target);
            if (gap < best_gap) {
                best_gap = gap;
                best = j;
            }
        }
        y[i] = y[i + 1] + g.dt(i) * y[best];
    }
    return y[bundle.start_node()];
}

Scenario zero_scenario() {
    Scenario s;
    s.name = "zero";
    s.description = "Driverless conditional expectation of a smooth bounded terminal condition; "
                    "the solution map has a closed form for calibration.";
    s.model = brownian_model();
    s.marks = MarkMeasureSpec::none();

    DriverSpec d;
    d.f = [](const DriverArgs&) { return 0.0; };
    d.terminal = [](std::span<const double> x) { return std::sin(x[0]); };
    d.structure = {0.0, 0.0, 0.0, 1.0};
    d.functional = AnticipatedFunctional::none();
    d.xi_sup = 1.0;
    d.globally_lipschitz = true;
    d.lipschitz_K = [](double) { return 0.0; };
    d.holder_alpha = 1.0;
    d.growth_rho = 0.0;
    s.drivers.push_back(std::move(d));

    s.default_start = {0.0, {1.0}};
    s.default_horizon = 1.0;
    s.default_steps = 50;
    s.default_paths = 20000;
    s.default_config.basis.degree = 5;
    s.recommended_checks = {"reference",    "terminal_match", "fixed_point_residual",
                            "universal_bounds", "doleans",    "energy",
                            "stability",    "u_regularity",   "z_growth",
                            "replay",       "structure",      "lipschitz_coeffs",
                            "moment_bounds"};

    s.has_reference = true;
    s.reference_tol = 0.03; // polynomial-projection allowance for a non-polynomial map
    s.reference = [](const PathBundle& b) {
        const double tau = b.grid().horizon() - b.start_time();
        return std::sin(b.x0()[0]) * std::exp(-0.5 * tau);
    };
    return s;
}

Scenario entropic_scenario() {
    Scenario s;
    s.name = "entropic";
    s.description = "Quadratic-exponential driver whose solution is an exponential-moment "
                    "transform of the terminal condition; two jump atoms exercise the "
                    "truncation cascade and the jump norms.";
    const double gamma = 1.0;
    s.model = ForwardModel::scalar([](double, double) { return 0.0; },
                                   [](double, double) { return 1.0; },
                                   [](double, double, double e) { return e; }, 1.0);
    s.marks = MarkMeasureSpec::discrete({{{0.4, 0.6}, {1.0, 0.4}}});

    DriverSpec d;
    d.f = [gamma](const DriverArgs& a) {
        double zz = 0.0;
        for (double z : a.z) zz += z * z;
        double jump = 0.0;
        if (a.marks) {
            const auto& quad = a.marks->quadrature();
            for (std::size_t q = 0; q < quad.size(); ++q)
                jump += quad[q].weight * j_gamma(gamma, a.psi[q]);
        }
        return 0.5 * gamma * zz + jump;
    };
    d.terminal = [](std::span<const double> x) { return std::sin(x[0]); };
    d.structure = {0.0, 0.0, 0.0, gamma};
    d.functional = AnticipatedFunctional::none();
    d.xi_sup = 1.0;
    d.globally_lipschitz = false;
    d.holder_alpha = 1.0;
    d.growth_rho = 0.0;
    s.drivers.push_back(std::move(d));

    s.default_start = {0.0, {0.0}};
    s.default_horizon = 1.0;
    s.default_steps = 100;
    s.default_paths = 50000;
    s.default_config.basis.degree = 5;
    s.default_config.window = 0.25;
    s.default_config.m_schedule = {2.0, 4.0, 8.0, 16.0};
    // Translation-invariant coefficients and a 1-Lipschitz terminal condition
    // give |Z| <= 1 by coupling; factor-2 headroom for discretization.
    s.default_config.z_clamp = 2.0;
    s.recommended_checks = {"reference",       "terminal_match",    "fixed_point_residual",
                            "universal_bounds", "jump_norm_chain",  "doleans",
                            "energy",          "m_convergence",     "z_growth",
                            "replay",          "structure",         "lipschitz_coeffs",
                            "compensator_moment"};

    s.has_reference = true;
    s.reference_tol = 0.02;
    s.reference = [gamma](const PathBundle& b) {
        const std::size_t last = b.grid().n_nodes() - 1;
        ConstMatrixView xs = b.states(last);
        const double mean = blocked_sum(b.n_paths(),
                                        [&](std::size_t p) {
                                            return std::exp(gamma * std::sin(xs.at(p, 0)));
                                        }) /
                            static_cast<double>(b.n_paths());
        return std::log(mean) / gamma;
    };
    return s;
}

Scenario linear_y_scenario() {
    Scenario s;
    s.name = "linear_y";
    s.description = "Driver linear in the value argument with unit terminal condition; the "
                    "solution is deterministic with an exact product recursion.";
    s.model = brownian_model();
    s.marks = MarkMeasureSpec::none();

    DriverSpec d;
    d.f = [](const DriverArgs& a) { return a.y; };
    d.terminal = [](std::span<const double>) { return 1.0; };
    d.structure = {0.0, 0.0, 1.0, 1.0};
    d.functional = AnticipatedFunctional::none();
    d.xi_sup = 1.0;
    d.globally_lipschitz = true;
    d.lipschitz_K = [](double) { return 1.0; };
    s.drivers.push_back(std::move(d));

    s.default_start = {0.0, {0.0}};
    s.default_horizon = 1.0;
    s.default_steps = 100;
    s.default_paths = 20000;
    s.default_config.basis.degree = 3;
    s.recommended_checks = {"reference", "terminal_match", "fixed_point_residual",
                            "universal_bounds", "stability", "replay", "structure"};

    s.has_reference = true;
    s.reference_tol = 1e-4;
    s.reference = &linear_y_recursion;
    return s;
}

Scenario anticipated_sup_scenario() {
    Scenario s;
    const double delta = 0.5;
    s.name = "anticipated_sup";
    s.description = "Driver fed by the running sup of the future solution path with unit "
                    "terminal condition; the fixed point is deterministic with an exact "
                    "backward recursion.";
    s.model = brownian_model();
    s.marks = MarkMeasureSpec::none();

    DriverSpec d;
    d.f = [delta](const DriverArgs& a) { return delta * a.a; };
    d.terminal = [](std::span<const double>) { return 1.0; };
    d.structure = {0.0, delta, 0.0, 1.0};
    d.functional = AnticipatedFunctional::running_sup_abs();
    d.xi_sup = 1.0;
    d.globally_lipschitz = true;
    d.lipschitz_K = [delta](double) { return delta; };
    d.monotone_in_q = true;
    s.drivers.push_back(std::move(d));

    s.default_start = {0.0, {0.0}};
    s.default_horizon = 1.0;
    s.default_steps = 100;
    s.default_paths = 20000;
    s.default_config.basis.degree = 3;
    s.recommended_checks = {"reference", "terminal_match", "fixed_point_residual",
                            "universal_bounds", "replay", "structure"};

    s.has_reference = true;
    s.reference_tol = 1e-3;
    s.reference = [delta](const PathBundle& b) { return sup_recursion(b, delta); };
    return s;
}

Scenario deferred_value_scenario() {
    Scenario s;
    const double theta = 0.5;
    s.name = "deferred_value";
    s.description = "Driver equal to the solution value a fixed lag ahead (clipped at the "
                    "horizon) with unit terminal condition; piecewise-polynomial solution "
                    "with an exact backward recursion.";
    s.model = brownian_model();
    s.marks = MarkMeasureSpec::none();

    DriverSpec d;
    d.f = [](const DriverArgs& a) { return a.a; };
    d.terminal = [](std::span<const double>) { return 1.0; };
    d.structure = {0.0, 1.0, 0.0, 1.0};
    d.functional = AnticipatedFunctional::deferred_value(theta);
    d.xi_sup = 1.0;
    d.globally_lipschitz = true;
    d.lipschitz_K = [](double) { return 1.0; };
    d.monotone_in_q = true;
    s.drivers.push_back(std::move(d));

    s.default_start = {0.0, {0.0}};
    s.default_horizon = 1.0;
    s.default_steps = 100;
    s.default_paths = 20000;
    s.default_config.basis.degree = 3;
    s.recommended_checks = {"reference", "terminal_match", "fixed_point_residual",
                            "universal_bounds", "replay", "structure"};

    s.has_reference = true;
    s.reference_tol = 1e-3;
    s.reference = [theta](const PathBundle& b) { return deferred_recursion(b, theta); };
    return s;
}

Scenario comparison_pair_scenario() {
    Scenario s;
    const double delta = 0.25;
    s.name = "comparison_pair";
    s.description = "Two anticipated drivers ordered pointwise (the second adds a positive "
                    "constant) with a common nonnegative terminal condition; their solutions "
                    "must be ordered pathwise.";
    s.model = brownian_model();
    s.marks = MarkMeasureSpec::none();

    auto terminal = [](std::span<const double> x) { return 0.5 * (1.0 + std::sin(x[0])); };

    DriverSpec lower;
    lower.f = [delta](const DriverArgs& a) { return delta * a.a; };
    lower.terminal = terminal;
    lower.structure = {0.0, delta, 0.0, 1.0};
    lower.functional = AnticipatedFunctional::running_sup_abs();
    lower.xi_sup = 1.0;
    lower.globally_lipschitz = true;
    lower.lipschitz_K = [delta](double) { return delta; };
    lower.monotone_in_q = true;

    DriverSpec upper = lower;
    upper.f = [delta](const DriverArgs& a) { return delta * a.a + 0.5; };
    upper.structure = {0.5, delta, 0.0, 1.0};

    s.drivers.push_back(std::move(lower));
    s.drivers.push_back(std::move(upper));

    s.default_start = {0.0, {0.0}};
    s.default_horizon = 1.0;
    s.default_steps = 50;
    s.default_paths = 20000;
    s.default_config.basis.degree = 4;
    s.recommended_checks = {"comparison", "terminal_match", "universal_bounds", "replay",
                            "structure"};
    return s;
}

} // namespace

const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names = {"zero",           "entropic",
                                                   "linear_y",       "anticipated_sup",
                                                   "deferred_value", "comparison_pair"};
    return names;
}

namespace {

// Default a-priori truncation: 20% above the universal value bound of the
// widest driver. A correct solve never touches the clamp (the solution obeys
// the bound itself); it only blocks regression-noise feedback through
// nonlinear drivers.
void apply_default_clamp(Scenario& s) {
    try {
        s.default_config.y_clamp =
            1.2 * universal_bound_Y(bound_params(s.drivers.back(), s.default_horizon));
    } catch (const OverflowError&) {
        s.default_config.y_clamp = 0.0;
    }
    // Localize every regression to the 3-sd bulk of its sample: predictions
    // at states the sample cannot support (jump-displaced outliers, far
    // tails) take the fitted value at the bulk edge instead of a polynomial
    // extrapolation.
    s.default_config.basis.clip_sd = 3.0;
}

} // namespace

Scenario make_scenario(const std::string& name) {
    Scenario s;
    if (name == "zero")
        s = zero_scenario();
    else if (name == "entropic")
        s = entropic_scenario();
    else if (name == "linear_y")
        s = linear_y_scenario();
    else if (name == "anticipated_sup")
        s = anticipated_sup_scenario();
    else if (name == "deferred_value")
        s = deferred_value_scenario();
    else if (name == "comparison_pair")
        s = comparison_pair_scenario();
    else
        throw InvalidArgument("unknown scenario '" + name + "'");
    apply_default_clamp(s);
    return s;
}

} // namespace absde
