#pragma once

#include "absde/driver.hpp"
#include "absde/norms.hpp"
#include "absde/solver.hpp"

#include <functional>
#include <vector>

namespace absde {

// Sup-norm bound on Y from the envelope parameters alone:
//   exp(T (beta + delta e^{beta T})) (xi_sup + T l_bar).
// Throws OverflowError when the exponent leaves the floating range.
double universal_bound_Y(const BoundParamsA& params);

struct ZPsiBounds {
    double z_sq = 0.0;    // bound on the BMO norm of sum |Z|^2 dt
    double psi_sq = 0.0;  // bound on the BMO norm of the jump bracket
    double psi_inf = 0.0; // bound on the sup jump size: 2 y_sup
};

// Bounds on the martingale parts given a sup bound on Y:
//   z_sq   = e^{4 g y} / g^2 * (1 + 2 g T (l_bar + (beta + delta) y)),
//   psi_sq = e^{4 g y} / g^2 * (2 + 4 g T (l_bar + (beta + delta) y)) + 4 y^2.
ZPsiBounds universal_bound_Z_psi(const BoundParamsA& params, double y_sup);

// Envelope parameters of a driver spec at a given horizon.
BoundParamsA bound_params(const DriverSpec& driver, double horizon);

// Estimated norms against the universal bounds; a row passes when
// rhs - lhs >= -rel_tol * max(|rhs|, 1) (the relative allowance absorbs the
// time-discretization overshoot of the estimators). Rows: y_sup_bound,
// z_bmo_bound, psi_bmo_bound, psi_sup_vs_y (j_inf <= 2 s_inf).
std::vector<CheckRow> check_universal_bounds(const NormReport& norms, const BoundParamsA& params,
                                             double rel_tol = 1e-2);

struct StabilityConfig {
    std::vector<double> eps_list = {0.01, 0.02, 0.04};
    double slope_lo = 0.85;
    double slope_hi = 1.15;
};

struct StabilityReport {
    std::vector<double> eps_list;
    std::vector<double> distances; // sup over nodes of sqrt(mean dY^2) per eps
    double slope = 0.0;            // log-log slope of distance vs eps
    double zero_distance = 0.0;    // rerun with eps = 0: must be exactly 0
    std::vector<CheckRow> rows;    // stability_slope, stability_zero
};

// Terminal-condition stability on a shared bundle: solves the driver as given
// and with terminal + eps * bump for each eps, measures the solution
// distance, and fits the log-log slope (expected 1 for Lipschitz stability).
// The eps = 0 rerun must reproduce the base solution bit for bit.
StabilityReport stability_experiment(const PathBundle& bundle, const ForwardModel& model,
                                     const MarkMeasureSpec& marks, const DriverSpec& driver,
                                     const SolverConfig& config,
                                     const std::function<double(std::span<const double>)>& bump,
                                     const StabilityConfig& stability = {});

struct ComparisonReport {
    double max_violation = 0.0; // max over nodes and paths of Y_lower - Y_upper
    double scale = 0.0;         // sup |Y_upper|
    CheckRow row;               // violation <= floor_rel * max(1, scale)
};

// Pathwise comparison of two ordered equations (terminal and driver of
// `lower` pointwise below `upper`) solved on one bundle.
ComparisonReport comparison_experiment(const PathBundle& bundle, const ForwardModel& model,
                                       const MarkMeasureSpec& marks, const DriverSpec& lower,
                                       const DriverSpec& upper, const SolverConfig& config,
                                       double floor_rel = 1e-3);

struct URegularityConfig {
    double alpha = 1.0;          // spatial exponent of the declared modulus
    double rho = 0.0;            // growth exponent
    double ratio_ceiling = 10.0; // max/median ceiling for space ratios
};

struct URegularityReport {
    double max_space_ratio = 0.0;
    double median_space_ratio = 0.0;
    double time_exponent = 0.0;
    std::size_t time_pairs_used = 0;
    std::vector<CheckRow> rows; // u_space_ratio, u_time_exponent
};

// Regularity of a tabulated solution map: spatial difference ratios
// |du| / ((1 + max |x|^rho) |dx|^alpha) must be comparable across the lattice
// (max <= ceiling * median), and time differences resolvable above the
// tabulation noise must scale with a positive exponent.
URegularityReport u_regularity_check(const UTable& table, const URegularityConfig& config);

struct GrowthReport {
    double max_ratio = 0.0;
    double p90_ratio = 0.0;
    double p999_ratio = 0.0;
    CheckRow row; // p999 <= headroom * p90
};

// Growth of the martingale coefficients in the state: ratios
// |Z| / (1 + |x|^{1+rho}) (and the L2(nu) norm of psi likewise) collected over
// all active steps and paths must have no runaway tail. Returns the Z report
// and, when marks are present, the psi report.
std::vector<GrowthReport> z_growth_check(const DiscreteSolution& sol, const PathBundle& bundle,
                                         const MarkMeasureSpec& marks, double rho = 0.0,
                                         double headroom = 2.0);

// Truncation-cascade convergence: consecutive-level distances nonincreasing
// while the cascade is still converging (pairs whose earlier distance is
// already below threshold are skipped: there the truncation no longer bites
// and distances sit at estimator noise, where ordering is meaningless) and
// the last distance below threshold. Fewer than two levels passes vacuously.
// Rows: m_cascade_monotone, m_cascade_final.
std::vector<CheckRow> m_convergence_check(const CascadeReport& cascade, double threshold = 1e-2,
                                          double slack = 1e-3);

// Terminal condition reproduced exactly at the horizon node.
CheckRow terminal_match_check(const DiscreteSolution& sol, const PathBundle& bundle,
                              const DriverSpec& driver);

// One extra full-range sweep from the converged solution must move it by at
// most the fixed-point tolerance. `driver` must be the driver actually solved
// (for quadratic-exponential solves: the last regularized level).
CheckRow fixed_point_residual_check(const DiscreteSolution& sol, const PathBundle& bundle,
                                    const ForwardModel& model, const MarkMeasureSpec& marks,
                                    const DriverSpec& driver, const SolverConfig& config);

} // namespace absde
