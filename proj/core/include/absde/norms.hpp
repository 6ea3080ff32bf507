#pragma once

#include "absde/marks.hpp"
#include "absde/path_bundle.hpp"
#include "absde/regression.hpp"
#include "absde/solver.hpp"

#include <string>
#include <vector>

namespace absde {

// One verified relation: pass iff lhs and rhs stand in the documented order
// with the stated slack (slack = rhs - lhs unless noted).
struct CheckRow {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    double slack = 0.0;
    bool pass = false;
};

struct NormConfig {
    std::vector<double> p_list = {2.0, 4.0};
    RegressionBasis basis{3, 1e-8}; // conditional-tail regressions
};

// Path norms of a discrete solution over the active range [start, horizon].
// BMO-type quantities take the max over grid nodes (and jump events for
// j2_bmo) of fitted conditional tails; j_p uses the realized jump bracket.
struct NormReport {
    // Essential sup of |Y|: max over nodes of the per-node 99.9% quantile
    // over paths. The raw max (s_inf_max) is extrapolation-sensitive at the
    // most extreme simulated states and is reported for diagnosis only.
    double s_inf = 0.0;
    double s_inf_max = 0.0;
    std::vector<double> p_list;
    std::vector<double> s_p; // E[sup |Y|^p]^{1/p}
    std::vector<double> h_p; // E[(sum |Z|^2 dt)^{p/2}]^{1/p}
    std::vector<double> j_p; // E[(sum_events psi^2)^{p/2}]^{1/p}
    double h2_bmo = 0.0; // max fitted conditional tail of sum |Z|^2 dt
    double j2_b = 0.0;   // max fitted conditional tail of the psi compensator
    double j2_bmo = 0.0; // node tails and (event psi^2 + tail after the step)
    double j_inf = 0.0;  // max |psi| over realized jump events
    bool has_jumps = false;
    std::size_t n_events = 0; // realized events at active steps
};

NormReport estimate_norms(const DiscreteSolution& sol, const PathBundle& bundle,
                          const MarkMeasureSpec& marks, const NormConfig& config);

// Two-sided chain between the jump norms: max(j2_b, j_inf^2) <= j2_bmo and
// j2_bmo <= j2_b + j_inf^2. Vacuously tight without jumps.
std::vector<CheckRow> check_jump_norm_lemmas(const NormReport& report, double rel_tol = 1e-12);

struct DoleansReport {
    double mean = 0.0;          // E of the stochastic exponential at the horizon
    double se = 0.0;            // standard error of the mean
    double second_moment = 0.0; // E of its square
    CheckRow row;               // |mean - 1| <= 3 se
};

// Stochastic exponential of the integral of Z against the Brownian increments
// over the active range; its mean is exactly 1 for any fitted Z because each
// factor has unit conditional mean.
DoleansReport doleans_check(const DiscreteSolution& sol, const PathBundle& bundle);

// Energy inequality: E[(sum |Z|^2 dt)^n] <= n! * (h2_bmo)^n per order, within
// rel_tol. h2_bmo should come from estimate_norms on the same solution.
std::vector<CheckRow> energy_check(const DiscreteSolution& sol, const PathBundle& bundle,
                                   double h2_bmo, const std::vector<int>& orders = {1, 2, 3},
                                   double rel_tol = 0.05);

// Compensator identity on the solution's jump exposure: the realized event
// sum of psi^2 and its compensator integral agree in expectation exactly, so
// the paths' mean difference must sit within 3 standard errors of zero.
CheckRow compensator_moment_check(const DiscreteSolution& sol, const PathBundle& bundle,
                                  const MarkMeasureSpec& marks);

} // namespace absde
