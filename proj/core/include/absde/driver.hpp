#pragma once

#include "absde/marks.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace absde {

// Exponential penalty (exp(g u) - 1 - g u) / g for g > 0. Convex, zero at 0;
// the integrand that prices jump exposure in the driver envelope. Throws
// OverflowError when g * u leaves the floating range.
double j_gamma(double gamma_exp, double u);

// Clamp to [-m, m], m > 0. Identity on [-m, m].
double truncate_value(double v, double m);

// Envelope parameters of the driver growth condition:
//   |f| <= l_bar + delta * sup|q| + beta * |y| + (gamma/2)|z|^2 + integral of
//   the exponential penalty of (+/-) psi.
struct StructureParams {
    double l_bar = 0.0;
    double delta = 0.0;
    double beta = 0.0;
    double gamma_exp = 1.0;
};

// Inputs of the universal a priori bounds: everything the bound formulas are
// allowed to see.
struct BoundParamsA {
    double xi_sup = 0.0;
    double l_bar = 0.0;
    double delta = 0.0;
    double beta = 0.0;
    double gamma_exp = 1.0;
    double horizon = 1.0;
};

// Functional of the future solution path (Y_v)_{v in [t, T]} feeding the
// anticipated driver argument.
struct AnticipatedFunctional {
    enum class Kind { None, RunningSupAbs, DeferredValue, PathIntegral, CustomGrid };

    Kind kind = Kind::None;
    double theta = 0.0; // DeferredValue lag
    // CustomGrid: arbitrary functional of the tail values/times.
    std::function<double(std::span<const double> values, std::span<const double> times)> custom;
    double lipschitz = 1.0; // declared constant w.r.t. sup norm of the tail

    static AnticipatedFunctional none();
    static AnticipatedFunctional running_sup_abs();
    static AnticipatedFunctional deferred_value(double theta);
    static AnticipatedFunctional path_integral();
    static AnticipatedFunctional
    custom_grid(std::function<double(std::span<const double>, std::span<const double>)> fn,
                double lipschitz);

    bool anticipated() const { return kind != Kind::None; }

    // Value on one tail: values[j] at times[j], times[0] = current t,
    // times.back() = T. clamp_m > 0 clamps every path value to [-m, m] before
    // the functional is applied (regularized drivers truncate the anticipated
    // path, not the functional value). The path integral is the left Riemann
    // sum accumulated backward from T.
    double evaluate(std::span<const double> values, std::span<const double> times,
                    double clamp_m = 0.0) const;
};

// Arguments of one driver evaluation. psi holds values at the flattened
// quadrature marks of `marks`.
struct DriverArgs {
    double t = 0.0;
    std::span<const double> x;
    double a = 0.0; // anticipated functional estimate
    double y = 0.0;
    std::span<const double> z;
    std::span<const double> psi;
    const MarkMeasureSpec* marks = nullptr;
};

struct AGammaProbe; // below

// Mark-indexed kernel for the jump-monotonicity condition; may depend on the
// probe (mean-value kernels do).
using GammaKernel =
    std::function<double(std::size_t component, double mark, const AGammaProbe& probe)>;

// Complete description of one backward equation: driver, terminal condition,
// growth envelope, anticipated functional, and optional regularity /
// monotonicity declarations.
struct DriverSpec {
    std::function<double(const DriverArgs&)> f;
    std::function<double(std::span<const double> x)> terminal;

    StructureParams structure;
    AnticipatedFunctional functional;
    double xi_sup = 0.0; // declared sup norm of the terminal condition

    bool globally_lipschitz = false;
    std::function<double(double m)> lipschitz_K; // K_M family (may be empty)
    bool monotone_in_q = false;

    // Jump-monotonicity data (optional): f(..,psi) - f(..,psi') bounded by the
    // kernel pairing, with c1 * (1^|e|) <= Gamma(e) <= c2 * (1^|e|), c1 > -1.
    GammaKernel gamma_kernel;
    double gamma_c1 = 0.0;
    double gamma_c2 = 0.0;
    bool has_gamma_kernel = false;

    // Terminal regularity data for solution-map checks: |xi(x)-xi(x')| <=
    // K_xi (1 + |x| + |x'|)^rho |x-x'|^alpha.
    double holder_alpha = 1.0;
    double growth_rho = 0.0;

    // Truncation level of a regularized driver (0 = not regularized). The
    // anticipated-path clamp is applied by the estimator at this level.
    double trunc_level = 0.0;
    // Global bound of a regularized driver (valid when trunc_level > 0).
    double regularized_bound = 0.0;
};

// Truncated driver: every argument of f is clamped to [-m, m] (componentwise
// for z and psi), psi is additionally zeroed at quadrature marks with
// |e| < 1/m, and the anticipated path is clamped pathwise via trunc_level.
// The result is bounded (by regularized_bound, which needs the z dimension)
// and globally Lipschitz; its envelope parameters are unchanged. Transparent
// on solutions already inside [-m, m] whose marks all survive the cutoff.
DriverSpec regularize_driver(const DriverSpec& spec, const MarkMeasureSpec& marks, double m,
                             std::size_t dim_z = 1);

// One probe of the growth envelope: a full argument tuple with an explicit
// future path segment (q_values at q_times).
struct StructureProbe {
    double t = 0.0;
    std::vector<double> x;
    std::vector<double> q_values;
    std::vector<double> q_times;
    double y = 0.0;
    std::vector<double> z;
    std::vector<double> psi;
};

struct StructureReport {
    bool pass = false;
    double max_upper_violation = 0.0; // max over probes of f - upper envelope
    double max_lower_violation = 0.0; // max over probes of lower envelope - f
    std::size_t worst_probe = 0;
    std::size_t n_probes = 0;
};

// Evaluates f on each probe (anticipated argument = functional of the probe's
// q segment) and compares against the two-sided envelope built from
// StructureParams; the envelope uses the raw q segment. tol absorbs rounding.
StructureReport check_structure_condition(const DriverSpec& spec, const MarkMeasureSpec& marks,
                                          std::span<const StructureProbe> probes,
                                          double tol = 1e-12);

// Deterministic probe generator (uniform draws in symmetric boxes).
std::vector<StructureProbe> make_structure_probes(std::size_t n_probes, std::uint64_t seed,
                                                  std::size_t dim_x, std::size_t dim_z,
                                                  std::size_t n_marks,
                                                  std::span<const double> tail_times,
                                                  double q_range, double y_range, double z_range,
                                                  double psi_range);

// Probe for the jump-monotonicity condition: two psi fields, everything else
// shared.
struct AGammaProbe {
    double t = 0.0;
    std::vector<double> x;
    double a = 0.0;
    double y = 0.0;
    std::vector<double> z;
    std::vector<double> psi;
    std::vector<double> psi_prime;
};

struct AGammaReport {
    bool pass = false;
    double max_pairing_violation = 0.0; // f(psi)-f(psi') minus kernel pairing
    double max_kernel_violation = 0.0;  // kernel outside its declared band
    std::size_t n_probes = 0;
};

AGammaReport check_A_gamma(const DriverSpec& spec, const MarkMeasureSpec& marks,
                           std::span<const AGammaProbe> probes, double tol = 1e-12);

} // namespace absde
