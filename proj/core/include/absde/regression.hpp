#pragma once

#include "absde/driver.hpp"
#include "absde/forward_model.hpp"
#include "absde/marks.hpp"
#include "absde/path_bundle.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace absde {

// Polynomial regression basis: all monomials of the standardized state up to
// `degree` total degree. ridge is relative to the sample-normalized Gram
// matrix (features are O(1) after standardization).
struct RegressionBasis {
    std::size_t degree = 3;
    double ridge = 1e-8;
    // State-space localization: when positive, standardized coordinates are
    // clamped to [-clip_sd, clip_sd] before monomials are formed, at both fit
    // and prediction time. The fit is then an exact least-squares projection
    // onto the clipped-feature basis, and every prediction (including ones at
    // jump-shifted or otherwise extrapolated states) is bounded by the fitted
    // function's range over the sample bulk. 0 = off.
    double clip_sd = 0.0;

    std::size_t n_features(std::size_t dim_x) const;
};

// One fitted conditional expectation x -> E[target | X = x].
struct FitResult {
    std::size_t dim_x = 0;
    std::size_t degree = 0;
    std::vector<double> coeffs;        // per monomial, graded-lex order
    std::vector<double> shift, scale;  // standardization per state dimension
    double clip = 0.0;                 // localization box in standardized units (0 = off)
    double residual_rms = 0.0;
    double cond = 0.0;                 // eigenvalue ratio of the regularized Gram
    bool constant_fit = false;         // degenerate states: plain mean

    double predict(std::span<const double> x) const;
};

// Least-squares projection of targets on the basis at the given states.
// Deterministic for any thread count (fixed-order blocked assembly).
// Degenerate states (all rows identical) yield the exact sample mean. With
// ridge = 0 an ill-conditioned system throws RegressionError advising
// ridge > 0.
FitResult fit_conditional(ConstMatrixView states, std::span<const double> targets,
                          const RegressionBasis& basis);

// fit.predict for every row of states.
void predict_all(const FitResult& fit, ConstMatrixView states, std::span<double> out);

// Backward accumulator producing, for each path, the anticipated functional
// of the tail (Y_v)_{v >= t_i} while a sweep walks i = N..0. push_node must be
// called once per node in decreasing order starting at the horizon. raw(p) is
// then the functional value for the tail starting at the last pushed node.
// Values match AnticipatedFunctional::evaluate on the same tail bit for bit.
class AnticipatedAccumulator {
public:
    AnticipatedAccumulator(const AnticipatedFunctional& functional, ConstMatrixView y_nodes,
                           std::span<const double> node_times, double clamp_m);

    void push_node(std::size_t node);
    std::size_t current_node() const { return current_; }
    double raw(std::size_t path) const;

private:
    const AnticipatedFunctional& functional_;
    ConstMatrixView y_;               // (n_nodes x n_paths)
    std::span<const double> times_;
    double clamp_;
    std::size_t current_;
    bool started_ = false;
    std::vector<double> acc_;         // running sup / backward integral
};

struct AnticipatedEstimate {
    std::vector<double> raw;    // per-path functional of the tail
    std::vector<double> fitted; // conditional estimate per path
    FitResult fit;
};

// Raw functional of (Y_v)_{v >= t_node} per path, projected on the basis at
// the node's states. y_nodes is the full (n_nodes x n_paths) value grid;
// node_times are its times. clamp_m > 0 clamps path values first.
AnticipatedEstimate estimate_anticipated(ConstMatrixView y_nodes, std::span<const double> node_times,
                                         std::size_t node, const AnticipatedFunctional& functional,
                                         ConstMatrixView states, const RegressionBasis& basis,
                                         double clamp_m = 0.0);

struct ZExtraction {
    std::vector<double> values; // (n_paths x dim_w) row major
    std::vector<FitResult> fits; // one per Brownian component
};

// Martingale-increment regression: component j of Z at the step's left node
// is the projection of y_next * dw_j / dt on the basis. When `center` is
// given, the target is (y_next - center(x)) * dw_j / dt instead; the increment
// has zero conditional mean, so the projection is unchanged while the
// O(1/dt) variance of the raw product collapses to O(1).
ZExtraction extract_Z(std::span<const double> y_next, ConstMatrixView dw, double dt,
                      ConstMatrixView states, const RegressionBasis& basis,
                      const FitResult* center = nullptr);

// Jump exposure at the step's left node: psi(p, q) = u(x_p + jump(t, x_p, e_q))
// - u(x_p) for each flattened quadrature mark, with u the fitted map of the
// next node. Output is (n_paths x n_marks) row major.
std::vector<double> extract_psi(const FitResult& u_next, ConstMatrixView states,
                                const ForwardModel& model, const MarkMeasureSpec& marks, double t);

} // namespace absde
