#pragma once

#include "absde/driver.hpp"
#include "absde/forward_model.hpp"
#include "absde/marks.hpp"
#include "absde/path_bundle.hpp"
#include "absde/regression.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace absde {

struct SolverConfig {
    RegressionBasis basis;
    double tolerance = 1e-6;      // fixed-point distance target
    std::size_t max_iterations = 50;
    double beta_weight = 0.0;     // exp(beta * t) weight in iteration distances
    double window = 0.0;          // window length for the anticipated fixed point; 0 = full range
    std::vector<double> m_schedule = {2.0, 4.0, 8.0, 16.0};
    // A-priori truncation of fitted value predictions: when positive, every
    // conditional-expectation estimate of the value (and the anticipated
    // argument, and the jump exposure at twice this level) is clamped to
    // [-y_clamp, y_clamp]. The solution itself satisfies such a bound, so a
    // clamp above it cannot bias a convergent scheme; it only stops
    // regression noise from feeding back through a nonlinear driver. 0 = off.
    double y_clamp = 0.0;
    // Componentwise truncation of fitted Z values, for scenarios whose
    // structure supplies a pointwise bound on the true Z (for instance
    // translation-invariant coefficients with a Lipschitz terminal condition
    // give |Z| <= Lip(xi) * sup|sigma| by coupling). Keeps far-tail
    // extrapolation of the Z regressions from passing through quadratic
    // drivers. 0 = off.
    double z_clamp = 0.0;
};

struct IterationTrace {
    std::vector<double> distances; // weighted sup distance per sweep
    bool converged = false;
};

// Discrete solution triple on the bundle's grid. Y lives on nodes; Z and psi
// on steps, indexed by the left node (their horizon rows stay zero). Nodes
// strictly before the start node hold (Y_start, 0, 0) exactly; the start node
// carries the first active step's regression values.
class DiscreteSolution {
public:
    DiscreteSolution(const TimeGrid& grid, std::size_t n_paths, std::size_t dim_w,
                     std::size_t n_marks, std::size_t start_node);

    std::size_t n_nodes() const { return n_nodes_; }
    std::size_t n_paths() const { return n_paths_; }
    std::size_t dim_w() const { return dim_w_; }
    std::size_t n_marks() const { return n_marks_; }
    std::size_t start_node() const { return start_node_; }

    std::span<double> y_row(std::size_t node);
    std::span<const double> y_row(std::size_t node) const;
    ConstMatrixView y_view() const; // (n_nodes x n_paths)

    std::span<double> z_row(std::size_t node);
    ConstMatrixView z_at(std::size_t node) const; // (n_paths x dim_w)

    std::span<double> psi_row(std::size_t node);
    ConstMatrixView psi_at(std::size_t node) const; // (n_paths x n_marks)

    // Solution value at the start node (constant across paths).
    double y_start() const;

    // Markovian map per node (fit that generated the node's Y values; the
    // terminal/window-edge map is a direct fit of the stored values).
    std::vector<std::optional<FitResult>> u_fit;
    // Predictor and anticipated fits per node (diagnostics).
    std::vector<std::optional<FitResult>> yhat_fit;
    std::vector<std::optional<FitResult>> a_fit;

private:
    std::size_t n_nodes_, n_paths_, dim_w_, n_marks_, start_node_;
    std::vector<double> Y_, Z_, psi_;
};

// One explicit dynamic-programming pass over nodes [node_lo, node_hi):
// for i = node_hi-1 .. node_lo, with Y[node_hi] fixed by the caller,
//   a_i   = anticipated estimate from prev_y (tail from node i to horizon),
//   psi_i = jump exposure of the next node's Markovian map,
//   Z_i   = martingale-increment regression of Y_{i+1},
//   yhat  = predictor fit of Y_{i+1} at node i,
//   Y_i   = fit of Y_{i+1} + dt * f(t_i, X_i, a_i, yhat_i, Z_i, psi_i).
// prev_y is a full (n_nodes x n_paths) grid supplying the anticipated
// argument (previous iterate inside the active window, converged values
// beyond it). Writes Y/Z/psi rows in [node_lo, node_hi) and the fits.
void backward_sweep(DiscreteSolution& sol, const PathBundle& bundle, const ForwardModel& model,
                    const MarkMeasureSpec& marks, const DriverSpec& driver,
                    const SolverConfig& config, std::size_t node_lo, std::size_t node_hi,
                    ConstMatrixView prev_y);

struct SolveResult {
    DiscreteSolution solution;
    std::vector<IterationTrace> window_traces; // right-to-left window order
};

// Fixed point for a globally Lipschitz (possibly anticipated) driver: sweeps
// over the whole active range from the zero initial iterate until the
// weighted sup distance between successive iterates drops below tolerance.
// Throws ConvergenceError (with the trace) if max_iterations is hit.
// initial_y: optional starting iterate (full grid), default zero.
SolveResult solve_lipschitz_absde(const PathBundle& bundle, const ForwardModel& model,
                                  const MarkMeasureSpec& marks, const DriverSpec& driver,
                                  const SolverConfig& config,
                                  const std::vector<double>* initial_y = nullptr);

struct CascadeLevel {
    double m = 0.0;
    std::vector<IterationTrace> window_traces;
    // Sup over nodes of the per-node root mean square difference to the
    // previous level's values (0 for the first level).
    double distance_to_previous = 0.0;
};

struct CascadeReport {
    std::vector<CascadeLevel> levels;
    bool early_stopped = false;
};

struct QexpSolveResult {
    DiscreteSolution solution; // largest solved truncation level
    CascadeReport cascade;
};

// Quadratic-exponential solve: for each truncation level m in the schedule,
// solves the regularized driver by the windowed fixed point (window from
// config.window, or the full range when 0), recording sup distances between
// consecutive levels; stops early once consecutive levels differ by less
// than tolerance.
QexpSolveResult solve_qexp_absde(const PathBundle& bundle, const ForwardModel& model,
                                 const MarkMeasureSpec& marks, const DriverSpec& driver,
                                 const SolverConfig& config);

// Largest window length h (starting at the full active range, halving) whose
// first iterates on [T-h, T] contract by a factor <= 0.5. Throws
// ConvergenceError when h falls below two grid steps.
double pick_window(const PathBundle& bundle, const ForwardModel& model,
                   const MarkMeasureSpec& marks, const DriverSpec& driver,
                   const SolverConfig& config);

struct UTable {
    std::vector<double> times;
    std::vector<std::vector<double>> points;
    std::vector<double> values; // times.size() x points.size(), row major
    std::vector<double> se;     // same shape

    double value(std::size_t a, std::size_t b) const { return values[a * points.size() + b]; }
    double stderr_of(std::size_t a, std::size_t b) const { return se[a * points.size() + b]; }
};

// Solution map u(t, x) tabulated by independent solves from each lattice
// point (times must sit on grid nodes). With replicates >= 2 each cell is
// solved that many times on independent streams; the cell value is the
// replicate mean and the standard error covers all solver noise. With
// replicates = 1 the standard error is the start-node residual estimate.
UTable build_u_map(const ForwardModel& model, const MarkMeasureSpec& marks,
                   const DriverSpec& driver, const TimeGrid& grid,
                   const std::vector<double>& times, const std::vector<std::vector<double>>& points,
                   std::size_t n_paths, std::uint64_t seed, const SolverConfig& config,
                   std::size_t replicates = 1);

} // namespace absde
