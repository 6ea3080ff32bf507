#include "absde/solver.hpp"

#include "absde/errors.hpp"
#include "absde/parallel.hpp"
#include "absde/rng.hpp"
#include "absde/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

namespace absde {

DiscreteSolution::DiscreteSolution(const TimeGrid& grid, std::size_t n_paths, std::size_t dim_w,
                                   std::size_t n_marks, std::size_t start_node)
    : u_fit(grid.n_nodes()), yhat_fit(grid.n_nodes()), a_fit(grid.n_nodes()),
      n_nodes_(grid.n_nodes()), n_paths_(n_paths), dim_w_(dim_w), n_marks_(n_marks),
      start_node_(start_node), Y_(grid.n_nodes() * n_paths, 0.0),
      Z_(grid.n_nodes() * n_paths * dim_w, 0.0), psi_(grid.n_nodes() * n_paths * n_marks, 0.0) {
    if (n_paths_ == 0) throw InvalidArgument("DiscreteSolution: n_paths must be positive");
    if (dim_w_ == 0) throw InvalidArgument("DiscreteSolution: dim_w must be positive");
    if (start_node_ + 1 >= n_nodes_)
        throw InvalidArgument("DiscreteSolution: start node must precede the horizon node");
}

std::span<double> DiscreteSolution::y_row(std::size_t node) {
    return {Y_.data() + node * n_paths_, n_paths_};
}

std::span<const double> DiscreteSolution::y_row(std::size_t node) const {
    return {Y_.data() + node * n_paths_, n_paths_};
}

ConstMatrixView DiscreteSolution::y_view() const { return {Y_.data(), n_nodes_, n_paths_}; }

std::span<double> DiscreteSolution::z_row(std::size_t node) {
    return {Z_.data() + node * n_paths_ * dim_w_, n_paths_ * dim_w_};
}

ConstMatrixView DiscreteSolution::z_at(std::size_t node) const {
    return {Z_.data() + node * n_paths_ * dim_w_, n_paths_, dim_w_};
}

std::span<double> DiscreteSolution::psi_row(std::size_t node) {
    return {psi_.data() + node * n_paths_ * n_marks_, n_paths_ * n_marks_};
}

ConstMatrixView DiscreteSolution::psi_at(std::size_t node) const {
    return {psi_.data() + node * n_paths_ * n_marks_, n_paths_, n_marks_};
}

double DiscreteSolution::y_start() const { return Y_[start_node_ * n_paths_]; }

namespace {

// Runs fn over path blocks, forwarding the first exception out of the pool
// (worker threads must not throw through parallel_for_blocks).
void guarded_parallel(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    std::mutex mtx;
    std::exception_ptr err;
    parallel_for_blocks(n, [&](std::size_t begin, std::size_t end) {
        try {
            fn(begin, end);
        } catch (...) {
            std::lock_guard<std::mutex> lock(mtx);
            if (!err) err = std::current_exception();
        }
    });
    if (err) std::rethrow_exception(err);
}

void set_terminal_values(DiscreteSolution& sol, const PathBundle& bundle,
                         const DriverSpec& driver) {
    if (!driver.terminal) throw InvalidArgument("solver: driver.terminal must be set");
    const std::size_t horizon_node = sol.n_nodes() - 1;
    ConstMatrixView xs = bundle.states(horizon_node);
    std::span<double> out = sol.y_row(horizon_node);
    guarded_parallel(bundle.n_paths(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
            const double v = driver.terminal(xs.row(p));
            if (!std::isfinite(v))
                throw ModelEvalError("terminal condition produced a non-finite value at path " +
                                     std::to_string(p));
            out[p] = v;
        }
    });
}

double weighted_sup_distance(const DiscreteSolution& sol, const std::vector<double>& prev,
                             std::size_t node_lo, std::size_t node_hi, double beta_weight,
                             const TimeGrid& grid) {
    const std::size_t n_paths = sol.n_paths();
    double dist = 0.0;
    for (std::size_t i = node_lo; i < node_hi; ++i) {
        std::span<const double> ys = std::as_const(sol).y_row(i);
        const double* pv = prev.data() + i * n_paths;
        const double row_max =
            parallel_max(n_paths, [&](std::size_t p) { return std::abs(ys[p] - pv[p]); });
        const double w = beta_weight == 0.0 ? 1.0 : std::exp(beta_weight * grid.t(i));
        dist = std::max(dist, w * row_max);
    }
    return dist;
}

// Truncation-level distance: sup over nodes of the per-node root mean square
// difference. Robust to single-path regression-tail artifacts, unlike a sup
// over all paths, while still dominating the start-value difference.
double l2_distance_to_grid(const DiscreteSolution& sol, const std::vector<double>& other,
                           std::size_t node_lo, std::size_t node_hi_incl) {
    const std::size_t n_paths = sol.n_paths();
    double worst = 0.0;
    for (std::size_t i = node_lo; i <= node_hi_incl; ++i) {
        std::span<const double> ys = std::as_const(sol).y_row(i);
        const double* pv = other.data() + i * n_paths;
        const double ss = blocked_sum(n_paths, [&](std::size_t p) {
            const double d = ys[p] - pv[p];
            return d * d;
        });
        worst = std::max(worst, std::sqrt(ss / static_cast<double>(n_paths)));
    }
    return worst;
}

// Windows covering [start, horizon] right to left, edges snapped to nodes,
// at least one step each. window <= 0 gives the single full span.
std::vector<std::pair<std::size_t, std::size_t>> window_spans(const TimeGrid& grid,
                                                              std::size_t start_node,
                                                              double window) {
    const std::size_t horizon_node = grid.n_nodes() - 1;
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    if (window <= 0.0) {
        spans.emplace_back(start_node, horizon_node);
        return spans;
    }
    const double snap = 1e-9 * std::max(grid.horizon(), 1.0);
    std::size_t hi = horizon_node;
    while (hi > start_node) {
        const double target = grid.t(hi) - window;
        std::size_t lo = hi - 1;
        while (lo > start_node && grid.t(lo) > target + snap) --lo;
        spans.emplace_back(lo, hi);
        hi = lo;
    }
    return spans;
}

// Fixed-point iteration on one window. prev is the full-grid buffer holding
// the previous iterate; it is (re)initialized here: zero inside the window
// (or the caller's initial grid), current solution values elsewhere.
IterationTrace iterate_window(DiscreteSolution& sol, std::vector<double>& prev,
                              const PathBundle& bundle, const ForwardModel& model,
                              const MarkMeasureSpec& marks, const DriverSpec& driver,
                              const SolverConfig& config, std::size_t node_lo, std::size_t node_hi,
                              const std::vector<double>* initial,
                              std::size_t max_iterations_override) {
    const std::size_t n_paths = sol.n_paths();
    const std::size_t n_nodes = sol.n_nodes();
    const double* sol_y = sol.y_view().data;
    if (initial) {
        if (initial->size() != n_nodes * n_paths)
            throw InvalidArgument("solver: initial iterate must be a full (n_nodes x n_paths) grid");
        prev = *initial;
    } else {
        prev.assign(sol_y, sol_y + n_nodes * n_paths);
        std::fill(prev.begin() + static_cast<std::ptrdiff_t>(node_lo * n_paths),
                  prev.begin() + static_cast<std::ptrdiff_t>(node_hi * n_paths), 0.0);
    }
    const ConstMatrixView prev_view{prev.data(), n_nodes, n_paths};

    IterationTrace trace;
    const std::size_t max_iterations =
        max_iterations_override > 0 ? max_iterations_override : config.max_iterations;
    if (max_iterations == 0) throw InvalidArgument("solver: max_iterations must be positive");
    for (std::size_t it = 0; it < max_iterations; ++it) {
        backward_sweep(sol, bundle, model, marks, driver, config, node_lo, node_hi, prev_view);
        const double dist =
            weighted_sup_distance(sol, prev, node_lo, node_hi, config.beta_weight, bundle.grid());
        trace.distances.push_back(dist);
        if (dist < config.tolerance) {
            trace.converged = true;
            break;
        }
        // The new iterate (window and tail) becomes the previous iterate.
        std::memcpy(prev.data() + node_lo * n_paths, sol_y + node_lo * n_paths,
                    sizeof(double) * (n_nodes - node_lo) * n_paths);
    }
    return trace;
}

void fill_frozen_prefix(DiscreteSolution& sol) {
    const std::size_t n_paths = sol.n_paths();
    std::span<const double> start_row = std::as_const(sol).y_row(sol.start_node());
    for (std::size_t i = 0; i < sol.start_node(); ++i)
        std::memcpy(sol.y_row(i).data(), start_row.data(), sizeof(double) * n_paths);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

// Elementwise truncation at +/- bound; bound <= 0 disables.
void clamp_values(std::span<double> values, double bound) {
    if (!(bound > 0.0)) return;
    parallel_for_blocks(values.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p)
            values[p] = std::clamp(values[p], -bound, bound);
    });
}

void clamp_values(std::vector<double>& values, double bound) {
    clamp_values(std::span<double>(values), bound);
}

// Range bound of the anticipated argument implied by a value bound.
double anticipated_clamp(const AnticipatedFunctional& functional, double y_clamp,
                         double horizon) {
    if (!(y_clamp > 0.0)) return 0.0;
    switch (functional.kind) {
    case AnticipatedFunctional::Kind::RunningSupAbs:
    case AnticipatedFunctional::Kind::DeferredValue: return y_clamp;
    case AnticipatedFunctional::Kind::PathIntegral: return horizon * y_clamp;
    default: return 0.0; // custom functionals carry no generic range bound
    }
}

} // namespace

void backward_sweep(DiscreteSolution& sol, const PathBundle& bundle, const ForwardModel& model,
                    const MarkMeasureSpec& marks, const DriverSpec& driver,
                    const SolverConfig& config, std::size_t node_lo, std::size_t node_hi,
                    ConstMatrixView prev_y) {
    const TimeGrid& grid = bundle.grid();
    const std::size_t n_paths = bundle.n_paths();
    const std::size_t dim_w = bundle.dim_w();
    const std::size_t n_marks = marks.n_marks();
    const std::size_t horizon_node = grid.n_nodes() - 1;

    if (sol.n_nodes() != grid.n_nodes() || sol.n_paths() != n_paths || sol.dim_w() != dim_w ||
        sol.n_marks() != n_marks)
        throw InvalidArgument("backward_sweep: solution shape does not match bundle and marks");
    if (node_lo < bundle.start_node())
        throw InvalidArgument("backward_sweep: range starts before the bundle's start node");
    if (node_lo >= node_hi || node_hi > horizon_node)
        throw InvalidArgument("backward_sweep: invalid node range");
    if (prev_y.rows != sol.n_nodes() || prev_y.cols != n_paths)
        throw InvalidArgument("backward_sweep: prev_y must be a full (n_nodes x n_paths) grid");
    if (!driver.f) throw InvalidArgument("backward_sweep: driver.f must be set");

    // Markovian map at the window edge: reuse an existing map (a window
    // solved to the right of this one stored its value fit there) so sweeps
    // compose exactly; only fit the stored values directly when none exists.
    if (!sol.u_fit[node_hi])
        sol.u_fit[node_hi] = fit_conditional(bundle.states(node_hi),
                                             std::as_const(sol).y_row(node_hi), config.basis);

    const bool anticipated = driver.functional.anticipated();
    const std::vector<double>& node_times = grid.nodes();
    std::optional<AnticipatedAccumulator> acc;
    if (anticipated) {
        acc.emplace(driver.functional, prev_y, node_times, driver.trunc_level);
        for (std::size_t j = grid.n_nodes(); j-- > node_hi;) acc->push_node(j);
    }

    std::vector<double> a_vals(n_paths, 0.0);
    std::vector<double> raws(anticipated ? n_paths : 0);
    std::vector<double> yhat(n_paths);
    std::vector<double> targets(n_paths);

    for (std::size_t i = node_hi; i-- > node_lo;) {
        const double t = grid.t(i);
        const double dt = grid.dt(i);
        ConstMatrixView xs = bundle.states(i);
        std::span<const double> y_next = std::as_const(sol).y_row(i + 1);

        // Anticipated argument: conditional fit of the raw tail functional of
        // the previous iterate.
        if (anticipated) {
            acc->push_node(i);
            for (std::size_t p = 0; p < n_paths; ++p) raws[p] = acc->raw(p);
            FitResult af = fit_conditional(xs, raws, config.basis);
            predict_all(af, xs, a_vals);
            clamp_values(a_vals, anticipated_clamp(driver.functional, config.y_clamp,
                                                   grid.horizon()));
            sol.a_fit[i] = std::move(af);
        }

        // Predictor iterate: conditional expectation of the next node's value.
        FitResult yh = fit_conditional(xs, y_next, config.basis);
        predict_all(yh, xs, yhat);
        clamp_values(yhat, config.y_clamp);
        sol.yhat_fit[i] = std::move(yh);

        // Jump exposure of the next node's Markovian map; the universal bound
        // |psi| <= 2 sup|Y| caps the fitted differences.
        if (n_marks > 0) {
            std::vector<double> pe = extract_psi(*sol.u_fit[i + 1], xs, model, marks, t);
            clamp_values(pe, 2.0 * config.y_clamp);
            std::memcpy(sol.psi_row(i).data(), pe.data(), sizeof(double) * n_paths * n_marks);
        }

        // Martingale-increment regression for Z, centered by the predictor.
        ZExtraction zx =
            extract_Z(y_next, bundle.increments(i), dt, xs, config.basis, &*sol.yhat_fit[i]);
        clamp_values(zx.values, config.z_clamp);
        std::memcpy(sol.z_row(i).data(), zx.values.data(), sizeof(double) * n_paths * dim_w);

        // Driver target per path.
        const double* z_data = sol.z_row(i).data();
        const double* psi_data = n_marks > 0 ? sol.psi_row(i).data() : nullptr;
        guarded_parallel(n_paths, [&](std::size_t begin, std::size_t end) {
            DriverArgs args;
            args.t = t;
            args.marks = &marks;
            for (std::size_t p = begin; p < end; ++p) {
                args.x = xs.row(p);
                args.a = a_vals[p];
                args.y = yhat[p];
                args.z = {z_data + p * dim_w, dim_w};
                args.psi = n_marks > 0 ? std::span<const double>{psi_data + p * n_marks, n_marks}
                                       : std::span<const double>{};
                const double fv = driver.f(args);
                if (!std::isfinite(fv))
                    throw ModelEvalError("driver produced a non-finite value at t=" +
                                         format_double(t) + ", path " + std::to_string(p));
                targets[p] = y_next[p] + dt * fv;
            }
        });

        // Value fit at node i; the fit is the node's Markovian map.
        FitResult yf = fit_conditional(xs, targets, config.basis);
        predict_all(yf, xs, sol.y_row(i));
        clamp_values(sol.y_row(i), config.y_clamp);
        sol.u_fit[i] = std::move(yf);
    }
}

SolveResult solve_lipschitz_absde(const PathBundle& bundle, const ForwardModel& model,
                                  const MarkMeasureSpec& marks, const DriverSpec& driver,
                                  const SolverConfig& config,
                                  const std::vector<double>* initial_y) {
    if (!driver.globally_lipschitz)
        throw InvalidArgument(
            "solve_lipschitz_absde: driver is not globally Lipschitz; use solve_qexp_absde");
    const TimeGrid& grid = bundle.grid();
    DiscreteSolution sol(grid, bundle.n_paths(), bundle.dim_w(), marks.n_marks(),
                         bundle.start_node());
    set_terminal_values(sol, bundle, driver);
    std::vector<double> prev;
    IterationTrace trace =
        iterate_window(sol, prev, bundle, model, marks, driver, config, bundle.start_node(),
                       grid.n_nodes() - 1, initial_y, 0);
    if (!trace.converged)
        throw ConvergenceError("solve_lipschitz_absde: fixed point not reached in " +
                                   std::to_string(config.max_iterations) + " iterations",
                               trace.distances);
    fill_frozen_prefix(sol);
    SolveResult result{std::move(sol), {}};
    result.window_traces.push_back(std::move(trace));
    return result;
}

QexpSolveResult solve_qexp_absde(const PathBundle& bundle, const ForwardModel& model,
                                 const MarkMeasureSpec& marks, const DriverSpec& driver,
                                 const SolverConfig& config) {
    if (config.m_schedule.empty())
        throw InvalidArgument("solve_qexp_absde: truncation schedule is empty");
    for (std::size_t k = 0; k < config.m_schedule.size(); ++k) {
        if (!(config.m_schedule[k] > 0.0))
            throw InvalidArgument("solve_qexp_absde: truncation levels must be positive");
        if (k > 0 && !(config.m_schedule[k] > config.m_schedule[k - 1]))
            throw InvalidArgument("solve_qexp_absde: truncation schedule must increase");
    }
    const TimeGrid& grid = bundle.grid();
    const std::size_t horizon_node = grid.n_nodes() - 1;
    const auto spans = window_spans(grid, bundle.start_node(), config.window);

    DiscreteSolution sol(grid, bundle.n_paths(), bundle.dim_w(), marks.n_marks(),
                         bundle.start_node());
    set_terminal_values(sol, bundle, driver);

    CascadeReport report;
    std::vector<double> prev_buf;
    std::vector<double> prev_level;
    for (std::size_t li = 0; li < config.m_schedule.size(); ++li) {
        const double m = config.m_schedule[li];
        const DriverSpec reg = regularize_driver(driver, marks, m, bundle.dim_w());
        CascadeLevel level;
        level.m = m;
        for (const auto& [lo, hi] : spans) {
            IterationTrace trace = iterate_window(sol, prev_buf, bundle, model, marks, reg, config,
                                                  lo, hi, nullptr, 0);
            if (!trace.converged)
                throw ConvergenceError(
                    "solve_qexp_absde: window [" + format_double(grid.t(lo)) + ", " +
                        format_double(grid.t(hi)) + "] stalled at truncation level m=" +
                        format_double(m) + "; shorten the window via SolverConfig::window",
                    trace.distances);
            level.window_traces.push_back(std::move(trace));
        }
        if (li > 0)
            level.distance_to_previous =
                l2_distance_to_grid(sol, prev_level, bundle.start_node(), horizon_node);
        const bool stop = li > 0 && level.distance_to_previous < config.tolerance;
        report.levels.push_back(std::move(level));
        if (stop) {
            report.early_stopped = true;
            break;
        }
        if (li + 1 < config.m_schedule.size()) {
            const double* y = sol.y_view().data;
            prev_level.assign(y, y + sol.n_nodes() * sol.n_paths());
        }
    }
    fill_frozen_prefix(sol);
    return {std::move(sol), std::move(report)};
}

double pick_window(const PathBundle& bundle, const ForwardModel& model,
                   const MarkMeasureSpec& marks, const DriverSpec& driver,
                   const SolverConfig& config) {
    const TimeGrid& grid = bundle.grid();
    const std::size_t start = bundle.start_node();
    DriverSpec probe = driver;
    if (!driver.globally_lipschitz) {
        if (config.m_schedule.empty())
            throw InvalidArgument("pick_window: truncation schedule is empty");
        probe = regularize_driver(driver, marks, config.m_schedule.back(), bundle.dim_w());
    }
    double h = grid.horizon() - grid.t(start);
    const double h_min = 2.0 * grid.min_dt();
    std::vector<double> last_trace;
    for (;;) {
        const auto spans = window_spans(grid, start, h);
        const auto [lo, hi] = spans.front(); // rightmost window [T-h, T]
        DiscreteSolution sol(grid, bundle.n_paths(), bundle.dim_w(), marks.n_marks(), start);
        set_terminal_values(sol, bundle, probe);
        std::vector<double> prev;
        IterationTrace trace =
            iterate_window(sol, prev, bundle, model, marks, probe, config, lo, hi, nullptr, 2);
        last_trace = trace.distances;
        if (trace.converged) return h;
        if (trace.distances.size() >= 2 && trace.distances[1] <= 0.5 * trace.distances[0])
            return h;
        if (h * 0.5 < h_min)
            throw ConvergenceError(
                "pick_window: no contracting window of at least two grid steps; refine the grid "
                "or lower the truncation schedule",
                last_trace);
        h *= 0.5;
    }
}

UTable build_u_map(const ForwardModel& model, const MarkMeasureSpec& marks,
                   const DriverSpec& driver, const TimeGrid& grid,
                   const std::vector<double>& times, const std::vector<std::vector<double>>& points,
                   std::size_t n_paths, std::uint64_t seed, const SolverConfig& config,
                   std::size_t replicates) {
    if (times.empty() || points.empty()) throw InvalidArgument("build_u_map: empty lattice");
    if (replicates == 0) throw InvalidArgument("build_u_map: replicates must be >= 1");
    for (const auto& x : points)
        if (x.size() != model.dim_x)
            throw InvalidArgument("build_u_map: lattice point dimension mismatch");

    const std::size_t n_times = times.size();
    const std::size_t n_points = points.size();
    UTable table;
    table.times = times;
    table.points = points;
    table.values.assign(n_times * n_points, 0.0);
    table.se.assign(n_times * n_points, 0.0);

    for (std::size_t a = 0; a < n_times; ++a) {
        const std::size_t node = grid.node_at(times[a]);
        if (node + 1 >= grid.n_nodes())
            throw InvalidArgument("build_u_map: lattice times must precede the horizon");
        for (std::size_t b = 0; b < n_points; ++b) {
            const std::size_t cell = a * n_points + b;
            std::vector<double> vals;
            vals.reserve(replicates);
            double residual_se = 0.0;
            for (std::size_t r = 0; r < replicates; ++r) {
                const std::uint64_t cell_seed = derive_stream_seed(seed, cell * replicates + r);
                PathBundle bundle =
                    simulate_paths(model, marks, grid, {times[a], points[b]}, n_paths, cell_seed);
                std::optional<DiscreteSolution> solved;
                if (driver.globally_lipschitz)
                    solved = std::move(
                        solve_lipschitz_absde(bundle, model, marks, driver, config).solution);
                else
                    solved =
                        std::move(solve_qexp_absde(bundle, model, marks, driver, config).solution);
                vals.push_back(solved->y_start());
                residual_se = solved->u_fit[node]->residual_rms /
                              std::sqrt(static_cast<double>(n_paths));
            }
            double mean = 0.0;
            for (double v : vals) mean += v;
            mean /= static_cast<double>(replicates);
            double se = residual_se;
            if (replicates >= 2) {
                double ss = 0.0;
                for (double v : vals) ss += (v - mean) * (v - mean);
                se = std::sqrt(ss / static_cast<double>(replicates - 1)) /
                     std::sqrt(static_cast<double>(replicates));
            }
            table.values[cell] = mean;
            table.se[cell] = se;
        }
    }
    return table;
}

} // namespace absde
