#pragma once

#include "absde/forward_model.hpp"
#include "absde/marks.hpp"
#include "absde/path_bundle.hpp"
#include "absde/time_grid.hpp"

#include <cstdint>
#include <vector>

namespace absde {

// Initial datum (t, x). t must coincide with a grid node.
struct StartDatum {
    double t = 0.0;
    std::vector<double> x;
};

// Euler ensemble with explicit jump compensation. Coefficients are evaluated
// at the left node of each step; every retained jump is compensated by
// dt * sum_q w_q gamma(t_i, X_i, e_q). States at nodes with t_s <= start time
// equal x exactly. Driving noise (Brownian increments, jump counts, marks) is
// drawn for the whole grid from per-path streams derived from the master
// seed, so bundles with equal seeds share their noise regardless of the start
// datum, and path p is identical no matter how many paths or threads run.
PathBundle simulate_paths(const ForwardModel& model, const MarkMeasureSpec& marks,
                          const TimeGrid& grid, const StartDatum& start, std::size_t n_paths,
                          std::uint64_t master_seed);

// Recomputes every state from the stored increments and events via the same
// step function and returns the maximum absolute deviation (exactly 0 for an
// unmodified bundle).
double replay_max_deviation(const PathBundle& bundle, const ForwardModel& model,
                            const MarkMeasureSpec& marks);

} // namespace absde
