#pragma once

#include "absde/time_grid.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace absde {

// Read-only view of a row-major (rows x cols) block.
struct ConstMatrixView {
    const double* data = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::span<const double> row(std::size_t r) const { return {data + r * cols, cols}; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// One realized jump: component jumps with `mark` somewhere in step
// (t_step, t_step+1]. `atom` is the quadrature index of the mark within its
// component (nearest atom for non-atomic samplers).
struct JumpEvent {
    std::uint32_t step = 0;
    std::uint32_t component = 0;
    std::uint32_t atom = 0;
    double mark = 0.0;
};

// Simulated forward ensemble: states at every node, Brownian increments and
// jump events for every step, plus everything needed to replay each path
// bit-exactly from its seed. States at nodes with t <= start time equal the
// initial state exactly.
class PathBundle {
public:
    PathBundle(TimeGrid grid, std::size_t n_paths, std::size_t dim_x, std::size_t dim_w,
               std::size_t start_node, std::vector<double> x0, std::uint64_t master_seed);

    const TimeGrid& grid() const { return grid_; }
    std::size_t n_paths() const { return n_paths_; }
    std::size_t dim_x() const { return dim_x_; }
    std::size_t dim_w() const { return dim_w_; }
    std::size_t start_node() const { return start_node_; }
    double start_time() const { return grid_.t(start_node_); }
    const std::vector<double>& x0() const { return x0_; }
    std::uint64_t master_seed() const { return master_seed_; }

    // States at one node as a (n_paths x dim_x) view.
    ConstMatrixView states(std::size_t node) const;
    std::span<const double> state(std::size_t node, std::size_t path) const;
    std::span<double> state_mut(std::size_t node, std::size_t path);

    // Brownian increments of one step as a (n_paths x dim_w) view.
    ConstMatrixView increments(std::size_t step) const;
    std::span<const double> dw(std::size_t step, std::size_t path) const;
    std::span<double> dw_mut(std::size_t step, std::size_t path);

    // Jump events of one path, ordered by step.
    std::span<const JumpEvent> events(std::size_t path) const;
    std::size_t n_events() const { return events_.size(); }

    // Assembly (simulation only).
    void set_events(std::vector<JumpEvent> flat, std::vector<std::size_t> offsets);

private:
    TimeGrid grid_;
    std::size_t n_paths_;
    std::size_t dim_x_;
    std::size_t dim_w_;
    std::size_t start_node_;
    std::vector<double> x0_;
    std::uint64_t master_seed_;
    std::vector<double> X_;              // [node][path][dim_x]
    std::vector<double> dW_;             // [step][path][dim_w]
    std::vector<JumpEvent> events_;      // grouped by path, step-ordered
    std::vector<std::size_t> offsets_;   // path -> first event index (size n_paths+1)
};

} // namespace absde
