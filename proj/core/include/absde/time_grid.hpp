#pragma once

#include <cstddef>
#include <vector>

namespace absde {

// Partition 0 = t_0 < t_1 < ... < t_N = T. Node i carries time t_i; step i is
// [t_i, t_{i+1}) with length dt(i). Values attached to steps (Z, psi, Brownian
// increments) are indexed by the left node.
class TimeGrid {
public:
    // Uniform grid with n_steps steps on [0, horizon].
    static TimeGrid uniform(double horizon, std::size_t n_steps);

    // Explicit strictly increasing nodes starting at 0.
    explicit TimeGrid(std::vector<double> nodes);

    std::size_t n_steps() const { return nodes_.size() - 1; }
    std::size_t n_nodes() const { return nodes_.size(); }
    double horizon() const { return nodes_.back(); }
    double t(std::size_t i) const { return nodes_[i]; }
    double dt(std::size_t i) const { return nodes_[i + 1] - nodes_[i]; }
    double min_dt() const;
    const std::vector<double>& nodes() const { return nodes_; }

    // Index of the node equal to `time` (tolerance 1e-9 * max(T, 1)); throws
    // InvalidArgument otherwise. Start times must sit on the grid so frozen
    // prefixes and replay stay exact.
    std::size_t node_at(double time) const;

    // Index of the node nearest to `time` clamped into [0, T].
    std::size_t nearest_node(double time) const;

private:
    std::vector<double> nodes_;
};

} // namespace absde
