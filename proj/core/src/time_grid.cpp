#include "absde/time_grid.hpp"

#include "absde/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace absde {

TimeGrid TimeGrid::uniform(double horizon, std::size_t n_steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw InvalidArgument("TimeGrid::uniform: horizon must be finite and > 0");
    if (n_steps == 0) throw InvalidArgument("TimeGrid::uniform: need at least one step");
    std::vector<double> nodes(n_steps + 1);
    for (std::size_t i = 0; i <= n_steps; ++i)
        nodes[i] = horizon * static_cast<double>(i) / static_cast<double>(n_steps);
    nodes.back() = horizon;
    return TimeGrid(std::move(nodes));
}

TimeGrid::TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.size() < 2) throw InvalidArgument("TimeGrid: need at least two nodes");
    if (nodes_.front() != 0.0) throw InvalidArgument("TimeGrid: first node must be 0");
    for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) {
        if (!(nodes_[i] < nodes_[i + 1]))
            throw InvalidArgument("TimeGrid: nodes must be strictly increasing");
    }
    if (!std::isfinite(nodes_.back())) throw InvalidArgument("TimeGrid: horizon must be finite");
}

double TimeGrid::min_dt() const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_steps(); ++i) m = std::min(m, dt(i));
    return m;
}

std::size_t TimeGrid::node_at(double time) const {
    const std::size_t i = nearest_node(time);
    const double tol = 1e-9 * std::max(horizon(), 1.0);
    if (std::abs(nodes_[i] - time) > tol)
        throw InvalidArgument("TimeGrid::node_at: time does not coincide with a grid node");
    return i;
}

std::size_t TimeGrid::nearest_node(double time) const {
    const double clamped = std::clamp(time, 0.0, horizon());
    const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), clamped);
    if (it == nodes_.begin()) return 0;
    if (it == nodes_.end()) return nodes_.size() - 1;
    const std::size_t hi = static_cast<std::size_t>(it - nodes_.begin());
    return (clamped - nodes_[hi - 1] <= nodes_[hi] - clamped) ? hi - 1 : hi;
}

} // namespace absde
