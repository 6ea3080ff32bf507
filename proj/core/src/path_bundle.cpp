#include "absde/path_bundle.hpp"

#include "absde/errors.hpp"

namespace absde {

PathBundle::PathBundle(TimeGrid grid, std::size_t n_paths, std::size_t dim_x, std::size_t dim_w,
                       std::size_t start_node, std::vector<double> x0, std::uint64_t master_seed)
    : grid_(std::move(grid)),
      n_paths_(n_paths),
      dim_x_(dim_x),
      dim_w_(dim_w),
      start_node_(start_node),
      x0_(std::move(x0)),
      master_seed_(master_seed) {
    if (n_paths_ == 0) throw InvalidArgument("PathBundle: need at least one path");
    if (dim_x_ == 0 || dim_w_ == 0) throw InvalidArgument("PathBundle: dimensions must be >= 1");
    if (x0_.size() != dim_x_) throw InvalidArgument("PathBundle: x0 size mismatch");
    if (start_node_ >= grid_.n_nodes() - 1)
        throw InvalidArgument("PathBundle: start node must precede the horizon");
    X_.assign(grid_.n_nodes() * n_paths_ * dim_x_, 0.0);
    dW_.assign(grid_.n_steps() * n_paths_ * dim_w_, 0.0);
    offsets_.assign(n_paths_ + 1, 0);
}

ConstMatrixView PathBundle::states(std::size_t node) const {
    return {X_.data() + node * n_paths_ * dim_x_, n_paths_, dim_x_};
}

std::span<const double> PathBundle::state(std::size_t node, std::size_t path) const {
    return {X_.data() + (node * n_paths_ + path) * dim_x_, dim_x_};
}

std::span<double> PathBundle::state_mut(std::size_t node, std::size_t path) {
    return {X_.data() + (node * n_paths_ + path) * dim_x_, dim_x_};
}

ConstMatrixView PathBundle::increments(std::size_t step) const {
    return {dW_.data() + step * n_paths_ * dim_w_, n_paths_, dim_w_};
}

std::span<const double> PathBundle::dw(std::size_t step, std::size_t path) const {
    return {dW_.data() + (step * n_paths_ + path) * dim_w_, dim_w_};
}

std::span<double> PathBundle::dw_mut(std::size_t step, std::size_t path) {
    return {dW_.data() + (step * n_paths_ + path) * dim_w_, dim_w_};
}

std::span<const JumpEvent> PathBundle::events(std::size_t path) const {
    return {events_.data() + offsets_[path], offsets_[path + 1] - offsets_[path]};
}

void PathBundle::set_events(std::vector<JumpEvent> flat, std::vector<std::size_t> offsets) {
    if (offsets.size() != n_paths_ + 1 || offsets.back() != flat.size())
        throw InvalidArgument("PathBundle::set_events: malformed offsets");
    events_ = std::move(flat);
    offsets_ = std::move(offsets);
}

} // namespace absde
