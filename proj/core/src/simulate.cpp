#include "absde/simulate.hpp"

#include "absde/errors.hpp"
#include "absde/parallel.hpp"
#include "absde/rng.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace absde {
namespace {

struct StepScratch {
    std::vector<double> drift, diffusion, jump;
    explicit StepScratch(std::size_t n, std::size_t d) : drift(n), diffusion(n * d), jump(n) {}
};

// x_next = x + b dt + sigma dw + sum_events gamma - dt sum_q w_q gamma.
// Shared by simulation and replay so both produce identical bits.
void euler_step(const ForwardModel& model, const MarkMeasureSpec& marks, double t, double dt,
                std::span<const double> x, std::span<const double> dw,
                std::span<const JumpEvent> step_events, std::span<double> x_next,
                StepScratch& scratch) {
    const std::size_t n = model.dim_x;
    const std::size_t d = model.dim_w;
    model.drift(t, x, scratch.drift);
    model.diffusion(t, x, scratch.diffusion);
    for (std::size_t i = 0; i < n; ++i) {
        double v = x[i] + scratch.drift[i] * dt;
        const double* row = scratch.diffusion.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) v += row[j] * dw[j];
        x_next[i] = v;
    }
    if (model.jump && !marks.empty()) {
        for (const auto& ev : step_events) {
            model.jump(t, x, ev.component, ev.mark, scratch.jump);
            for (std::size_t i = 0; i < n; ++i) x_next[i] += scratch.jump[i];
        }
        for (const auto& q : marks.quadrature()) {
            model.jump(t, x, q.component, q.mark, scratch.jump);
            const double w = q.weight * dt;
            for (std::size_t i = 0; i < n; ++i) x_next[i] -= w * scratch.jump[i];
        }
    }
}

[[noreturn]] void throw_nonfinite(double t, std::span<const double> x, std::size_t path) {
    std::ostringstream os;
    os << "forward step produced a non-finite state at t=" << t << ", path=" << path << ", x=(";
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
    os << ")";
    throw ModelEvalError(os.str());
}

bool all_finite(std::span<const double> v) {
    for (double a : v)
        if (!std::isfinite(a)) return false;
    return true;
}

} // namespace

PathBundle simulate_paths(const ForwardModel& model, const MarkMeasureSpec& marks,
                          const TimeGrid& grid, const StartDatum& start, std::size_t n_paths,
                          std::uint64_t master_seed) {
    if (!model.drift || !model.diffusion)
        throw InvalidArgument("simulate_paths: model needs drift and diffusion");
    if (!marks.empty() && !model.jump)
        throw InvalidArgument("simulate_paths: mark measure given but model has no jump coefficient");
    if (start.x.size() != model.dim_x)
        throw InvalidArgument("simulate_paths: start state dimension mismatch");
    const std::size_t start_node = grid.node_at(start.t);

    PathBundle bundle(grid, n_paths, model.dim_x, model.dim_w, start_node, start.x, master_seed);
    const std::size_t n_steps = grid.n_steps();
    const std::size_t n_comp = marks.n_components();

    std::vector<std::vector<JumpEvent>> per_path(n_paths);

    parallel_for_blocks(n_paths, [&](std::size_t pb, std::size_t pe) {
        StepScratch scratch(model.dim_x, model.dim_w);
        for (std::size_t p = pb; p < pe; ++p) {
            Rng rng(derive_stream_seed(master_seed, p));
            auto& events = per_path[p];

            // Draw all driving noise first, in a start-independent order.
            for (std::size_t i = 0; i < n_steps; ++i) {
                const double sq = std::sqrt(grid.dt(i));
                auto dw = bundle.dw_mut(i, p);
                for (std::size_t j = 0; j < model.dim_w; ++j) dw[j] = sq * rng.next_normal();
                for (std::size_t c = 0; c < n_comp; ++c) {
                    const auto& comp = marks.component(c);
                    const int count = rng.next_poisson(comp.intensity * grid.dt(i));
                    for (int k = 0; k < count; ++k) {
                        JumpEvent ev;
                        ev.step = static_cast<std::uint32_t>(i);
                        ev.component = static_cast<std::uint32_t>(c);
                        if (comp.sampler) {
                            ev.mark = comp.sampler(rng);
                            ev.atom = static_cast<std::uint32_t>(
                                marks.nearest_quad_index(c, ev.mark) - marks.quad_index(c, 0));
                        } else {
                            const std::size_t a = marks.sample_atom(c, rng);
                            ev.atom = static_cast<std::uint32_t>(a);
                            ev.mark = comp.atoms[a].mark;
                        }
                        events.push_back(ev);
                    }
                }
            }

            // Frozen prefix, then Euler from the start node.
            for (std::size_t i = 0; i <= start_node; ++i) {
                auto xs = bundle.state_mut(i, p);
                std::memcpy(xs.data(), start.x.data(), model.dim_x * sizeof(double));
            }
            std::size_t ev_lo = 0;
            while (ev_lo < events.size() && events[ev_lo].step < start_node) ++ev_lo;
            for (std::size_t i = start_node; i < n_steps; ++i) {
                std::size_t ev_hi = ev_lo;
                while (ev_hi < events.size() && events[ev_hi].step == i) ++ev_hi;
                const auto x = bundle.state(i, p);
                auto x_next = bundle.state_mut(i + 1, p);
                euler_step(model, marks, grid.t(i), grid.dt(i), x, bundle.dw(i, p),
                           std::span<const JumpEvent>(events.data() + ev_lo, ev_hi - ev_lo), x_next,
                           scratch);
                if (!all_finite(x_next)) throw_nonfinite(grid.t(i), x, p);
                ev_lo = ev_hi;
            }
        }
    });

    // CSR-flatten events in path order.
    std::vector<std::size_t> offsets(n_paths + 1, 0);
    for (std::size_t p = 0; p < n_paths; ++p) offsets[p + 1] = offsets[p] + per_path[p].size();
    std::vector<JumpEvent> flat(offsets.back());
    parallel_for_blocks(n_paths, [&](std::size_t pb, std::size_t pe) {
        for (std::size_t p = pb; p < pe; ++p)
            std::copy(per_path[p].begin(), per_path[p].end(), flat.begin() + offsets[p]);
    });
    bundle.set_events(std::move(flat), std::move(offsets));
    return bundle;
}

double replay_max_deviation(const PathBundle& bundle, const ForwardModel& model,
                            const MarkMeasureSpec& marks) {
    const auto& grid = bundle.grid();
    const std::size_t n = model.dim_x;
    return parallel_max(bundle.n_paths(), [&](std::size_t p) {
        StepScratch scratch(model.dim_x, model.dim_w);
        std::vector<double> x(bundle.x0()), x_next(n);
        double dev = 0.0;
        const auto events = bundle.events(p);
        for (std::size_t i = 0; i <= bundle.start_node(); ++i)
            for (std::size_t k = 0; k < n; ++k)
                dev = std::max(dev, std::abs(bundle.state(i, p)[k] - bundle.x0()[k]));
        std::size_t ev_lo = 0;
        while (ev_lo < events.size() && events[ev_lo].step < bundle.start_node()) ++ev_lo;
        for (std::size_t i = bundle.start_node(); i < grid.n_steps(); ++i) {
            std::size_t ev_hi = ev_lo;
            while (ev_hi < events.size() && events[ev_hi].step == i) ++ev_hi;
            euler_step(model, marks, grid.t(i), grid.dt(i), x, bundle.dw(i, p),
                       events.subspan(ev_lo, ev_hi - ev_lo), x_next, scratch);
            for (std::size_t k = 0; k < n; ++k)
                dev = std::max(dev, std::abs(bundle.state(i + 1, p)[k] - x_next[k]));
            std::swap(x, x_next);
            ev_lo = ev_hi;
        }
        return dev;
    });
}

} // namespace absde
