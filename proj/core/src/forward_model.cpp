#include "absde/forward_model.hpp"

#include "absde/errors.hpp"
#include "absde/rng.hpp"

#include <algorithm>
#include <cmath>

namespace absde {

ForwardModel ForwardModel::scalar(std::function<double(double, double)> b,
                                  std::function<double(double, double)> sigma,
                                  std::function<double(double, double, double)> gamma,
                                  double lipschitz_K) {
    ForwardModel m;
    m.dim_x = 1;
    m.dim_w = 1;
    m.lipschitz_K = lipschitz_K;
    m.drift = [b = std::move(b)](double t, std::span<const double> x, std::span<double> out) {
        out[0] = b(t, x[0]);
    };
    m.diffusion = [s = std::move(sigma)](double t, std::span<const double> x, std::span<double> out) {
        out[0] = s(t, x[0]);
    };
    if (gamma) {
        m.jump = [g = std::move(gamma)](double t, std::span<const double> x, std::size_t,
                                        double mark, std::span<double> out) {
            out[0] = g(t, x[0], mark);
        };
    }
    return m;
}

LipschitzProbeReport lipschitz_probe_check(const ForwardModel& model, const MarkMeasureSpec& marks,
                                           double horizon, double box_radius, std::size_t n_probes,
                                           std::uint64_t seed, double tol) {
    if (!(model.lipschitz_K > 0.0))
        throw InvalidArgument("lipschitz_probe_check: declared constant must be > 0");
    const std::size_t n = model.dim_x;
    const std::size_t d = model.dim_w;
    Rng rng(derive_stream_seed(seed, 0x11b5));
    std::vector<double> x(n), xp(n), a(std::max(n * d, n)), b(std::max(n * d, n));
    LipschitzProbeReport rep;
    rep.n_probes = n_probes;
    for (std::size_t k = 0; k < n_probes; ++k) {
        const double t = horizon * rng.next_uniform();
        double dist = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = box_radius * (2.0 * rng.next_uniform() - 1.0);
            xp[i] = box_radius * (2.0 * rng.next_uniform() - 1.0);
            dist += (x[i] - xp[i]) * (x[i] - xp[i]);
        }
        dist = std::sqrt(dist);
        if (dist < 1e-12) continue;
        const double denom = model.lipschitz_K * dist;

        model.drift(t, x, std::span<double>(a.data(), n));
        model.drift(t, xp, std::span<double>(b.data(), n));
        double db = 0.0;
        for (std::size_t i = 0; i < n; ++i) db += (a[i] - b[i]) * (a[i] - b[i]);
        rep.max_drift_ratio = std::max(rep.max_drift_ratio, std::sqrt(db) / denom);

        model.diffusion(t, x, std::span<double>(a.data(), n * d));
        model.diffusion(t, xp, std::span<double>(b.data(), n * d));
        double ds = 0.0;
        for (std::size_t i = 0; i < n * d; ++i) ds += (a[i] - b[i]) * (a[i] - b[i]);
        rep.max_diffusion_ratio = std::max(rep.max_diffusion_ratio, std::sqrt(ds) / denom);

        if (model.jump && !marks.empty()) {
            for (const auto& q : marks.quadrature()) {
                model.jump(t, x, q.component, q.mark, std::span<double>(a.data(), n));
                model.jump(t, xp, q.component, q.mark, std::span<double>(b.data(), n));
                double dg = 0.0;
                for (std::size_t i = 0; i < n; ++i) dg += std::abs(a[i] - b[i]);
                const double scale = denom * std::min(1.0, std::abs(q.mark));
                rep.max_jump_ratio = std::max(rep.max_jump_ratio, dg / scale);
            }
        }
    }
    rep.pass = rep.max_drift_ratio <= 1.0 + tol && rep.max_diffusion_ratio <= 1.0 + tol &&
               rep.max_jump_ratio <= 1.0 + tol;
    return rep;
}

} // namespace absde
