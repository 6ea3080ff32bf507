#pragma once

#include "absde/marks.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace absde {

// State dynamics dX = b dt + sigma dW + jumps, with the jump part compensated.
// Coefficients are callbacks evaluated at the left node of each step.
struct ForwardModel {
    std::size_t dim_x = 1; // state dimension n
    std::size_t dim_w = 1; // Brownian dimension d

    // out has length dim_x.
    std::function<void(double t, std::span<const double> x, std::span<double> out)> drift;
    // out has length dim_x * dim_w, row major (state index major).
    std::function<void(double t, std::span<const double> x, std::span<double> out)> diffusion;
    // Jump amplitude for one component/mark; out has length dim_x. May be empty
    // when the mark measure is empty.
    std::function<void(double t, std::span<const double> x, std::size_t component, double mark,
                       std::span<double> out)>
        jump;

    // Declared Lipschitz constant for coefficients (state argument).
    double lipschitz_K = 1.0;

    // Scalar model convenience: n = d = 1.
    static ForwardModel scalar(std::function<double(double, double)> b,
                               std::function<double(double, double)> sigma,
                               std::function<double(double, double, double)> gamma = {},
                               double lipschitz_K = 1.0);
};

struct LipschitzProbeReport {
    double max_drift_ratio = 0.0;     // |b(t,x)-b(t,x')| / (K |x-x'|)
    double max_diffusion_ratio = 0.0; // same for sigma (Frobenius)
    double max_jump_ratio = 0.0;      // sum_i |gamma^i(t,x,e)-gamma^i(t,x',e)| / (K (1^|e|) |x-x'|)
    bool pass = false;                // all ratios <= 1 + tol
    std::size_t n_probes = 0;
};

// Samples probe pairs (t, x, x') in a box and checks the declared Lipschitz
// constant against finite differences of all coefficients; the jump
// coefficient is probed at every quadrature mark with the (1 ^ |e|) scaling.
LipschitzProbeReport lipschitz_probe_check(const ForwardModel& model, const MarkMeasureSpec& marks,
                                           double horizon, double box_radius, std::size_t n_probes,
                                           std::uint64_t seed, double tol = 1e-9);

} // namespace absde
