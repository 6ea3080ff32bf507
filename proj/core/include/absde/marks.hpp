#pragma once

#include "absde/rng.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace absde {

// One quadrature atom of a component's mark measure: integrating g against the
// component measure is sum of weight * g(mark); the weights of one component
// sum to its jump intensity.
struct MarkAtom {
    double mark = 0.0;
    double weight = 0.0;
};

// One jump component: finite-activity mark measure supported away from the
// origin (|mark| >= cutoff > 0), an intensity, a quadrature, and a sampler
// that draws realized marks. With the default discrete measure the sampler
// draws quadrature atoms, so realized marks and quadrature marks coincide.
struct MarkComponent {
    std::vector<MarkAtom> atoms;
    std::function<double(Rng&)> sampler; // empty: draw atoms by weight
    bool atomic = true;                  // realized marks sit on quadrature atoms
    double cutoff = 0.0;                 // min |mark| across atoms (validated)
    double intensity = 0.0;              // sum of weights (validated)
};

// Product mark measure across components, flattened for driver evaluation:
// psi fields are vectors over the flattened quadrature of all components.
class MarkMeasureSpec {
public:
    struct QuadPoint {
        std::size_t component = 0;
        std::size_t atom = 0; // index within the component
        double mark = 0.0;
        double weight = 0.0;
    };

    // Jump-free measure (k = 0).
    static MarkMeasureSpec none();

    // Discrete measure: one atom list per component.
    static MarkMeasureSpec discrete(std::vector<std::vector<MarkAtom>> components);

    explicit MarkMeasureSpec(std::vector<MarkComponent> components = {});

    std::size_t n_components() const { return components_.size(); }
    std::size_t n_marks() const { return quad_.size(); }
    bool empty() const { return quad_.empty(); }
    const MarkComponent& component(std::size_t c) const { return components_[c]; }
    const std::vector<QuadPoint>& quadrature() const { return quad_; }
    double intensity(std::size_t c) const { return components_[c].intensity; }
    double total_intensity() const { return total_intensity_; }
    bool fully_atomic() const { return fully_atomic_; }

    // Flattened index of (component, atom).
    std::size_t quad_index(std::size_t c, std::size_t atom) const;

    // Flattened index nearest to a realized mark of component c. Exact for
    // atomic components.
    std::size_t nearest_quad_index(std::size_t c, double mark) const;

    // Draws an atom index for component c (atomic components only).
    std::size_t sample_atom(std::size_t c, Rng& rng) const;

    // sum_q w_q psi_q^2 over the flattened quadrature.
    double l2_nu_sq(std::span<const double> psi) const;

private:
    std::vector<MarkComponent> components_;
    std::vector<QuadPoint> quad_;
    std::vector<std::size_t> offsets_;             // component -> first flattened index
    std::vector<std::vector<double>> cum_weights_; // per component, for atom draws
    double total_intensity_ = 0.0;
    bool fully_atomic_ = true;
};

} // namespace absde
