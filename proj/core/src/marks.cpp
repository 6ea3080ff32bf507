#include "absde/marks.hpp"

#include "absde/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace absde {

MarkMeasureSpec MarkMeasureSpec::none() { return MarkMeasureSpec(std::vector<MarkComponent>{}); }

MarkMeasureSpec MarkMeasureSpec::discrete(std::vector<std::vector<MarkAtom>> components) {
    std::vector<MarkComponent> comps;
    comps.reserve(components.size());
    for (auto& atoms : components) {
        MarkComponent c;
        c.atoms = std::move(atoms);
        c.atomic = true;
        comps.push_back(std::move(c));
    }
    return MarkMeasureSpec(std::move(comps));
}

MarkMeasureSpec::MarkMeasureSpec(std::vector<MarkComponent> components)
    : components_(std::move(components)) {
    offsets_.reserve(components_.size() + 1);
    offsets_.push_back(0);
    for (std::size_t c = 0; c < components_.size(); ++c) {
        auto& comp = components_[c];
        if (comp.atoms.empty())
            throw InvalidArgument("MarkMeasureSpec: component without quadrature atoms");
        double intensity = 0.0;
        double cutoff = std::numeric_limits<double>::infinity();
        std::vector<double> cum;
        cum.reserve(comp.atoms.size());
        for (std::size_t a = 0; a < comp.atoms.size(); ++a) {
            const auto& atom = comp.atoms[a];
            if (!(atom.weight > 0.0) || !std::isfinite(atom.weight))
                throw InvalidArgument("MarkMeasureSpec: atom weights must be finite and > 0");
            if (!(std::abs(atom.mark) > 0.0) || !std::isfinite(atom.mark))
                throw InvalidArgument("MarkMeasureSpec: marks must be finite and nonzero");
            intensity += atom.weight;
            cutoff = std::min(cutoff, std::abs(atom.mark));
            cum.push_back(intensity);
            quad_.push_back({c, a, atom.mark, atom.weight});
        }
        comp.intensity = intensity;
        comp.cutoff = cutoff;
        if (!comp.sampler && !comp.atomic)
            throw InvalidArgument("MarkMeasureSpec: non-atomic component needs a sampler");
        fully_atomic_ = fully_atomic_ && comp.atomic;
        total_intensity_ += intensity;
        cum_weights_.push_back(std::move(cum));
        offsets_.push_back(quad_.size());
    }
}

std::size_t MarkMeasureSpec::quad_index(std::size_t c, std::size_t atom) const {
    return offsets_[c] + atom;
}

std::size_t MarkMeasureSpec::nearest_quad_index(std::size_t c, double mark) const {
    const auto& atoms = components_[c].atoms;
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < atoms.size(); ++a) {
        const double d = std::abs(atoms[a].mark - mark);
        if (d < best_d) {
            best_d = d;
            best = a;
        }
    }
    return quad_index(c, best);
}

std::size_t MarkMeasureSpec::sample_atom(std::size_t c, Rng& rng) const {
    const auto& cum = cum_weights_[c];
    const double u = rng.next_uniform() * components_[c].intensity;
    const auto it = std::upper_bound(cum.begin(), cum.end(), u);
    const std::size_t a = std::min<std::size_t>(it - cum.begin(), cum.size() - 1);
    return a;
}

double MarkMeasureSpec::l2_nu_sq(std::span<const double> psi) const {
    double s = 0.0;
    for (std::size_t q = 0; q < quad_.size(); ++q) s += quad_[q].weight * psi[q] * psi[q];
    return s;
}

} // namespace absde
