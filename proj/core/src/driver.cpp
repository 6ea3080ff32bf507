#include "absde/driver.hpp"

#include "absde/errors.hpp"
#include "absde/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace absde {

double j_gamma(double gamma_exp, double u) {
    if (!(gamma_exp > 0.0)) throw InvalidArgument("j_gamma: gamma_exp must be > 0");
    const double a = gamma_exp * u;
    if (a > 709.0) {
        std::ostringstream os;
        os << "j_gamma: exponent " << a << " exceeds the floating range";
        throw OverflowError(os.str());
    }
    // expm1 keeps precision near 0 where exp(a) - 1 - a cancels.
    return (std::expm1(a) - a) / gamma_exp;
}

double truncate_value(double v, double m) {
    if (!(m > 0.0)) throw InvalidArgument("truncate_value: level must be > 0");
    return std::clamp(v, -m, m);
}

AnticipatedFunctional AnticipatedFunctional::none() { return {}; }

AnticipatedFunctional AnticipatedFunctional::running_sup_abs() {
    AnticipatedFunctional f;
    f.kind = Kind::RunningSupAbs;
    return f;
}

AnticipatedFunctional AnticipatedFunctional::deferred_value(double theta) {
    if (!(theta >= 0.0)) throw InvalidArgument("AnticipatedFunctional: theta must be >= 0");
    AnticipatedFunctional f;
    f.kind = Kind::DeferredValue;
    f.theta = theta;
    return f;
}

AnticipatedFunctional AnticipatedFunctional::path_integral() {
    AnticipatedFunctional f;
    f.kind = Kind::PathIntegral;
    return f;
}

AnticipatedFunctional AnticipatedFunctional::custom_grid(
    std::function<double(std::span<const double>, std::span<const double>)> fn, double lipschitz) {
    if (!fn) throw InvalidArgument("AnticipatedFunctional: custom functional must be callable");
    AnticipatedFunctional f;
    f.kind = Kind::CustomGrid;
    f.custom = std::move(fn);
    f.lipschitz = lipschitz;
    return f;
}

double AnticipatedFunctional::evaluate(std::span<const double> values,
                                       std::span<const double> times, double clamp_m) const {
    if (values.empty() || values.size() != times.size())
        throw InvalidArgument("AnticipatedFunctional::evaluate: malformed tail");
    const auto val = [&](std::size_t j) {
        return clamp_m > 0.0 ? truncate_value(values[j], clamp_m) : values[j];
    };
    switch (kind) {
    case Kind::None:
        return 0.0;
    case Kind::RunningSupAbs: {
        double m = 0.0;
        for (std::size_t j = 0; j < values.size(); ++j) m = std::max(m, std::abs(val(j)));
        return m;
    }
    case Kind::DeferredValue: {
        const double target = std::min(times[0] + theta, times.back());
        std::size_t best = 0;
        double best_d = std::abs(times[0] - target);
        for (std::size_t j = 1; j < times.size(); ++j) {
            const double d = std::abs(times[j] - target);
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        return val(best);
    }
    case Kind::PathIntegral: {
        // Backward left Riemann sum; matches the solver's tail accumulator
        // addition order bit for bit.
        double s = 0.0;
        for (std::size_t j = values.size() - 1; j-- > 0;) s = val(j) * (times[j + 1] - times[j]) + s;
        return s;
    }
    case Kind::CustomGrid: {
        if (clamp_m > 0.0) {
            std::vector<double> clamped(values.size());
            for (std::size_t j = 0; j < values.size(); ++j) clamped[j] = val(j);
            return custom(clamped, times);
        }
        return custom(values, times);
    }
    }
    throw InvalidArgument("AnticipatedFunctional::evaluate: unknown kind");
}

DriverSpec regularize_driver(const DriverSpec& spec, const MarkMeasureSpec& marks, double m,
                             std::size_t dim_z) {
    if (!(m > 0.0)) throw InvalidArgument("regularize_driver: level must be > 0");
    if (!spec.f) throw InvalidArgument("regularize_driver: driver is empty");

    DriverSpec out = spec;
    out.trunc_level = m;
    const double inv_m = 1.0 / m;

    out.f = [base = spec.f, m, inv_m](const DriverArgs& args) {
        thread_local std::vector<double> z_buf, psi_buf;
        z_buf.resize(args.z.size());
        for (std::size_t j = 0; j < args.z.size(); ++j) z_buf[j] = truncate_value(args.z[j], m);
        psi_buf.resize(args.psi.size());
        if (args.marks) {
            const auto& quad = args.marks->quadrature();
            for (std::size_t q = 0; q < args.psi.size(); ++q)
                psi_buf[q] =
                    std::abs(quad[q].mark) >= inv_m ? truncate_value(args.psi[q], m) : 0.0;
        }
        DriverArgs clipped = args;
        clipped.y = truncate_value(args.y, m);
        clipped.z = z_buf;
        clipped.psi = psi_buf;
        // args.a is the functional of the already-clamped path (trunc_level).
        return base(clipped);
    };

    // Global bound: envelope at the clamp levels, with the mark cutoff mass.
    double cutoff_mass = 0.0;
    for (std::size_t c = 0; c < marks.n_components(); ++c) {
        double mass = 0.0;
        for (const auto& atom : marks.component(c).atoms)
            if (std::abs(atom.mark) >= inv_m) mass += atom.weight;
        cutoff_mass = std::max(cutoff_mass, mass);
    }
    const auto& s = spec.structure;
    out.regularized_bound = s.l_bar + (s.delta + s.beta) * m +
                            0.5 * s.gamma_exp * m * m * static_cast<double>(dim_z) +
                            static_cast<double>(std::max<std::size_t>(marks.n_components(), 1)) *
                                j_gamma(s.gamma_exp, m) * cutoff_mass;
    out.globally_lipschitz = true;
    if (!out.lipschitz_K) {
        out.lipschitz_K = [s, marks_total = marks.total_intensity()](double level) {
            return s.delta + s.beta + s.gamma_exp * level +
                   (std::exp(std::min(s.gamma_exp * level, 700.0)) - 1.0) * std::max(marks_total, 1.0);
        };
    }
    return out;
}

namespace {

double envelope_core(const StructureParams& s, const MarkMeasureSpec& marks, double sup_q,
                     double y, std::span<const double> z, std::span<const double> psi,
                     double psi_sign) {
    double z2 = 0.0;
    for (double v : z) z2 += v * v;
    double pen = 0.0;
    const auto& quad = marks.quadrature();
    for (std::size_t q = 0; q < quad.size(); ++q)
        pen += quad[q].weight * j_gamma(s.gamma_exp, psi_sign * psi[q]);
    return s.l_bar + s.delta * sup_q + s.beta * std::abs(y) + 0.5 * s.gamma_exp * z2 + pen;
}

} // namespace

StructureReport check_structure_condition(const DriverSpec& spec, const MarkMeasureSpec& marks,
                                          std::span<const StructureProbe> probes, double tol) {
    if (!spec.f) throw InvalidArgument("check_structure_condition: driver is empty");
    StructureReport rep;
    rep.n_probes = probes.size();
    double worst = 0.0;
    for (std::size_t k = 0; k < probes.size(); ++k) {
        const auto& pr = probes[k];
        if (pr.psi.size() != marks.n_marks())
            throw InvalidArgument("check_structure_condition: probe psi size mismatch");
        const double a = spec.functional.evaluate(pr.q_values, pr.q_times, spec.trunc_level);
        DriverArgs args;
        args.t = pr.t;
        args.x = pr.x;
        args.a = a;
        args.y = pr.y;
        args.z = pr.z;
        args.psi = pr.psi;
        args.marks = &marks;
        const double f = spec.f(args);
        if (!std::isfinite(f)) {
            std::ostringstream os;
            os << "check_structure_condition: driver returned non-finite value at probe " << k;
            throw ModelEvalError(os.str());
        }
        double sup_q = 0.0;
        for (double v : pr.q_values) sup_q = std::max(sup_q, std::abs(v));
        const double upper = envelope_core(spec.structure, marks, sup_q, pr.y, pr.z, pr.psi, +1.0);
        const double lower = -envelope_core(spec.structure, marks, sup_q, pr.y, pr.z, pr.psi, -1.0);
        const double up_viol = f - upper;
        const double lo_viol = lower - f;
        if (std::max(up_viol, lo_viol) > worst) {
            worst = std::max(up_viol, lo_viol);
            rep.worst_probe = k;
        }
        rep.max_upper_violation = std::max(rep.max_upper_violation, up_viol);
        rep.max_lower_violation = std::max(rep.max_lower_violation, lo_viol);
    }
    rep.pass = rep.max_upper_violation <= tol && rep.max_lower_violation <= tol;
    return rep;
}

std::vector<StructureProbe> make_structure_probes(std::size_t n_probes, std::uint64_t seed,
                                                  std::size_t dim_x, std::size_t dim_z,
                                                  std::size_t n_marks,
                                                  std::span<const double> tail_times,
                                                  double q_range, double y_range, double z_range,
                                                  double psi_range) {
    if (tail_times.empty()) throw InvalidArgument("make_structure_probes: empty tail times");
    Rng rng(derive_stream_seed(seed, 0x57ab));
    auto draw = [&](double r) { return r * (2.0 * rng.next_uniform() - 1.0); };
    std::vector<StructureProbe> probes(n_probes);
    for (auto& pr : probes) {
        pr.t = tail_times[0];
        pr.x.resize(dim_x);
        for (auto& v : pr.x) v = draw(q_range);
        pr.q_times.assign(tail_times.begin(), tail_times.end());
        pr.q_values.resize(tail_times.size());
        for (auto& v : pr.q_values) v = draw(q_range);
        pr.y = draw(y_range);
        pr.z.resize(dim_z);
        for (auto& v : pr.z) v = draw(z_range);
        pr.psi.resize(n_marks);
        for (auto& v : pr.psi) v = draw(psi_range);
    }
    return probes;
}

AGammaReport check_A_gamma(const DriverSpec& spec, const MarkMeasureSpec& marks,
                           std::span<const AGammaProbe> probes, double tol) {
    if (!spec.f) throw InvalidArgument("check_A_gamma: driver is empty");
    if (!spec.has_gamma_kernel || !spec.gamma_kernel)
        throw InvalidArgument("check_A_gamma: driver declares no kernel");
    if (!(spec.gamma_c1 > -1.0))
        throw InvalidArgument("check_A_gamma: kernel lower constant must exceed -1");
    if (!(spec.gamma_c2 >= 0.0))
        throw InvalidArgument("check_A_gamma: kernel upper constant must be >= 0");

    AGammaReport rep;
    rep.n_probes = probes.size();
    const auto& quad = marks.quadrature();
    for (const auto& pr : probes) {
        if (pr.psi.size() != quad.size() || pr.psi_prime.size() != quad.size())
            throw InvalidArgument("check_A_gamma: probe psi size mismatch");
        DriverArgs args;
        args.t = pr.t;
        args.x = pr.x;
        args.a = pr.a;
        args.y = pr.y;
        args.z = pr.z;
        args.marks = &marks;
        args.psi = pr.psi;
        const double f1 = spec.f(args);
        args.psi = pr.psi_prime;
        const double f2 = spec.f(args);
        double pairing = 0.0;
        for (std::size_t q = 0; q < quad.size(); ++q) {
            const double g = spec.gamma_kernel(quad[q].component, quad[q].mark, pr);
            const double cap = std::min(1.0, std::abs(quad[q].mark));
            rep.max_kernel_violation = std::max(
                {rep.max_kernel_violation, spec.gamma_c1 * cap - g, g - spec.gamma_c2 * cap});
            pairing += quad[q].weight * g * (pr.psi[q] - pr.psi_prime[q]);
        }
        rep.max_pairing_violation = std::max(rep.max_pairing_violation, (f1 - f2) - pairing);
    }
    rep.pass = rep.max_pairing_violation <= tol && rep.max_kernel_violation <= tol;
    return rep;
}

} // namespace absde
