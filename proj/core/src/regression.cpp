#include "absde/regression.hpp"

#include "absde/errors.hpp"
#include "absde/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace absde {
namespace {

// Monomial exponent tuples with total degree <= degree, graded lex order.
std::vector<std::vector<unsigned>> monomial_exponents(std::size_t dim, std::size_t degree) {
    std::vector<std::vector<unsigned>> out;
    std::vector<unsigned> current(dim, 0);
    // Group by total degree so low-order terms come first.
    for (unsigned total = 0; total <= degree; ++total) {
        std::function<void(std::size_t, unsigned)> rec_exact = [&](std::size_t pos, unsigned remaining) {
            if (pos + 1 == dim) {
                current[pos] = remaining;
                out.push_back(current);
                current[pos] = 0;
                return;
            }
            for (unsigned e = 0; e <= remaining; ++e) {
                current[pos] = e;
                rec_exact(pos + 1, remaining - e);
            }
            current[pos] = 0;
        };
        rec_exact(0, total);
    }
    return out;
}

struct FeatureEval {
    std::vector<std::vector<unsigned>> exponents;
    std::size_t dim = 0;
    std::size_t degree = 0;
    mutable std::vector<double> powers; // (dim x (degree+1)) scratch, single thread

    FeatureEval(std::size_t dim_, std::size_t degree_)
        : exponents(monomial_exponents(dim_, degree_)), dim(dim_), degree(degree_),
          powers(dim_ * (degree_ + 1)) {}

    std::size_t size() const { return exponents.size(); }

    // Features of one standardized sample into out (length size()).
    void operator()(std::span<const double> xs, std::span<double> out) const {
        for (std::size_t d = 0; d < dim; ++d) {
            double* row = powers.data() + d * (degree + 1);
            row[0] = 1.0;
            for (std::size_t k = 1; k <= degree; ++k) row[k] = row[k - 1] * xs[d];
        }
        for (std::size_t b = 0; b < exponents.size(); ++b) {
            double v = 1.0;
            const auto& e = exponents[b];
            for (std::size_t d = 0; d < dim; ++d) v *= powers[d * (degree + 1) + e[d]];
            out[b] = v;
        }
    }
};

void standardize(const FitResult& fit, std::span<const double> x, std::span<double> xs) {
    for (std::size_t d = 0; d < x.size(); ++d) {
        double u = (x[d] - fit.shift[d]) * fit.scale[d];
        if (fit.clip > 0.0) u = std::clamp(u, -fit.clip, fit.clip);
        xs[d] = u;
    }
}

double predict_impl(const FitResult& fit, const FeatureEval& fe, std::span<const double> x,
                    std::vector<double>& xs, std::vector<double>& phi) {
    if (fit.constant_fit) return fit.coeffs[0];
    standardize(fit, x, xs);
    fe(xs, phi);
    double v = 0.0;
    for (std::size_t b = 0; b < phi.size(); ++b) v += fit.coeffs[b] * phi[b];
    return v;
}

} // namespace

std::size_t RegressionBasis::n_features(std::size_t dim_x) const {
    // C(dim + degree, degree)
    std::size_t num = 1, den = 1;
    for (std::size_t k = 1; k <= degree; ++k) {
        num *= dim_x + k;
        den *= k;
    }
    return num / den;
}

double FitResult::predict(std::span<const double> x) const {
    if (constant_fit) return coeffs[0];
    FeatureEval fe(dim_x, degree);
    std::vector<double> xs(dim_x), phi(fe.size());
    return predict_impl(*this, fe, x, xs, phi);
}

FitResult fit_conditional(ConstMatrixView states, std::span<const double> targets,
                          const RegressionBasis& basis) {
    const std::size_t P = states.rows;
    const std::size_t n = states.cols;
    if (P == 0 || targets.size() != P)
        throw InvalidArgument("fit_conditional: states/targets size mismatch");
    for (std::size_t p = 0; p < P; ++p)
        if (!std::isfinite(targets[p]))
            throw InvalidArgument("fit_conditional: non-finite target value");

    FitResult fit;
    fit.dim_x = n;
    fit.degree = basis.degree;
    fit.shift.assign(n, 0.0);
    fit.scale.assign(n, 1.0);
    fit.clip = basis.clip_sd;

    // Per-dimension mean / variance / range, deterministically.
    std::vector<double> moments(2 * n, 0.0);
    blocked_accumulate(P, 2 * n, moments.data(), [&](std::size_t b, std::size_t e, double* acc) {
        for (std::size_t p = b; p < e; ++p) {
            const auto row = states.row(p);
            for (std::size_t d = 0; d < n; ++d) {
                acc[d] += row[d];
                acc[n + d] += row[d] * row[d];
            }
        }
    });
    bool degenerate = true;
    for (std::size_t d = 0; d < n; ++d) {
        const double mean = moments[d] / static_cast<double>(P);
        const double var = std::max(0.0, moments[n + d] / static_cast<double>(P) - mean * mean);
        fit.shift[d] = mean;
        if (var > 0.0) {
            fit.scale[d] = 1.0 / std::sqrt(var);
            degenerate = false;
        } else {
            fit.scale[d] = 1.0;
        }
    }

    const double dP = static_cast<double>(P);
    if (degenerate) {
        // All states identical: the conditional expectation is the plain mean.
        fit.constant_fit = true;
        const double mean = blocked_sum(P, [&](std::size_t p) { return targets[p]; }) / dP;
        const double ss = blocked_sum(P, [&](std::size_t p) {
            const double r = targets[p] - mean;
            return r * r;
        });
        fit.coeffs = {mean};
        fit.residual_rms = std::sqrt(ss / dP);
        fit.cond = 1.0;
        return fit;
    }

    FeatureEval fe(n, basis.degree);
    const std::size_t B = fe.size();
    if (P < B) throw InvalidArgument("fit_conditional: fewer samples than basis functions");

    // Normal equations, block-deterministic.
    std::vector<double> normal(B * B + B, 0.0);
    blocked_accumulate(P, B * B + B, normal.data(), [&](std::size_t pb, std::size_t pe, double* acc) {
        FeatureEval fe_local(n, basis.degree);
        std::vector<double> xs(n), phi(B);
        for (std::size_t p = pb; p < pe; ++p) {
            standardize(fit, states.row(p), xs);
            fe_local(xs, phi);
            for (std::size_t i = 0; i < B; ++i) {
                const double fi = phi[i];
                double* row = acc + i * B;
                for (std::size_t j = i; j < B; ++j) row[j] += fi * phi[j];
                acc[B * B + i] += fi * targets[p];
            }
        }
    });

    Eigen::MatrixXd A(B, B);
    Eigen::VectorXd rhs(B);
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = i; j < B; ++j) {
            const double v = normal[i * B + j] / dP;
            A(i, j) = v;
            A(j, i) = v;
        }
        rhs(i) = normal[B * B + i] / dP;
    }
    A.diagonal().array() += basis.ridge;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    fit.cond = (lo > 0.0) ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(lo > 0.0) || fit.cond > 1e14) {
        if (basis.ridge <= 0.0) {
            std::ostringstream os;
            os << "fit_conditional: normal equations ill conditioned (cond=" << fit.cond
               << "); set ridge > 0";
            throw RegressionError(os.str());
        }
    }

    Eigen::VectorXd beta = A.ldlt().solve(rhs);
    if (!beta.allFinite()) throw RegressionError("fit_conditional: solve produced non-finite coefficients");
    fit.coeffs.assign(beta.data(), beta.data() + B);

    double ss = 0.0;
    blocked_accumulate(P, 1, &ss, [&](std::size_t pb, std::size_t pe, double* acc) {
        FeatureEval fe_local(n, basis.degree);
        std::vector<double> xs(n), phi(B);
        double s = 0.0;
        for (std::size_t p = pb; p < pe; ++p) {
            const double r = targets[p] - predict_impl(fit, fe_local, states.row(p), xs, phi);
            s += r * r;
        }
        acc[0] = s;
    });
    fit.residual_rms = std::sqrt(ss / dP);
    return fit;
}

void predict_all(const FitResult& fit, ConstMatrixView states, std::span<double> out) {
    if (out.size() != states.rows) throw InvalidArgument("predict_all: output size mismatch");
    parallel_for_blocks(states.rows, [&](std::size_t pb, std::size_t pe) {
        FeatureEval fe(fit.dim_x, fit.degree);
        std::vector<double> xs(fit.dim_x), phi(fe.size());
        for (std::size_t p = pb; p < pe; ++p)
            out[p] = predict_impl(fit, fe, states.row(p), xs, phi);
    });
}

AnticipatedAccumulator::AnticipatedAccumulator(const AnticipatedFunctional& functional,
                                               ConstMatrixView y_nodes,
                                               std::span<const double> node_times, double clamp_m)
    : functional_(functional), y_(y_nodes), times_(node_times), clamp_(clamp_m),
      current_(y_nodes.rows) {
    if (y_.rows != times_.size())
        throw InvalidArgument("AnticipatedAccumulator: node count mismatch");
    if (functional_.kind == AnticipatedFunctional::Kind::RunningSupAbs)
        acc_.assign(y_.cols, 0.0);
    else if (functional_.kind == AnticipatedFunctional::Kind::PathIntegral)
        acc_.assign(y_.cols, 0.0);
}

void AnticipatedAccumulator::push_node(std::size_t node) {
    if (!started_) {
        if (node + 1 != y_.rows)
            throw InvalidArgument("AnticipatedAccumulator: first push must be the horizon node");
        started_ = true;
    } else if (node + 1 != current_) {
        throw InvalidArgument("AnticipatedAccumulator: nodes must be pushed backward one by one");
    }
    current_ = node;
    const auto row = y_.row(node);
    const auto val = [&](double v) { return clamp_ > 0.0 ? truncate_value(v, clamp_) : v; };
    switch (functional_.kind) {
    case AnticipatedFunctional::Kind::RunningSupAbs:
        for (std::size_t p = 0; p < y_.cols; ++p)
            acc_[p] = std::max(acc_[p], std::abs(val(row[p])));
        break;
    case AnticipatedFunctional::Kind::PathIntegral:
        if (node + 1 < y_.rows) {
            const double dt = times_[node + 1] - times_[node];
            for (std::size_t p = 0; p < y_.cols; ++p) acc_[p] = val(row[p]) * dt + acc_[p];
        }
        break;
    default:
        break;
    }
}

double AnticipatedAccumulator::raw(std::size_t path) const {
    if (!started_) throw InvalidArgument("AnticipatedAccumulator: no node pushed yet");
    const auto val = [&](double v) { return clamp_ > 0.0 ? truncate_value(v, clamp_) : v; };
    switch (functional_.kind) {
    case AnticipatedFunctional::Kind::None:
        return 0.0;
    case AnticipatedFunctional::Kind::RunningSupAbs:
    case AnticipatedFunctional::Kind::PathIntegral:
        return acc_[path];
    case AnticipatedFunctional::Kind::DeferredValue: {
        const double target = std::min(times_[current_] + functional_.theta, times_.back());
        std::size_t best = current_;
        double best_d = std::abs(times_[current_] - target);
        for (std::size_t j = current_ + 1; j < times_.size(); ++j) {
            const double d = std::abs(times_[j] - target);
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        return val(y_.at(best, path));
    }
    case AnticipatedFunctional::Kind::CustomGrid: {
        const std::size_t len = y_.rows - current_;
        std::vector<double> tail(len);
        for (std::size_t j = 0; j < len; ++j) tail[j] = val(y_.at(current_ + j, path));
        return functional_.custom(tail, times_.subspan(current_, len));
    }
    }
    throw InvalidArgument("AnticipatedAccumulator: unknown functional kind");
}

AnticipatedEstimate estimate_anticipated(ConstMatrixView y_nodes, std::span<const double> node_times,
                                         std::size_t node, const AnticipatedFunctional& functional,
                                         ConstMatrixView states, const RegressionBasis& basis,
                                         double clamp_m) {
    if (node >= y_nodes.rows) throw InvalidArgument("estimate_anticipated: node out of range");
    const std::size_t P = y_nodes.cols;
    if (states.rows != P) throw InvalidArgument("estimate_anticipated: states/path count mismatch");

    AnticipatedEstimate est;
    est.raw.assign(P, 0.0);
    est.fitted.assign(P, 0.0);
    if (functional.kind == AnticipatedFunctional::Kind::None) {
        est.fit.constant_fit = true;
        est.fit.coeffs = {0.0};
        est.fit.cond = 1.0;
        return est;
    }
    AnticipatedAccumulator acc(functional, y_nodes, node_times, clamp_m);
    for (std::size_t j = y_nodes.rows; j-- > node;) acc.push_node(j);
    parallel_for_blocks(P, [&](std::size_t pb, std::size_t pe) {
        for (std::size_t p = pb; p < pe; ++p) est.raw[p] = acc.raw(p);
    });
    est.fit = fit_conditional(states, est.raw, basis);
    predict_all(est.fit, states, est.fitted);
    return est;
}

ZExtraction extract_Z(std::span<const double> y_next, ConstMatrixView dw, double dt,
                      ConstMatrixView states, const RegressionBasis& basis,
                      const FitResult* center) {
    const std::size_t P = states.rows;
    const std::size_t d = dw.cols;
    if (y_next.size() != P || dw.rows != P)
        throw InvalidArgument("extract_Z: size mismatch");
    if (!(dt > 0.0)) throw InvalidArgument("extract_Z: dt must be > 0");

    std::vector<double> centered(P);
    if (center) {
        predict_all(*center, states, centered);
        for (std::size_t p = 0; p < P; ++p) centered[p] = y_next[p] - centered[p];
    } else {
        for (std::size_t p = 0; p < P; ++p) centered[p] = y_next[p];
    }

    ZExtraction out;
    out.values.assign(P * d, 0.0);
    out.fits.reserve(d);
    std::vector<double> targets(P), fitted(P);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t p = 0; p < P; ++p) targets[p] = centered[p] * dw.at(p, j) / dt;
        FitResult fit = fit_conditional(states, targets, basis);
        predict_all(fit, states, fitted);
        for (std::size_t p = 0; p < P; ++p) out.values[p * d + j] = fitted[p];
        out.fits.push_back(std::move(fit));
    }
    return out;
}

std::vector<double> extract_psi(const FitResult& u_next, ConstMatrixView states,
                                const ForwardModel& model, const MarkMeasureSpec& marks, double t) {
    const std::size_t P = states.rows;
    const std::size_t Q = marks.n_marks();
    std::vector<double> psi(P * Q, 0.0);
    if (Q == 0) return psi;
    if (!model.jump) throw InvalidArgument("extract_psi: model has no jump coefficient");

    const auto& quad = marks.quadrature();
    parallel_for_blocks(P, [&](std::size_t pb, std::size_t pe) {
        FeatureEval fe(u_next.dim_x, u_next.degree);
        std::vector<double> xs(u_next.dim_x), phi(fe.size());
        std::vector<double> shift(model.dim_x), shifted(model.dim_x);
        for (std::size_t p = pb; p < pe; ++p) {
            const auto x = states.row(p);
            const double base = predict_impl(u_next, fe, x, xs, phi);
            for (std::size_t q = 0; q < Q; ++q) {
                model.jump(t, x, quad[q].component, quad[q].mark, shift);
                for (std::size_t k = 0; k < model.dim_x; ++k) shifted[k] = x[k] + shift[k];
                psi[p * Q + q] = predict_impl(u_next, fe, shifted, xs, phi) - base;
            }
        }
    });
    return psi;
}

} // namespace absde
