// Forward ensemble: grid, streams, Euler step, jump compensation, replay.

#include <doctest.h>

#include "absde/errors.hpp"
#include "absde/forward_model.hpp"
#include "absde/marks.hpp"
#include "absde/rng.hpp"
#include "absde/simulate.hpp"
#include "absde/time_grid.hpp"

#include <cmath>
#include <numbers>
#include <vector>

using namespace absde;

namespace {

ForwardModel brownian() {
    return ForwardModel::scalar([](double, double) { return 0.0; },
                                [](double, double) { return 1.0; }, {}, 1.0);
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

template <typename F> MeanSe mc_stat(std::size_t n, F value) {
    double s = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = value(i);
        s += v;
        ss += v * v;
    }
    const double mean = s / static_cast<double>(n);
    const double var = std::max(0.0, ss / static_cast<double>(n) - mean * mean);
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

} // namespace

TEST_CASE("uniform grid arithmetic") {
    TimeGrid g = TimeGrid::uniform(2.0, 8);
    CHECK(g.n_steps() == 8);
    CHECK(g.n_nodes() == 9);
    CHECK(g.horizon() == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(g.t(0) == 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < g.n_steps(); ++i) sum += g.dt(i);
    CHECK(sum == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(g.node_at(0.5) == 2);
    CHECK(g.node_at(2.0) == 8);
    CHECK_THROWS_AS(g.node_at(0.3), InvalidArgument);
    CHECK(g.nearest_node(0.3) == 1);
    CHECK(g.nearest_node(-5.0) == 0);
    CHECK(g.nearest_node(99.0) == 8);
    CHECK_THROWS_AS(TimeGrid(std::vector<double>{0.0, 0.5, 0.5}), InvalidArgument);
}

TEST_CASE("stream generator is deterministic and seed-decorrelated") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    // Different seeds must diverge immediately.
    CHECK(Rng(1).next_u64() != Rng(2).next_u64());
    CHECK(derive_stream_seed(7, 0) != derive_stream_seed(7, 1));
    CHECK(derive_stream_seed(7, 0) != derive_stream_seed(8, 0));
    (void)c;
}

TEST_CASE("normal and poisson draws match their first two moments") {
    Rng r(99);
    MeanSe n = mc_stat(200000, [&](std::size_t) { return r.next_normal(); });
    CHECK(std::abs(n.mean) <= 4.0 * n.se);
    Rng r2(123);
    MeanSe sq = mc_stat(200000, [&](std::size_t) {
        const double v = r2.next_normal();
        return v * v;
    });
    CHECK(std::abs(sq.mean - 1.0) <= 4.0 * sq.se);
    Rng r3(7);
    MeanSe pois = mc_stat(100000, [&](std::size_t) { return double(r3.next_poisson(2.0)); });
    CHECK(std::abs(pois.mean - 2.0) <= 4.0 * pois.se);
}

TEST_CASE("mark measure quadrature and validation") {
    MarkMeasureSpec marks = MarkMeasureSpec::discrete({{{0.4, 0.6}, {1.0, 0.4}}});
    CHECK(marks.n_components() == 1);
    CHECK(marks.n_marks() == 2);
    CHECK(marks.total_intensity() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(marks.fully_atomic());
    // sum_q w_q psi_q^2 against a hand computation.
    std::vector<double> psi{2.0, -3.0};
    CHECK(marks.l2_nu_sq(psi) == doctest::Approx(0.6 * 4.0 + 0.4 * 9.0).epsilon(1e-15));
    CHECK(marks.nearest_quad_index(0, 0.4) == 0);
    CHECK(marks.nearest_quad_index(0, 1.0) == 1);
    CHECK(marks.nearest_quad_index(0, 0.95) == 1);
    CHECK(MarkMeasureSpec::none().empty());
    // Atoms at the origin or with nonpositive weight violate the contract.
    CHECK_THROWS_AS(MarkMeasureSpec::discrete({{{0.0, 1.0}}}), InvalidArgument);
    CHECK_THROWS_AS(MarkMeasureSpec::discrete({{{0.5, 0.0}}}), InvalidArgument);
    // Atom draws follow the weights.
    Rng r(11);
    std::size_t hits = 0;
    const std::size_t n = 50000;
    for (std::size_t i = 0; i < n; ++i)
        if (marks.sample_atom(0, r) == 0) ++hits;
    const double p = double(hits) / double(n);
    CHECK(std::abs(p - 0.6) <= 4.0 * std::sqrt(0.6 * 0.4 / double(n)));
}

TEST_CASE("Brownian ensemble matches terminal and running-sup moments") {
    TimeGrid g = TimeGrid::uniform(1.0, 400);
    PathBundle b = simulate_paths(brownian(), MarkMeasureSpec::none(), g, {0.0, {0.0}}, 40000, 7);

    const std::size_t last = g.n_nodes() - 1;
    MeanSe terminal = mc_stat(b.n_paths(), [&](std::size_t p) { return b.states(last).at(p, 0); });
    CHECK(std::abs(terminal.mean) <= 4.0 * terminal.se);
    MeanSe var = mc_stat(b.n_paths(), [&](std::size_t p) {
        const double v = b.states(last).at(p, 0);
        return v * v;
    });
    CHECK(std::abs(var.mean - 1.0) <= 4.0 * var.se);

    // E[sup W] = sqrt(2/pi) in continuous time; the discrete-grid sup sits
    // below it by about 0.5826 * sqrt(dt) (continuity correction), so bracket
    // the estimate between the corrected value and the continuous one.
    MeanSe sup = mc_stat(b.n_paths(), [&](std::size_t p) {
        double m = 0.0;
        for (std::size_t i = 0; i <= last; ++i) m = std::max(m, b.states(i).at(p, 0));
        return m;
    });
    const double cont = std::sqrt(2.0 / std::numbers::pi);
    const double corrected = cont - 0.5826 * std::sqrt(g.dt(0));
    CHECK(sup.mean <= cont + 4.0 * sup.se);
    CHECK(sup.mean >= corrected - 4.0 * sup.se - 0.01);
}

TEST_CASE("compensated jumps leave the mean at the start and set the variance") {
    // Pure jump model, amplitude equal to the mark, no drift or diffusion.
    ForwardModel model = ForwardModel::scalar([](double, double) { return 0.0; },
                                              [](double, double) { return 0.0; },
                                              [](double, double, double e) { return e; }, 1.0);
    MarkMeasureSpec marks = MarkMeasureSpec::discrete({{{0.4, 0.6}, {1.0, 0.4}}});
    TimeGrid g = TimeGrid::uniform(1.0, 100);
    PathBundle b = simulate_paths(model, marks, g, {0.0, {2.0}}, 40000, 21);

    const std::size_t last = g.n_nodes() - 1;
    MeanSe mean = mc_stat(b.n_paths(), [&](std::size_t p) { return b.states(last).at(p, 0); });
    CHECK(std::abs(mean.mean - 2.0) <= 4.0 * mean.se);

    // Isometry of the compensated jump integral: Var = T * sum w e^2.
    const double target = 0.6 * 0.16 + 0.4 * 1.0;
    MeanSe var = mc_stat(b.n_paths(), [&](std::size_t p) {
        const double v = b.states(last).at(p, 0) - 2.0;
        return v * v;
    });
    CHECK(std::abs(var.mean - target) <= 4.0 * var.se);
    CHECK(b.n_events() > 0);
}

TEST_CASE("path p is invariant under the ensemble size") {
    TimeGrid g = TimeGrid::uniform(1.0, 20);
    MarkMeasureSpec marks = MarkMeasureSpec::discrete({{{0.5, 1.0}}});
    ForwardModel model = ForwardModel::scalar([](double, double x) { return -0.1 * x; },
                                              [](double, double) { return 1.0; },
                                              [](double, double, double e) { return e; }, 1.0);
    PathBundle small = simulate_paths(model, marks, g, {0.0, {1.0}}, 64, 5);
    PathBundle big = simulate_paths(model, marks, g, {0.0, {1.0}}, 4096, 5);
    for (std::size_t i = 0; i < g.n_nodes(); ++i)
        for (std::size_t p = 0; p < small.n_paths(); p += 13)
            CHECK(small.states(i).at(p, 0) == big.states(i).at(p, 0));
    for (std::size_t p = 0; p < small.n_paths(); p += 17) {
        REQUIRE(small.events(p).size() == big.events(p).size());
        for (std::size_t k = 0; k < small.events(p).size(); ++k) {
            CHECK(small.events(p)[k].step == big.events(p)[k].step);
            CHECK(small.events(p)[k].mark == big.events(p)[k].mark);
        }
    }
}

TEST_CASE("frozen prefix and shared noise across start times") {
    TimeGrid g = TimeGrid::uniform(1.0, 50);
    PathBundle from0 = simulate_paths(brownian(), MarkMeasureSpec::none(), g, {0.0, {1.5}}, 256, 9);
    PathBundle fromHalf =
        simulate_paths(brownian(), MarkMeasureSpec::none(), g, {0.5, {1.5}}, 256, 9);

    const std::size_t mid = g.node_at(0.5);
    CHECK(fromHalf.start_node() == mid);
    for (std::size_t i = 0; i <= mid; ++i)
        for (std::size_t p = 0; p < 256; p += 31) CHECK(fromHalf.states(i).at(p, 0) == 1.5);
    // Identical master seed means identical driving noise regardless of the
    // start.
    for (std::size_t i = 0; i < g.n_steps(); i += 7)
        for (std::size_t p = 0; p < 256; p += 63)
            CHECK(from0.increments(i).at(p, 0) == fromHalf.increments(i).at(p, 0));
    // Off-grid starts are a precondition error.
    CHECK_THROWS_AS(
        simulate_paths(brownian(), MarkMeasureSpec::none(), g, {0.513, {1.5}}, 16, 9),
        InvalidArgument);
}

TEST_CASE("replay reproduces the stored states exactly") {
    TimeGrid g = TimeGrid::uniform(1.0, 30);
    MarkMeasureSpec marks = MarkMeasureSpec::discrete({{{0.4, 0.6}, {1.0, 0.4}}});
    ForwardModel model = ForwardModel::scalar([](double t, double x) { return 0.1 * x + t; },
                                              [](double, double x) { return 1.0 + 0.1 * x * x / (1.0 + x * x); },
                                              [](double, double, double e) { return e; }, 2.0);
    PathBundle b = simulate_paths(model, marks, g, {0.0, {0.5}}, 512, 33);
    CHECK(replay_max_deviation(b, model, marks) == 0.0);
    // A perturbed state must be detected.
    b.state_mut(5, 7)[0] += 1e-9;
    CHECK(replay_max_deviation(b, model, marks) > 0.0);
}

TEST_CASE("declared Lipschitz constants are probed against finite differences") {
    MarkMeasureSpec marks = MarkMeasureSpec::discrete({{{0.4, 0.6}, {1.0, 0.4}}});
    ForwardModel ok = ForwardModel::scalar([](double, double x) { return -x; },
                                           [](double, double) { return 1.0; },
                                           [](double, double, double e) { return e; }, 1.0);
    LipschitzProbeReport good = lipschitz_probe_check(ok, marks, 1.0, 3.0, 200, 17);
    CHECK(good.pass);
    CHECK(good.max_drift_ratio <= 1.0 + 1e-9);

    ForwardModel bad = ok;
    bad.drift = [](double, std::span<const double> x, std::span<double> out) { out[0] = -3.0 * x[0]; };
    LipschitzProbeReport caught = lipschitz_probe_check(bad, marks, 1.0, 3.0, 200, 17);
    CHECK_FALSE(caught.pass);
    CHECK(caught.max_drift_ratio > 2.0);
}
