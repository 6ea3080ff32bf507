// Micro-benchmarks for the hot paths: forward simulation, conditional
// regression, one backward sweep, full norm estimation.

#include <benchmark/benchmark.h>

#include "absde/norms.hpp"
#include "absde/regression.hpp"
#include "absde/scenarios.hpp"
#include "absde/simulate.hpp"
#include "absde/solver.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

using namespace absde;

namespace {

ForwardModel brownian() {
    return ForwardModel::scalar([](double, double) { return 0.0; },
                                [](double, double) { return 1.0; }, {}, 1.0);
}

} // namespace

static void BM_SimulatePaths(benchmark::State& state) {
    const std::size_t paths = std::size_t(state.range(0));
    Scenario sc = make_scenario("entropic");
    TimeGrid g = TimeGrid::uniform(1.0, 50);
    for (auto _ : state) {
        PathBundle b = simulate_paths(sc.model, sc.marks, g, sc.default_start, paths, 1);
        benchmark::DoNotOptimize(b.state(g.n_nodes() - 1, 0).data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(paths) * 50);
}
BENCHMARK(BM_SimulatePaths)->Arg(4096)->Arg(32768);

static void BM_FitConditional(benchmark::State& state) {
    const std::size_t paths = std::size_t(state.range(0));
    TimeGrid g = TimeGrid::uniform(1.0, 2);
    PathBundle b = simulate_paths(brownian(), MarkMeasureSpec::none(), g, {0.0, {0.0}}, paths, 2);
    ConstMatrixView xs = b.states(1);
    std::vector<double> targets(paths);
    for (std::size_t p = 0; p < paths; ++p) {
        const double x = xs.row(p)[0];
        targets[p] = std::sin(x) + 0.1 * x * x;
    }
    RegressionBasis basis{5, 1e-8};
    for (auto _ : state) {
        FitResult fit = fit_conditional(xs, targets, basis);
        benchmark::DoNotOptimize(fit.coeffs.data());
    }
    state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(paths));
}
BENCHMARK(BM_FitConditional)->Arg(4096)->Arg(65536);

static void BM_BackwardSolve(benchmark::State& state) {
    const std::size_t paths = std::size_t(state.range(0));
    Scenario sc = make_scenario("linear_y");
    TimeGrid g = TimeGrid::uniform(1.0, 25);
    PathBundle b = simulate_paths(sc.model, sc.marks, g, sc.default_start, paths, 3);
    for (auto _ : state) {
        SolveResult res =
            solve_lipschitz_absde(b, sc.model, sc.marks, sc.drivers[0], sc.default_config);
        benchmark::DoNotOptimize(res.solution.y_start());
    }
}
BENCHMARK(BM_BackwardSolve)->Arg(4096)->Arg(16384)->Unit(benchmark::kMillisecond);

static void BM_EstimateNorms(benchmark::State& state) {
    const std::size_t paths = std::size_t(state.range(0));
    Scenario sc = make_scenario("entropic");
    TimeGrid g = TimeGrid::uniform(1.0, 25);
    PathBundle b = simulate_paths(sc.model, sc.marks, g, sc.default_start, paths, 4);
    QexpSolveResult res =
        solve_qexp_absde(b, sc.model, sc.marks, sc.drivers[0], sc.default_config);
    for (auto _ : state) {
        NormReport r = estimate_norms(res.solution, b, sc.marks, NormConfig{});
        benchmark::DoNotOptimize(r.s_inf);
    }
}
BENCHMARK(BM_EstimateNorms)->Arg(8192)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
