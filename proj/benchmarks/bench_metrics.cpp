#include <benchmark/benchmark.h>

#include <random>

#include "openresp/metrics.hpp"

using namespace openresp;

namespace {

std::pair<std::vector<int>, std::vector<int>> labels(std::size_t n) {
    std::mt19937_64 rng(n);
    std::vector<int> pred(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
        truth[i] = static_cast<int>(i % 5);
        pred[i] = rng() % 2 ? truth[i] : static_cast<int>(rng() % 5);
    }
    return {pred, truth};
}

} // namespace

static void BM_MacroAuc(benchmark::State& state) {
    const auto [pred, truth] = labels(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(macro_ovr_auc(pred, truth));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MacroAuc)->Arg(100)->Arg(1000)->Arg(100000);

static void BM_CohenKappa(benchmark::State& state) {
    const auto [pred, truth] = labels(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(cohen_kappa(pred, truth));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CohenKappa)->Arg(100)->Arg(1000)->Arg(100000);

static void BM_Rmse(benchmark::State& state) {
    const auto [pred, truth] = labels(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(rmse(pred, truth));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Rmse)->Arg(1000)->Arg(100000);

BENCHMARK_MAIN();
