#include <benchmark/benchmark.h>

#include <random>

#include "openresp/providers.hpp"
#include "openresp/similarity.hpp"

using namespace openresp;

static std::vector<double> random_vector(std::mt19937_64& rng, std::size_t dim) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(dim);
    for (auto& x : v) x = u(rng);
    return v;
}

static void BM_CanberraDistance(benchmark::State& state) {
    std::mt19937_64 rng(1);
    const auto dim = static_cast<std::size_t>(state.range(0));
    const auto a = random_vector(rng, dim), b = random_vector(rng, dim);
    for (auto _ : state) benchmark::DoNotOptimize(canberra_distance(a, b));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CanberraDistance)->Arg(16)->Arg(384)->Arg(768);

static void BM_NearestInPool(benchmark::State& state) {
    std::mt19937_64 rng(2);
    const std::size_t dim = 384;
    const auto n = static_cast<std::size_t>(state.range(0));
    std::map<std::string, std::vector<IndexEntry>> pools;
    for (std::size_t i = 0; i < n; ++i) {
        pools["p"].push_back({"r" + std::to_string(i), {random_vector(rng, dim)}, static_cast<int>(i % 5), "fb"});
    }
    const auto index = SimilarityIndex::from_entries("bench", dim, pools);
    const EmbeddingVector query{random_vector(rng, dim)};
    for (auto _ : state) benchmark::DoNotOptimize(index.nearest("p", query));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NearestInPool)->Arg(100)->Arg(500)->Arg(2000);

BENCHMARK_MAIN();
