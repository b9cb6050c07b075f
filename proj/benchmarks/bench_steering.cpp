#include <random>

#include <benchmark/benchmark.h>

#include "conva/probe_trainer.hpp"
#include "conva/steering.hpp"

namespace {

std::vector<double> gaussian(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(d);
  for (auto& x : v) x = n(rng);
  return v;
}

// One layer of a forward pass: every position of a prompt.
void BM_SteerBatch(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto positions = static_cast<std::size_t>(state.range(1));
  std::mt19937_64 rng(1);
  conva::ValueProbe probe{"v", 0, gaussian(rng, d), 0.1, 1.0, 1.0};
  const auto v = conva::probe::value_vector(probe);
  std::vector<std::vector<double>> batch;
  for (std::size_t i = 0; i < positions; ++i) batch.push_back(gaussian(rng, d));
  for (auto _ : state) {
    auto r = conva::steer::steer_layer_batch(probe, v, batch, 0.975, true);
    benchmark::DoNotOptimize(r);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * positions));
}
BENCHMARK(BM_SteerBatch)->Args({4096, 1})->Args({4096, 64})->Args({8192, 64});

void BM_GateClosed(benchmark::State& state) {
  const std::size_t d = 4096;
  std::mt19937_64 rng(2);
  conva::ValueProbe probe{"v", 0, gaussian(rng, d), 0.1, 1.0, 1.0};
  const auto v = conva::probe::value_vector(probe);
  const auto e = gaussian(rng, d);
  for (auto _ : state) {
    auto r = conva::steer::steer(probe, v, e, 0.975, false);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_GateClosed);

}  // namespace
