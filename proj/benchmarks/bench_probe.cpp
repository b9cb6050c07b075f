#include <random>

#include <benchmark/benchmark.h>

#include "conva/probe_trainer.hpp"

namespace {

// Fit cost for one layer of a 100-pair corpus.
void BM_FitProbe(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const std::size_t n = 200;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(n * d);
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<std::uint8_t>(i % 2);
    for (std::size_t j = 0; j < d; ++j) x[i * d + j] = g(rng);
    x[i * d] += y[i] ? 2.0 : -2.0;
  }
  const conva::probe::LabeledMatrix data(std::span<const double>(x), y, d);
  conva::probe::TrainConfig config;
  config.max_iterations = 200;
  for (auto _ : state) {
    auto p = conva::probe::fit_probe(data, config);
    benchmark::DoNotOptimize(p);
  }
}
BENCHMARK(BM_FitProbe)->Arg(64)->Arg(1024)->Unit(benchmark::kMillisecond);

}  // namespace
