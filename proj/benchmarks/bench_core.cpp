#include <benchmark/benchmark.h>

#include "fimvar/bounds.hpp"
#include "fimvar/estimators.hpp"
#include "fimvar/rng.hpp"

using namespace fimvar;

namespace {

Vec random_input(std::size_t dim, Rng& rng) {
  Vec x(dim);
  for (auto& v : x) v = rng.normal();
  return x;
}

void BM_Derivatives(benchmark::State& state) {
  const auto width = static_cast<std::size_t>(state.range(0));
  const MlpNetwork net =
      MlpNetwork::random_init({8, width, width, 10}, Activation::Sigmoid, 1);
  Rng rng(2);
  const Vec x = random_input(8, rng);
  for (auto _ : state) benchmark::DoNotOptimize(net.derivatives(x));
}
BENCHMARK(BM_Derivatives)->Arg(16)->Arg(32)->Arg(64);

void BM_ExactConditional(benchmark::State& state) {
  const auto classes = static_cast<std::size_t>(state.range(0));
  const MlpNetwork net =
      MlpNetwork::random_init({8, 32, classes}, Activation::Sigmoid, 3);
  const NaturalParamHead head(Family::Categorical, classes);
  Rng rng(4);
  const Vec x = random_input(8, rng);
  for (auto _ : state) benchmark::DoNotOptimize(exact_conditional(net, head, x, 100));
}
BENCHMARK(BM_ExactConditional)->Arg(3)->Arg(10);

void BM_EstimateOne(benchmark::State& state) {
  const MlpNetwork net = MlpNetwork::random_init({8, 32, 10}, Activation::Sigmoid, 5);
  const NaturalParamHead head(Family::Categorical, 10);
  Rng rng(6);
  const Vec x = random_input(8, rng);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(estimate_one_conditional(net, head, x, n, ++seed));
}
BENCHMARK(BM_EstimateOne)->Arg(100)->Arg(1000);

void BM_JacobiEigenvalues(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(7);
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) m(i, j) = m(j, i) = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(sym_eigenvalues(m));
}
BENCHMARK(BM_JacobiEigenvalues)->Arg(10)->Arg(32)->Arg(100);

void BM_ZEigExtremes(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const NaturalParamHead head(Family::Categorical, t);
  Rng rng(8);
  Vec h(t);
  for (auto& v : h) v = rng.uniform(-2.0, 2.0);
  const MomentSet mom = moments(head, h);
  Tensor4 kernel = mom.k4;
  for (std::size_t a = 0; a < t; ++a)
    for (std::size_t b = 0; b < t; ++b)
      for (std::size_t c = 0; c < t; ++c)
        for (std::size_t d = 0; d < t; ++d)
          kernel.at(a, b, c, d) -= mom.fisher_h(a, b) * mom.fisher_h(c, d);
  for (auto _ : state) benchmark::DoNotOptimize(z_eig_extremes(kernel));
}
BENCHMARK(BM_ZEigExtremes)->Arg(3)->Arg(6)->Arg(10);

}  // namespace

BENCHMARK_MAIN();
