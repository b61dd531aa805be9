// Serial reference kernels against their OpenMP counterparts.
// Arguments: number of samples L; window is 5x5 on 64x64 images.

#include <benchmark/benchmark.h>

#include <vector>

#include "caol/caol.hpp"
#include "caol/kernels.hpp"
#include "caol/random.hpp"

namespace {

using namespace caol;

struct Problem {
  std::vector<LiftedOperator> lifts;
  Matrix filters;
  std::vector<Matrix> codes;
};

const Problem& problem(std::size_t l) {
  static std::vector<std::pair<std::size_t, Problem>> cache;
  for (const auto& [size, p] : cache)
    if (size == l) return p;
  Rng rng = make_rng(1);
  std::vector<Signal> xs;
  for (std::size_t i = 0; i < l; ++i)
    xs.emplace_back(gaussian_matrix(rng, 64 * 64, 1).col(0), Geometry::grid(64, 64));
  Problem p;
  p.lifts = build_lifts(xs, OffsetPattern::window(5, 5));
  p.filters = random_orthogonal_filters(25, 25, 2).matrix();
  p.codes.resize(l);
  kernels::serial::analysis(p.lifts, p.filters, p.codes);
  cache.emplace_back(l, std::move(p));
  return cache.back().second;
}

template <Matrix (*Gram)(std::span<const LiftedOperator>)>
void BM_Gram(benchmark::State& state) {
  const Problem& p = problem(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(Gram(p.lifts));
}

template <Matrix (*Cross)(std::span<const LiftedOperator>, std::span<const Matrix>)>
void BM_Cross(benchmark::State& state) {
  const Problem& p = problem(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(Cross(p.lifts, p.codes));
}

template <void (*Threshold)(std::span<const LiftedOperator>, const Matrix&, double, std::span<Matrix>)>
void BM_Threshold(benchmark::State& state) {
  const Problem& p = problem(static_cast<std::size_t>(state.range(0)));
  std::vector<Matrix> out(p.lifts.size());
  for (auto _ : state) {
    Threshold(p.lifts, p.filters, 1e-3, out);
    benchmark::ClobberMemory();
  }
}

template <double (*Residual)(std::span<const LiftedOperator>, const Matrix&, std::span<const Matrix>)>
void BM_Residual(benchmark::State& state) {
  const Problem& p = problem(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(Residual(p.lifts, p.filters, p.codes));
}

}  // namespace

BENCHMARK(BM_Gram<kernels::serial::gram_sum>)->Name("gram/serial")->Arg(4)->Arg(16);
BENCHMARK(BM_Gram<kernels::parallel::gram_sum>)->Name("gram/parallel")->Arg(4)->Arg(16);
BENCHMARK(BM_Cross<kernels::serial::cross_sum>)->Name("cross/serial")->Arg(4)->Arg(16);
BENCHMARK(BM_Cross<kernels::parallel::cross_sum>)->Name("cross/parallel")->Arg(4)->Arg(16);
BENCHMARK(BM_Threshold<kernels::serial::threshold_codes>)->Name("threshold/serial")->Arg(4)->Arg(16);
BENCHMARK(BM_Threshold<kernels::parallel::threshold_codes>)->Name("threshold/parallel")->Arg(4)->Arg(16);
BENCHMARK(BM_Residual<kernels::serial::residual_energy>)->Name("residual/serial")->Arg(4)->Arg(16);
BENCHMARK(BM_Residual<kernels::parallel::residual_energy>)->Name("residual/parallel")->Arg(4)->Arg(16);

BENCHMARK_MAIN();
