// Serial vs OpenMP kernels at the suite's 50k x 128 scale.

#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "embmark/kernels.hpp"
#include "embmark/rng.hpp"

namespace k = embmark::kernels;

namespace {

constexpr std::size_t kRows = 50'000;
constexpr std::size_t kDim = 128;

const std::vector<float>& matrix() {
  static const std::vector<float> m = [] {
    embmark::CounterRng rng(1);
    std::vector<float> out(kRows * kDim);
    for (float& x : out) x = static_cast<float>(rng.normal());
    return out;
  }();
  return m;
}

const std::vector<std::string>& documents() {
  static const std::vector<std::string> docs = [] {
    embmark::CounterRng rng(2);
    std::vector<std::string> out(2'000);
    for (auto& doc : out)
      for (int w = 0; w < 500; ++w) doc += "w" + std::to_string(rng.below(5'000)) + " ";
    return out;
  }();
  return docs;
}

template <auto Fn>
void BM_RowDots(benchmark::State& state) {
  const std::vector<double> query(kDim, 0.5);
  std::vector<double> out(kRows);
  for (auto _ : state) {
    Fn(matrix(), kDim, query, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Mean, auto Cov>
void BM_Covariance(benchmark::State& state) {
  for (auto _ : state) {
    const auto mean = Mean(matrix(), kDim);
    benchmark::DoNotOptimize(Cov(matrix(), kDim, mean));
  }
}

template <auto MaxAbs, auto Quantize>
void BM_Quantize(benchmark::State& state) {
  std::vector<float> out(matrix().size());
  for (auto _ : state) {
    Quantize(matrix(), MaxAbs(matrix()) / 127.0, 127, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Fn>
void BM_CountTokens(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(Fn(documents()));
}

}  // namespace

BENCHMARK(BM_RowDots<k::serial::row_dots>)->Name("row_dots/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RowDots<k::parallel::row_dots>)->Name("row_dots/parallel")->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Covariance<k::serial::column_mean, k::serial::covariance>)
    ->Name("covariance/serial")
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Covariance<k::parallel::column_mean, k::parallel::covariance>)
    ->Name("covariance/parallel")
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();
BENCHMARK(BM_Quantize<k::serial::max_abs, k::serial::quantize>)->Name("quantize/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Quantize<k::parallel::max_abs, k::parallel::quantize>)
    ->Name("quantize/parallel")
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();
BENCHMARK(BM_CountTokens<k::serial::count_tokens>)->Name("count_tokens/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CountTokens<k::parallel::count_tokens>)
    ->Name("count_tokens/parallel")
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

int main(int argc, char** argv) {
  matrix();
  documents();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
