#include <benchmark/benchmark.h>

#include <vector>

#include "dopacast/evaluation.hpp"
#include "dopacast/preprocessing.hpp"
#include "dopacast/random.hpp"

using namespace dopacast;

namespace {

ImageGrid noise(Rng& rng, int n) {
  ImageGrid g(n, n);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  return g;
}

void BM_RoiWeightedSsim(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(1);
  const auto a = noise(rng, n);
  const auto b = noise(rng, n);
  ImageGrid w(n, n, 0.4F);
  for (int r = n / 4; r < 3 * n / 4; ++r)
    for (int c = n / 4; c < 3 * n / 4; ++c) w(r, c) = 1.0F;
  for (auto _ : state) benchmark::DoNotOptimize(roi_weighted_ssim(a, b, w));
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_RoiWeightedSsim)->Arg(64)->Arg(128);

void BM_AggregateRoi(benchmark::State& state) {
  Rng rng(2);
  std::vector<BinaryMask> masks;
  for (int k = 0; k < 14; ++k) {
    BinaryMask m(128, 128);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform() < 0.3 ? 1 : 0;
    masks.push_back(std::move(m));
  }
  for (auto _ : state) benchmark::DoNotOptimize(aggregate_roi(masks));
}
BENCHMARK(BM_AggregateRoi);

void BM_DilateBuffer(benchmark::State& state) {
  BinaryMask m(128, 128);
  for (int r = 50; r < 70; ++r)
    for (int c = 40; c < 60; ++c) m(r, c) = 1;
  for (auto _ : state) benchmark::DoNotOptimize(dilate_buffer(m));
}
BENCHMARK(BM_DilateBuffer);

}  // namespace
