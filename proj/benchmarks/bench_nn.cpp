#include <benchmark/benchmark.h>

#include "dopacast/nn/diffusion.hpp"
#include "dopacast/nn/pipeline.hpp"
#include "dopacast/nn/unet.hpp"

using namespace dopacast::nn;

namespace {

UNet toy_net() {
  torch::manual_seed(0);
  UNet net(toy_config().unet);
  net->eval();
  return net;
}

void BM_UNetForward(benchmark::State& state) {
  torch::NoGradGuard ng;
  auto net = toy_net();
  const auto b = state.range(0);
  const int side = static_cast<int>(state.range(1));
  const auto x = torch::randn({b, 1, side, side});
  const auto t = torch::full({b}, 500, torch::kLong);
  const auto r = torch::randn({b, net->config().treatment_dim});
  for (auto _ : state) benchmark::DoNotOptimize(net->forward(x, x, t, r));
}
BENCHMARK(BM_UNetForward)->Args({1, 64})->Args({16, 64})->Unit(benchmark::kMillisecond);

void BM_SamplerStep(benchmark::State& state) {
  torch::NoGradGuard ng;
  auto net = toy_net();
  const auto schedule = make_schedule(1000);
  const auto fn = velocity_model(net);
  const auto cond = torch::randn({16, 1, 64, 64});
  const auto r = torch::randn({16, net->config().treatment_dim});
  const SampleOptions one_step{1, 0.0, true};
  for (auto _ : state) benchmark::DoNotOptimize(sample(fn, cond, r, schedule, one_step, 7));
}
BENCHMARK(BM_SamplerStep)->Unit(benchmark::kMillisecond);

void BM_ScheduleBuild(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(make_schedule(1000));
}
BENCHMARK(BM_ScheduleBuild);

}  // namespace
