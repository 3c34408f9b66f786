#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "dopacast/nn/diffusion.hpp"
#include "dopacast/nn/ledd_autoencoder.hpp"
#include "dopacast/nn/unet.hpp"
#include "dopacast/random.hpp"

namespace testing {

/// v that a perfect denoiser would emit when the clean image is `x0`:
/// v = (alpha * x_t - x0) / sigma.
inline dopacast::nn::VelocityModel perfect_v_stub(const torch::Tensor& x0, const dopacast::nn::NoiseSchedule& schedule) {
  return [x0, &schedule](const torch::Tensor& x_t, const torch::Tensor&, const torch::Tensor& t, const torch::Tensor&) {
    const auto a = schedule.alpha_at(t, x_t.scalar_type());
    const auto s = schedule.sigma_at(t, x_t.scalar_type());
    return (a * x_t - x0) / s;
  };
}

inline dopacast::nn::UNetConfig mini_unet_config() {
  dopacast::nn::UNetConfig c;
  c.channels = {4, 8};
  c.res_blocks = 1;
  c.groups = 2;
  c.treatment_dim = 4;
  return c;
}

inline dopacast::nn::EncoderConfig mini_encoder_config() {
  dopacast::nn::EncoderConfig c;
  c.hidden_dim = 8;
  c.latent_dim = 4;
  c.layers = 1;
  c.heads = 2;
  c.ffn_dim = 16;
  c.dropout = 0.0;
  return c;
}

/// Adds small noise to every parameter so zero-initialised heads pass gradients.
inline void jitter_parameters(torch::nn::Module& module, double scale, std::uint64_t seed) {
  torch::NoGradGuard guard;
  auto gen = at::detail::createCPUGenerator(seed);
  for (auto& p : module.parameters()) {
    p.add_(torch::randn(p.sizes(), gen, torch::TensorOptions().dtype(p.scalar_type())) * scale);
  }
}

struct GradCheck {
  int checked = 0;
  int failed = 0;
  double worst_relative = 0.0;
};

/// Central differences on `count` parameter entries drawn uniformly from all
/// parameters. An entry passes when |analytic - numeric| <= rel * max(|analytic|,
/// |numeric|) or both are below `abs_floor`.
inline GradCheck gradient_check(torch::nn::Module& module, const std::function<torch::Tensor()>& loss, int count,
                                std::uint64_t seed, double h = 1e-6, double rel = 1e-3, double abs_floor = 1e-9) {
  auto params = module.parameters();
  for (auto& p : params) p.mutable_grad() = torch::Tensor();
  loss().backward();
  std::vector<std::int64_t> sizes;
  std::int64_t total = 0;
  for (const auto& p : params) {
    sizes.push_back(p.numel());
    total += p.numel();
  }
  dopacast::Rng rng(seed);
  GradCheck out;
  torch::NoGradGuard guard;
  for (int i = 0; i < count; ++i) {
    std::int64_t flat = rng.uniform_int(0, total - 1);
    std::size_t which = 0;
    while (flat >= sizes[which]) flat -= sizes[which++];
    auto& p = params[which];
    auto view = p.view({-1});
    const double analytic = p.grad().defined() ? p.grad().view({-1})[flat].item<double>() : 0.0;
    const double orig = view[flat].item<double>();
    view[flat] = orig + h;
    const double up = loss().item<double>();
    view[flat] = orig - h;
    const double down = loss().item<double>();
    view[flat] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double diff = std::abs(analytic - numeric);
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    const bool ok = diff <= rel * scale || scale < abs_floor;
    if (scale >= abs_floor) out.worst_relative = std::max(out.worst_relative, diff / scale);
    ++out.checked;
    out.failed += ok ? 0 : 1;
  }
  return out;
}

}  // namespace testing
