#include "dopacast/nn/diffusion.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "dopacast/errors.hpp"
#include "dopacast/io.hpp"

namespace dopacast::nn {

double NoiseSchedule::snr(int t) const {
  const double s = sigmas.at(static_cast<std::size_t>(t));
  const double a = alphas.at(static_cast<std::size_t>(t));
  if (s == 0.0) return std::numeric_limits<double>::infinity();
  return (a * a) / (s * s);
}

namespace {

torch::Tensor gather(const std::vector<double>& table, const torch::Tensor& t, torch::ScalarType dtype) {
  auto all = torch::tensor(table, torch::TensorOptions().dtype(torch::kFloat64));
  auto picked = all.index_select(0, t.to(torch::kLong).reshape({-1}).cpu());
  return picked.to(dtype).to(t.device()).reshape({-1, 1, 1, 1});
}

}  // namespace

torch::Tensor NoiseSchedule::alpha_at(const torch::Tensor& t, torch::ScalarType dtype) const {
  return gather(alphas, t, dtype);
}

torch::Tensor NoiseSchedule::sigma_at(const torch::Tensor& t, torch::ScalarType dtype) const {
  return gather(sigmas, t, dtype);
}

NoiseSchedule make_schedule(int T) {
  if (T < 2) throw std::invalid_argument("make_schedule: T must be >= 2, got " + std::to_string(T));
  constexpr double kOffset = 0.008;
  auto f = [T](double t) {
    const double c = std::cos((t / T + kOffset) / (1.0 + kOffset) * std::numbers::pi / 2.0);
    return c * c;
  };
  NoiseSchedule s;
  s.T = T;
  s.alphas.resize(static_cast<std::size_t>(T) + 1);
  s.sigmas.resize(static_cast<std::size_t>(T) + 1);
  const double f0 = f(0.0);
  for (int t = 0; t <= T; ++t) s.alphas[static_cast<std::size_t>(t)] = std::sqrt(f(t) / f0);
  // Shift-and-scale so that alpha_T = 0 while alpha_0 keeps its value.
  const double a0 = s.alphas.front();
  const double aT = s.alphas.back();
  for (auto& a : s.alphas) a = (a - aT) * a0 / (a0 - aT);
  s.alphas.back() = 0.0;
  for (std::size_t i = 0; i < s.alphas.size(); ++i) s.sigmas[i] = std::sqrt(std::max(0.0, 1.0 - s.alphas[i] * s.alphas[i]));
  return s;
}

std::string schedule_csv(const NoiseSchedule& schedule) {
  std::string out = "t,alpha,sigma\n";
  char buf[96];
  for (int t = 0; t <= schedule.T; ++t) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", t, schedule.alphas[static_cast<std::size_t>(t)],
                  schedule.sigmas[static_cast<std::size_t>(t)]);
    out += buf;
  }
  return out;
}

std::string schedule_hash(const NoiseSchedule& schedule) { return fnv1a_hex(schedule_csv(schedule)); }

void check_timesteps(const torch::Tensor& t, const NoiseSchedule& schedule) {
  if (t.numel() == 0) return;
  const auto lo = t.min().item<std::int64_t>();
  const auto hi = t.max().item<std::int64_t>();
  if (lo < 0 || hi > schedule.T) {
    throw std::invalid_argument("timestep outside [0, " + std::to_string(schedule.T) + "]: got range [" +
                                std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

torch::Tensor q_sample(const torch::Tensor& x0, const torch::Tensor& t, const torch::Tensor& eps,
                       const NoiseSchedule& schedule) {
  if (!x0.sizes().equals(eps.sizes())) throw std::invalid_argument("q_sample: x0 and eps shapes differ");
  check_timesteps(t, schedule);
  return schedule.alpha_at(t, x0.scalar_type()) * x0 + schedule.sigma_at(t, x0.scalar_type()) * eps;
}

torch::Tensor velocity_target(const torch::Tensor& x0, const torch::Tensor& eps, const torch::Tensor& t,
                              const NoiseSchedule& schedule) {
  if (!x0.sizes().equals(eps.sizes())) throw std::invalid_argument("velocity_target: x0 and eps shapes differ");
  check_timesteps(t, schedule);
  return schedule.alpha_at(t, x0.scalar_type()) * eps - schedule.sigma_at(t, x0.scalar_type()) * x0;
}

X0Eps x0_and_eps_from_v(const torch::Tensor& x_t, const torch::Tensor& v, const torch::Tensor& t,
                        const NoiseSchedule& schedule) {
  if (!x_t.sizes().equals(v.sizes())) throw std::invalid_argument("x0_and_eps_from_v: x_t and v shapes differ");
  check_timesteps(t, schedule);
  const auto a = schedule.alpha_at(t, x_t.scalar_type());
  const auto s = schedule.sigma_at(t, x_t.scalar_type());
  return {a * x_t - s * v, s * x_t + a * v};
}

std::vector<int> sampling_timesteps(int T, int steps) {
  if (steps < 1 || steps > T) throw std::invalid_argument("sampling steps must lie in [1, T]");
  std::vector<int> ts;
  ts.reserve(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) {
    ts.push_back(static_cast<int>(std::lround(T - static_cast<double>(i) * T / steps)));
  }
  return ts;
}

torch::Tensor initial_noise(const std::vector<int64_t>& shape, std::uint64_t seed, torch::ScalarType dtype) {
  auto gen = at::detail::createCPUGenerator(seed);
  return torch::randn(shape, gen, torch::TensorOptions().dtype(dtype));
}

torch::Tensor sample(const VelocityModel& model, const torch::Tensor& condition, const torch::Tensor& treatment,
                     const NoiseSchedule& schedule, const SampleOptions& options, std::uint64_t seed) {
  if (condition.dim() != 4 || condition.size(1) != 1) {
    throw std::invalid_argument("sample: condition must be shaped [B, 1, H, W]");
  }
  torch::NoGradGuard no_grad;
  const auto dtype = condition.scalar_type();
  const auto device = condition.device();
  auto gen = at::detail::createCPUGenerator(seed);
  auto x = torch::randn(condition.sizes(), gen, torch::TensorOptions().dtype(dtype)).to(device);
  const auto ts = sampling_timesteps(schedule.T, options.steps);
  const auto B = condition.size(0);
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    const int t = ts[i];
    const int tn = ts[i + 1];
    auto tt = torch::full({B}, t, torch::TensorOptions().dtype(torch::kLong).device(device));
    auto v = model(x, condition, tt, treatment);
    if (!v.sizes().equals(x.sizes())) throw std::invalid_argument("sample: model output shape differs from input");
    if (!torch::isfinite(v).all().item<bool>()) {
      throw NumericError("sample: model produced non-finite output at t = " + std::to_string(t));
    }
    auto [x0, eps] = x0_and_eps_from_v(x, v, tt, schedule);
    if (options.clamp_x0) {
      x0 = x0.clamp(-1.0, 1.0);
      // Keep eps consistent with the clamped x0 so the update stays on the (x0, eps) chart.
      const double a = schedule.alphas[static_cast<std::size_t>(t)];
      const double s = schedule.sigmas[static_cast<std::size_t>(t)];
      if (s > 0.0 && a > 0.0) eps = (x - a * x0) / s;
    }
    const double an = schedule.alphas[static_cast<std::size_t>(tn)];
    const double sn = schedule.sigmas[static_cast<std::size_t>(tn)];
    if (options.eta > 0.0 && tn > 0) {
      const double a = schedule.alphas[static_cast<std::size_t>(t)];
      const double s = schedule.sigmas[static_cast<std::size_t>(t)];
      const double ratio = an > 0.0 ? a / an : 0.0;
      const double c = options.eta * (sn / s) * std::sqrt(std::max(0.0, 1.0 - ratio * ratio));
      const double keep = std::sqrt(std::max(0.0, sn * sn - c * c));
      auto z = torch::randn(x.sizes(), gen, torch::TensorOptions().dtype(dtype)).to(device);
      x = an * x0 + keep * eps + c * z;
    } else {
      x = an * x0 + sn * eps;
    }
  }
  return x;
}

Ema::Ema(const std::vector<torch::Tensor>& params, double decay) : decay_(decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) throw std::invalid_argument("EMA decay must lie in [0, 1]");
  shadow_.reserve(params.size());
  for (const auto& p : params) shadow_.push_back(p.detach().clone());
}

void Ema::update(const std::vector<torch::Tensor>& params) {
  if (params.size() != shadow_.size()) throw std::invalid_argument("EMA: parameter count mismatch");
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].sizes().equals(shadow_[i].sizes())) {
      throw std::invalid_argument("EMA: shape mismatch at parameter " + std::to_string(i));
    }
    shadow_[i].mul_(decay_).add_(params[i].detach(), 1.0 - decay_);
  }
  ++updates_;
}

void Ema::copy_to(const std::vector<torch::Tensor>& params) const {
  if (params.size() != shadow_.size()) throw std::invalid_argument("EMA: parameter count mismatch");
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(shadow_[i]);
}

}  // namespace dopacast::nn
