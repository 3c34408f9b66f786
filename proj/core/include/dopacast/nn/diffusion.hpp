#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace dopacast::nn {

/// Variance-preserving schedule; index 0 is the clean image, index T pure noise.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> alphas;  // signal coefficient, T + 1 entries
  std::vector<double> sigmas;  // noise coefficient, T + 1 entries

  double snr(int t) const;
  /// Coefficients gathered for a batch of timesteps, shaped [B, 1, 1, 1].
  torch::Tensor alpha_at(const torch::Tensor& t, torch::ScalarType dtype = torch::kFloat32) const;
  torch::Tensor sigma_at(const torch::Tensor& t, torch::ScalarType dtype = torch::kFloat32) const;
};

/// Squared-cosine schedule (offset 0.008) rescaled to zero terminal SNR.
NoiseSchedule make_schedule(int T = 1000);

/// "t,alpha,sigma" rows with 17 significant digits.
std::string schedule_csv(const NoiseSchedule& schedule);
std::string schedule_hash(const NoiseSchedule& schedule);

void check_timesteps(const torch::Tensor& t, const NoiseSchedule& schedule);

torch::Tensor q_sample(const torch::Tensor& x0, const torch::Tensor& t, const torch::Tensor& eps,
                       const NoiseSchedule& schedule);
torch::Tensor velocity_target(const torch::Tensor& x0, const torch::Tensor& eps, const torch::Tensor& t,
                              const NoiseSchedule& schedule);

struct X0Eps {
  torch::Tensor x0;
  torch::Tensor eps;
};
X0Eps x0_and_eps_from_v(const torch::Tensor& x_t, const torch::Tensor& v, const torch::Tensor& t,
                        const NoiseSchedule& schedule);

/// v-predictor: (x_t [B,1,H,W], condition [B,1,H,W], t [B] int64, r [B,D]) -> v [B,1,H,W].
using VelocityModel = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&, const torch::Tensor&,
                                                  const torch::Tensor&)>;

struct SampleOptions {
  int steps = 250;
  double eta = 0.0;  // 0: deterministic update
  bool clamp_x0 = true;
};

/// Strided timesteps T, T - T/steps, ..., 0 (steps + 1 entries).
std::vector<int> sampling_timesteps(int T, int steps);

/// Noise drawn as the sampler's starting point for `seed`.
torch::Tensor initial_noise(const std::vector<int64_t>& shape, std::uint64_t seed,
                            torch::ScalarType dtype = torch::kFloat32);

/// Reverse process from x_T ~ N(0, 1) down to t = 0. Throws NumericError when
/// the model emits non-finite values.
torch::Tensor sample(const VelocityModel& model, const torch::Tensor& condition, const torch::Tensor& treatment,
                     const NoiseSchedule& schedule, const SampleOptions& options, std::uint64_t seed);

/// Shadow copy of a parameter list.
class Ema {
 public:
  Ema(const std::vector<torch::Tensor>& params, double decay);

  void update(const std::vector<torch::Tensor>& params);
  void copy_to(const std::vector<torch::Tensor>& params) const;

  double decay() const noexcept { return decay_; }
  std::int64_t updates() const noexcept { return updates_; }
  const std::vector<torch::Tensor>& shadow() const noexcept { return shadow_; }
  std::vector<torch::Tensor>& shadow() noexcept { return shadow_; }
  void set_updates(std::int64_t n) noexcept { updates_ = n; }

 private:
  std::vector<torch::Tensor> shadow_;
  double decay_;
  std::int64_t updates_ = 0;
};

}  // namespace dopacast::nn
