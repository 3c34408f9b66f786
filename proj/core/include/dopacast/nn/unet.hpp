#pragma once

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <vector>

namespace dopacast::nn {

struct UNetConfig {
  std::vector<int> channels{128, 256, 512, 512};  // one entry per level
  int res_blocks = 2;
  int groups = 32;
  int in_channels = 2;
  int out_channels = 1;
  int treatment_dim = 128;
  int time_dim = 0;  // 0: channels[0]
  int cond_dim = 0;  // 0: 4 * channels[0]
  double dropout = 0.0;
  int T = 1000;

  int resolved_time_dim() const { return time_dim > 0 ? time_dim : channels.at(0); }
  int resolved_cond_dim() const { return cond_dim > 0 ? cond_dim : 4 * channels.at(0); }
  void validate() const;
};

void to_json(nlohmann::json& j, const UNetConfig& c);
void from_json(const nlohmann::json& j, UNetConfig& c);

/// Sinusoidal features, layout [sin(t f_0..f_{h-1}), cos(...)], f_k = 10000^{-k/h}.
torch::Tensor timestep_embedding(const torch::Tensor& t, int dim, int T = 1000);

/// (1 + s(c)) * GroupNorm(h) + b(c) with zero-initialised heads.
class AdaGNImpl : public torch::nn::Module {
 public:
  AdaGNImpl(int channels, int groups, int cond_dim);
  torch::Tensor forward(const torch::Tensor& h, const torch::Tensor& cond);

  torch::nn::GroupNorm norm{nullptr};
  torch::nn::Linear head{nullptr};  // cond -> [scale, shift]
};
TORCH_MODULE(AdaGN);

class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int in_ch, int out_ch, int groups, int cond_dim, double dropout);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond);

  torch::nn::GroupNorm norm1{nullptr};
  torch::nn::Conv2d conv1{nullptr};
  AdaGN ada{nullptr};
  torch::nn::Dropout drop{nullptr};
  torch::nn::Conv2d conv2{nullptr};
  torch::nn::Conv2d skip{nullptr};
};
TORCH_MODULE(ResBlock);

class UNetImpl : public torch::nn::Module {
 public:
  explicit UNetImpl(UNetConfig config);

  /// x_t, x_s: [B, 1, H, W]; t: [B] int64; r: [B, treatment_dim].
  torch::Tensor forward(const torch::Tensor& x_t, const torch::Tensor& x_s, const torch::Tensor& t,
                        const torch::Tensor& r);

  torch::Tensor fuse_conditioning(const torch::Tensor& t_emb, const torch::Tensor& r);

  const UNetConfig& config() const noexcept { return config_; }

  torch::nn::Sequential time_mlp{nullptr};
  torch::nn::Linear treatment_proj{nullptr};

 private:
  UNetConfig config_;
  torch::nn::Conv2d input_conv{nullptr};
  torch::nn::ModuleList down_blocks{nullptr};
  torch::nn::ModuleList downsamplers{nullptr};
  torch::nn::ModuleList mid_blocks{nullptr};
  torch::nn::ModuleList up_blocks{nullptr};
  torch::nn::ModuleList upsamplers{nullptr};
  torch::nn::GroupNorm out_norm{nullptr};
  torch::nn::Conv2d out_conv{nullptr};
};
TORCH_MODULE(UNet);

std::int64_t parameter_count(const torch::nn::Module& module);

/// Config, parameter count, training seed and schedule hash.
nlohmann::json model_card(const UNet& model, std::uint64_t seed, const std::string& schedule_hash);

}  // namespace dopacast::nn
