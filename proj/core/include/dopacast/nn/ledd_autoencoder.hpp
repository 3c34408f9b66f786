#pragma once

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "dopacast/io.hpp"
#include "dopacast/random.hpp"
#include "dopacast/types.hpp"

namespace dopacast::nn {

struct EncoderConfig {
  int hidden_dim = 256;
  int latent_dim = 128;
  int layers = 3;
  int sequence_length = kLeddMonths;
  int heads = 4;
  int ffn_dim = 512;
  double dropout = 0.1;
  double temperature = 0.2;
  double beta = 0.1;
  // training
  int batch_size = 64;
  int epochs = 100;
  double lr = 1e-3;
  double weight_decay = 1e-2;
  double gamma_low = 0.9;
  double gamma_high = 1.1;
  double noise_fraction = 0.02;
  double noise_floor_mg = 1.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

// --- augmentation (raw mg/day) ---------------------------------------------

/// Adds c * 25 mg to months [start, start + k), clamping at zero.
LeddSeries apply_block_shift(const LeddSeries& raw, int start, int k, double c);
/// k ~ U{3..6}, start ~ U{0..12-k}, c ~ U(-5, 5).
LeddSeries block_perturb(const LeddSeries& raw, Rng& rng);

struct ModulateParams {
  double gamma_low = 0.9;
  double gamma_high = 1.1;
  double noise_fraction = 0.02;  // std as a fraction of the mean dose
  double noise_floor_mg = 1.0;   // lower bound on the std
};

/// Scale by gamma, add N(0, std) per month, clamp at zero.
LeddSeries modulate_view(const LeddSeries& raw, double gamma, double noise_std, Rng& rng);
std::pair<LeddSeries, LeddSeries> stochastic_modulate(const LeddSeries& raw, Rng& rng, const ModulateParams& params = {});

// --- model -----------------------------------------------------------------------

class EncoderLayerImpl : public torch::nn::Module {
 public:
  EncoderLayerImpl(int dim, int heads, int ffn_dim, double dropout);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::LayerNorm norm1{nullptr};
  torch::nn::MultiheadAttention attn{nullptr};
  torch::nn::LayerNorm norm2{nullptr};
  torch::nn::Linear ff1{nullptr};
  torch::nn::Linear ff2{nullptr};
  torch::nn::Dropout drop{nullptr};
};
TORCH_MODULE(EncoderLayer);

struct Embedding {
  torch::Tensor sequence_latent;  // [B, L, latent]
  torch::Tensor pooled;           // [B, latent], unit norm
};

class LeddAutoencoderImpl : public torch::nn::Module {
 public:
  explicit LeddAutoencoderImpl(EncoderConfig config);

  /// series: [B, L] on the log1p scale.
  Embedding encode(const torch::Tensor& series);
  /// latent: [B, L, latent] -> [B, L].
  torch::Tensor decode(const torch::Tensor& latent);

  const EncoderConfig& config() const noexcept { return config_; }

  torch::nn::Linear lift{nullptr};
  torch::Tensor positional;
  torch::nn::ModuleList layers{nullptr};
  torch::nn::LayerNorm final_norm{nullptr};
  torch::nn::Linear project{nullptr};
  torch::nn::Linear dec1{nullptr};
  torch::nn::Linear dec2{nullptr};

 private:
  EncoderConfig config_;
};
TORCH_MODULE(LeddAutoencoder);

/// Log1p series to tensor [B, L]; rejects wrong lengths and raw-scale input.
torch::Tensor series_tensor(const std::vector<LeddSeries>& log_series, int length = kLeddMonths);

/// Pooled embeddings of log1p series, evaluated without gradients.
torch::Tensor embed_pooled(LeddAutoencoder& model, const std::vector<LeddSeries>& log_series);

/// Symmetric NT-Xent over 2B views; rows are L2-normalised internally.
torch::Tensor info_nce(const torch::Tensor& pool1, const torch::Tensor& pool2, double temperature);

struct AutoencoderLoss {
  torch::Tensor total;
  torch::Tensor reconstruction;
  torch::Tensor contrastive;
};

inline double combine_loss(double reconstruction, double contrastive, double beta) {
  return reconstruction + beta * contrastive;
}

/// Joint loss on two log1p views against the uncorrupted log1p targets (all [B, L]).
AutoencoderLoss autoencoder_loss(LeddAutoencoder& model, const torch::Tensor& view1, const torch::Tensor& view2,
                                 const torch::Tensor& clean);

struct AutoencoderEpoch {
  int epoch = 0;
  double total = 0.0;
  double reconstruction = 0.0;
  double contrastive = 0.0;
};

struct AutoencoderResult {
  LeddAutoencoder model{nullptr};
  std::vector<AutoencoderEpoch> curve;
};

/// Trains on raw series: block perturbation once per sequence per epoch,
/// stochastic modulation per batch draw. Deterministic in `seed`.
AutoencoderResult train_autoencoder(const std::vector<LeddSeries>& raw_dataset, const EncoderConfig& config,
                                    std::uint64_t seed);

void save_autoencoder(const std::filesystem::path& path, LeddAutoencoder& model, const nlohmann::json& meta = {});
LeddAutoencoder load_autoencoder(const std::filesystem::path& path);

}  // namespace dopacast::nn
