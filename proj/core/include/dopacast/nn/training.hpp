#pragma once

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dopacast/nn/diffusion.hpp"
#include "dopacast/nn/ledd_autoencoder.hpp"
#include "dopacast/nn/unet.hpp"
#include "dopacast/random.hpp"
#include "dopacast/types.hpp"

namespace dopacast::nn {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  double lr_peak = 1e-4;
  double weight_decay = 1e-2;
  double warmup_fraction = 0.10;
  double ema_decay = 0.999;
  bool mixed_precision = false;
  std::uint64_t seed = 0;
  int checkpoint_every = 10;
  std::string loss_space = "v";  // "v" or "x0"
  bool augment = true;

  void validate() const;
};

struct AugmentParams {
  double gamma_low = 0.8;
  double gamma_high = 1.2;
  double rotation_deg = 4.0;
  double translate_px = 4.0;
  double scale_pct = 5.0;
  double pad_percentile = 2.0;
  double ledd_scale_pct = 20.0;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const AugmentParams& a);
void from_json(const nlohmann::json& j, AugmentParams& a);

/// sum(W * |pred - target|) / sum(W); tensors broadcast to a common shape.
torch::Tensor weighted_mae(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& weights);

/// One sampled augmentation. Spatial fields are applied jointly to both images
/// and the mask.
struct AugmentDraw {
  double gamma = 1.0;
  double rotation_deg = 0.0;
  double translate_rows = 0.0;
  double translate_cols = 0.0;
  double scale = 1.0;
};

AugmentDraw draw_augment(Rng& rng, const AugmentParams& params);

struct AugmentedPair {
  ImageGrid condition;
  ImageGrid target;
  RoiWeightMask mask;
};

/// Images are in [-1, 1]: gamma acts on the [0, 1] rescaling, then one affine
/// map (bilinear, 2nd-percentile fill) for the images and nearest-neighbour for
/// the zone labels. Draws outside the configured ranges are rejected.
AugmentedPair augment_image_pair(const ImageGrid& condition, const ImageGrid& target, const RoiWeightMask& mask,
                                 const AugmentDraw& draw, const AugmentParams& params = {});
AugmentedPair augment_image_pair(const ImageGrid& condition, const ImageGrid& target, const RoiWeightMask& mask,
                                 Rng& rng, const AugmentParams& params = {});

/// raw * u then log1p.
LeddSeries scale_ledd(const LeddSeries& raw, double u);
/// u ~ U(1 - pct/100, 1 + pct/100).
LeddSeries augment_ledd(const LeddSeries& raw, Rng& rng, const AugmentParams& params = {});

/// Linear warmup to lr_peak over the first warmup_fraction of steps, then cosine to 0.
double lr_at(std::int64_t step, std::int64_t total_steps, const TrainConfig& config);

/// 2x2 average pooling of images; zone labels take the block maximum.
TrainingPair downsample_pair(const TrainingPair& pair);
ImageGrid downsample2x(const ImageGrid& image);
RoiWeightMask downsample2x(const RoiWeightMask& mask);

/// Training pairs of a record keep the raw LEDD for augmentation.
struct DiffusionItem {
  TrainingPair pair;
  LeddSeries raw_ledd;
};

std::vector<DiffusionItem> make_items(const SubjectRecord& record, bool downsample = false);

struct StepContext {
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::int64_t total_steps = 1;
  int epoch = 0;
};

/// One optimiser step on a batch; returns the batch loss. Throws NumericError on a non-finite loss.
double train_step(const std::vector<const DiffusionItem*>& batch, UNet& model, LeddAutoencoder& encoder,
                  const NoiseSchedule& schedule, torch::optim::AdamW& optimizer, const TrainConfig& config,
                  const AugmentParams& augment, const StepContext& ctx);

/// Weighted MAE with per-item draws fixed by `seed`; no augmentation.
double validation_loss(const std::vector<DiffusionItem>& items, UNet& model, LeddAutoencoder& encoder,
                       const NoiseSchedule& schedule, const TrainConfig& config, std::uint64_t seed);

struct MetricsRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double ema_decay = 0.0;
};

std::string metrics_csv(const std::vector<MetricsRow>& rows);

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;      // checkpoints + metrics.csv
  std::optional<std::filesystem::path> resume_from;  // checkpoint to continue
  int stop_after_epoch = -1;                         // stop once this many epochs are done
  bool verbose = false;
};

struct TrainResult {
  UNet model{nullptr};
  UNet ema_model{nullptr};
  std::vector<MetricsRow> metrics;
  double best_val = 0.0;
  int best_epoch = -1;
  std::int64_t steps = 0;
};

TrainResult train(const std::vector<DiffusionItem>& train_items, const std::vector<DiffusionItem>& val_items,
                  LeddAutoencoder& encoder, const UNetConfig& unet_config, const TrainConfig& config,
                  const AugmentParams& augment, const TrainOptions& options = {});

struct DiffusionCheckpoint {
  UNet model{nullptr};
  UNet ema_model{nullptr};
  TrainConfig train_config;
  AugmentParams augment;
  nlohmann::json meta;
};

DiffusionCheckpoint load_diffusion(const std::filesystem::path& path);

}  // namespace dopacast::nn
