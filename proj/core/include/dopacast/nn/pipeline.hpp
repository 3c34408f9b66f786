#pragma once

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <vector>

#include "dopacast/evaluation.hpp"
#include "dopacast/nn/diffusion.hpp"
#include "dopacast/nn/ledd_autoencoder.hpp"
#include "dopacast/nn/training.hpp"
#include "dopacast/nn/unet.hpp"
#include "dopacast/preprocessing.hpp"
#include "dopacast/types.hpp"

namespace dopacast::nn {

struct SamplingConfig {
  int steps = 250;
  double eta = 0.0;
  bool clamp_x0 = true;
  bool use_ema = true;
  int batch_size = 16;
};

struct PipelineConfig {
  PhantomSpec phantom;
  PreprocessParams preprocess;
  EncoderConfig encoder;
  UNetConfig unet;
  TrainConfig train;
  AugmentParams augment;
  SamplingConfig sampling;
  int image_size = kImageSize;  // kImageSize or kImageSize / 2
  std::uint64_t split_seed = 0;

  void validate() const;
  bool downsample() const { return image_size != kImageSize; }
};

nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

/// Reduced configuration for desk-scale phantom runs: 64x64 images, channels
/// (32, 64, 128, 128), 8 groups, 30 epochs.
PipelineConfig toy_config();

/// Read-only v-predictor over a trained network.
VelocityModel velocity_model(UNet& model);

/// 250-step forecasts for each item, in item order. Batch k draws its starting
/// noise from derive_seed(seed, {k}). `ledd_override` (raw) replaces every
/// item's treatment series.
std::vector<ImageGrid> forecast_items(UNet& model, LeddAutoencoder& encoder, const std::vector<DiffusionItem>& items,
                                      const NoiseSchedule& schedule, const SamplingConfig& sampling,
                                      std::uint64_t seed, const std::optional<LeddSeries>& ledd_override = {});

std::vector<EvalSample> eval_samples(const std::vector<DiffusionItem>& items, const std::vector<ImageGrid>& predictions);

/// Noise-free planted month-12 slices passed through the same preprocessing
/// and screening-range normalisation as the targets, in slice order.
std::vector<ImageGrid> phantom_oracle_targets(const SubjectRecord& raw_record, const PreprocessParams& params,
                                              bool downsample);

/// Mean of (condition - forecast) over striatum pixels.
double roi_intensity_loss(const ImageGrid& condition, const ImageGrid& forecast, const RoiWeightMask& mask);

}  // namespace dopacast::nn
