#include "dopacast/nn/pipeline.hpp"

#include <stdexcept>

#include "dopacast/errors.hpp"
#include "dopacast/ingestion.hpp"
#include "dopacast/random.hpp"

namespace dopacast::nn {

void PipelineConfig::validate() const {
  if (image_size != kImageSize && image_size != kImageSize / 2) {
    throw UsageError("image_size must be " + std::to_string(kImageSize) + " or " + std::to_string(kImageSize / 2));
  }
  if (phantom.n_subjects < 1) throw UsageError("phantom.n_subjects must be >= 1");
  if (sampling.steps < 1 || sampling.batch_size < 1) throw UsageError("sampling.steps and batch_size must be >= 1");
  encoder.validate();
  unet.validate();
  train.validate();
  if (unet.treatment_dim != encoder.latent_dim) throw UsageError("unet.treatment_dim must equal encoder.latent_dim");
}

nlohmann::json to_json(const PipelineConfig& c) {
  const auto& p = c.phantom;
  const auto& pp = c.preprocess;
  return {
      {"phantom",
       {{"n_subjects", p.n_subjects}, {"asymmetry", p.asymmetry}, {"decay_gain", p.decay_gain},
        {"noise_std", p.noise_std}, {"background_noise_std", p.background_noise_std},
        {"zero_dose_fraction", p.zero_dose_fraction}, {"max_dose", p.max_dose}, {"dose_scale", p.dose_scale},
        {"seed", p.seed}}},
      {"preprocess",
       {{"sigma2", pp.sigma2}, {"gamma", pp.gamma}, {"alpha_smoothing_sigma", pp.alpha.smoothing_sigma},
        {"alpha_ramp_low", pp.alpha.ramp_low}, {"alpha_ramp_high", pp.alpha.ramp_high},
        {"threshold_window", pp.threshold.window}, {"threshold_offset_fraction", pp.threshold.offset_fraction},
        {"threshold_opening_iterations", pp.threshold.opening_iterations},
        {"soft_mask_condition", pp.soft_mask_condition}, {"soft_mask_target", pp.soft_mask_target}}},
      {"encoder", c.encoder},
      {"unet", c.unet},
      {"train", c.train},
      {"augment", c.augment},
      {"sampling",
       {{"steps", c.sampling.steps}, {"eta", c.sampling.eta}, {"clamp_x0", c.sampling.clamp_x0},
        {"use_ema", c.sampling.use_ema}, {"batch_size", c.sampling.batch_size}}},
      {"image_size", c.image_size},
      {"split_seed", c.split_seed}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  if (j.contains("phantom")) {
    const auto& p = j.at("phantom");
    auto& s = c.phantom;
    s.n_subjects = p.value("n_subjects", s.n_subjects);
    s.asymmetry = p.value("asymmetry", s.asymmetry);
    s.decay_gain = p.value("decay_gain", s.decay_gain);
    s.noise_std = p.value("noise_std", s.noise_std);
    s.background_noise_std = p.value("background_noise_std", s.background_noise_std);
    s.zero_dose_fraction = p.value("zero_dose_fraction", s.zero_dose_fraction);
    s.max_dose = p.value("max_dose", s.max_dose);
    s.dose_scale = p.value("dose_scale", s.dose_scale);
    s.seed = p.value("seed", s.seed);
  }
  if (j.contains("preprocess")) {
    const auto& p = j.at("preprocess");
    auto& s = c.preprocess;
    s.sigma2 = p.value("sigma2", s.sigma2);
    s.gamma = p.value("gamma", s.gamma);
    s.alpha.smoothing_sigma = p.value("alpha_smoothing_sigma", s.alpha.smoothing_sigma);
    s.alpha.ramp_low = p.value("alpha_ramp_low", s.alpha.ramp_low);
    s.alpha.ramp_high = p.value("alpha_ramp_high", s.alpha.ramp_high);
    s.threshold.window = p.value("threshold_window", s.threshold.window);
    s.threshold.offset_fraction = p.value("threshold_offset_fraction", s.threshold.offset_fraction);
    s.threshold.opening_iterations = p.value("threshold_opening_iterations", s.threshold.opening_iterations);
    s.soft_mask_condition = p.value("soft_mask_condition", s.soft_mask_condition);
    s.soft_mask_target = p.value("soft_mask_target", s.soft_mask_target);
  }
  if (j.contains("encoder")) c.encoder = j.at("encoder").get<EncoderConfig>();
  if (j.contains("unet")) c.unet = j.at("unet").get<UNetConfig>();
  if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
  if (j.contains("augment")) c.augment = j.at("augment").get<AugmentParams>();
  if (j.contains("sampling")) {
    const auto& s = j.at("sampling");
    c.sampling.steps = s.value("steps", c.sampling.steps);
    c.sampling.eta = s.value("eta", c.sampling.eta);
    c.sampling.clamp_x0 = s.value("clamp_x0", c.sampling.clamp_x0);
    c.sampling.use_ema = s.value("use_ema", c.sampling.use_ema);
    c.sampling.batch_size = s.value("batch_size", c.sampling.batch_size);
  }
  c.image_size = j.value("image_size", c.image_size);
  c.split_seed = j.value("split_seed", c.split_seed);
  return c;
}

PipelineConfig toy_config() {
  PipelineConfig c;
  c.image_size = kImageSize / 2;
  c.unet.channels = {32, 64, 128, 128};
  c.unet.groups = 8;
  c.train.epochs = 30;
  c.train.batch_size = 4;
  c.train.lr_peak = 1e-3;
  c.train.ema_decay = 0.995;
  c.train.checkpoint_every = 10;
  c.encoder.epochs = 300;
  c.encoder.batch_size = 32;
  c.sampling.batch_size = 56;
  return c;
}

VelocityModel velocity_model(UNet& model) {
  return [model](const torch::Tensor& x, const torch::Tensor& c, const torch::Tensor& t, const torch::Tensor& r) mutable {
    torch::NoGradGuard no_grad;
    return model->forward(x, c, t, r);
  };
}

namespace {

torch::Tensor grid_tensor(const ImageGrid& g) { return torch::tensor(g.storage()).reshape({1, g.rows(), g.cols()}); }

ImageGrid tensor_grid(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat32).contiguous();
  const auto rows = static_cast<int>(c.size(-2));
  const auto cols = static_cast<int>(c.size(-1));
  const float* p = c.data_ptr<float>();
  return ImageGrid(rows, cols, std::vector<float>(p, p + static_cast<std::size_t>(rows) * cols));
}

}  // namespace

std::vector<ImageGrid> forecast_items(UNet& model, LeddAutoencoder& encoder, const std::vector<DiffusionItem>& items,
                                      const NoiseSchedule& schedule, const SamplingConfig& sampling,
                                      std::uint64_t seed, const std::optional<LeddSeries>& ledd_override) {
  model->eval();
  const auto fn = velocity_model(model);
  const SampleOptions opts{sampling.steps, sampling.eta, sampling.clamp_x0};
  std::vector<ImageGrid> out;
  out.reserve(items.size());
  const auto bs = static_cast<std::size_t>(sampling.batch_size);
  for (std::size_t start = 0, k = 0; start < items.size(); start += bs, ++k) {
    const std::size_t end = std::min(items.size(), start + bs);
    std::vector<torch::Tensor> cond;
    std::vector<LeddSeries> ledd;
    for (std::size_t j = start; j < end; ++j) {
      cond.push_back(grid_tensor(items[j].pair.condition.pixels));
      ledd.push_back(scale_ledd(ledd_override ? *ledd_override : items[j].raw_ledd, 1.0));
    }
    auto x = sample(fn, torch::stack(cond), embed_pooled(encoder, ledd), schedule, opts, derive_seed(seed, {k}));
    for (std::int64_t b = 0; b < x.size(0); ++b) out.push_back(tensor_grid(x[b]));
  }
  return out;
}

std::vector<EvalSample> eval_samples(const std::vector<DiffusionItem>& items, const std::vector<ImageGrid>& predictions) {
  if (items.size() != predictions.size()) throw std::invalid_argument("eval_samples: one prediction per item required");
  std::vector<EvalSample> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& p = items[i].pair;
    out.push_back({p.subject_id, p.slice_index, predictions[i], baseline_no_progression(p).pixels, p.target.pixels,
                   p.roi.weights});
  }
  return out;
}

std::vector<ImageGrid> phantom_oracle_targets(const SubjectRecord& raw_record, const PreprocessParams& params,
                                              bool downsample) {
  auto oracle = phantom_oracle_forecast(raw_record);
  auto screening = raw_record.screening;
  if (params.soft_mask_target) oracle = soft_mask_like(raw_record.screening, oracle, params);
  if (params.soft_mask_condition) screening = soft_mask_like(raw_record.screening, screening, params);
  std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) { return a.slice_index < b.slice_index; });
  std::sort(screening.begin(), screening.end(), [](const auto& a, const auto& b) { return a.slice_index < b.slice_index; });
  std::vector<ImageGrid> out;
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    const auto [lo, hi] = std::minmax_element(screening[i].pixels.begin(), screening[i].pixels.end());
    auto n = normalize_with(oracle[i], *lo, *hi).pixels;
    out.push_back(downsample ? downsample2x(n) : std::move(n));
  }
  return out;
}

double roi_intensity_loss(const ImageGrid& condition, const ImageGrid& forecast, const RoiWeightMask& mask) {
  if (!condition.same_shape(forecast) || !condition.same_shape(mask.zones)) {
    throw std::invalid_argument("roi_intensity_loss: shapes differ");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < condition.size(); ++i) {
    if (mask.zones[i] != Zone::kStriatum) continue;
    sum += static_cast<double>(condition[i]) - forecast[i];
    ++n;
  }
  if (n == 0) throw std::invalid_argument("roi_intensity_loss: mask has no striatum pixels");
  return sum / static_cast<double>(n);
}

}  // namespace dopacast::nn
