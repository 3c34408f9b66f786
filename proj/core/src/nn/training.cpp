#include "dopacast/nn/training.hpp"

#include <ATen/autocast_mode.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dopacast/errors.hpp"
#include "dopacast/io.hpp"
#include "dopacast/nn/checkpoint.hpp"
#include "dopacast/preprocessing.hpp"

namespace dopacast::nn {

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1) throw std::invalid_argument("TrainConfig: epochs and batch_size must be positive");
  if (!(lr_peak > 0.0) || weight_decay < 0.0) throw std::invalid_argument("TrainConfig: lr_peak must be > 0");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) {
    throw std::invalid_argument("TrainConfig: warmup_fraction must lie in (0, 1)");
  }
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw std::invalid_argument("TrainConfig: ema_decay outside [0, 1]");
  if (checkpoint_every < 1) throw std::invalid_argument("TrainConfig: checkpoint_every must be positive");
  if (loss_space != "v" && loss_space != "x0") throw std::invalid_argument("TrainConfig: loss_space must be v or x0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"lr_peak", c.lr_peak},
       {"weight_decay", c.weight_decay}, {"warmup_fraction", c.warmup_fraction}, {"ema_decay", c.ema_decay},
       {"mixed_precision", c.mixed_precision}, {"seed", c.seed}, {"checkpoint_every", c.checkpoint_every},
       {"loss_space", c.loss_space}, {"augment", c.augment}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr_peak = j.value("lr_peak", c.lr_peak);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.ema_decay = j.value("ema_decay", c.ema_decay);
  c.mixed_precision = j.value("mixed_precision", c.mixed_precision);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.loss_space = j.value("loss_space", c.loss_space);
  c.augment = j.value("augment", c.augment);
}

void to_json(nlohmann::json& j, const AugmentParams& a) {
  j = {{"gamma_range", {a.gamma_low, a.gamma_high}}, {"rotation_deg", a.rotation_deg},
       {"translate_px", a.translate_px}, {"scale_pct", a.scale_pct}, {"pad_percentile", a.pad_percentile},
       {"ledd_scale_pct", a.ledd_scale_pct}};
}

void from_json(const nlohmann::json& j, AugmentParams& a) {
  if (j.contains("gamma_range")) {
    a.gamma_low = j.at("gamma_range").at(0).get<double>();
    a.gamma_high = j.at("gamma_range").at(1).get<double>();
  }
  a.rotation_deg = j.value("rotation_deg", a.rotation_deg);
  a.translate_px = j.value("translate_px", a.translate_px);
  a.scale_pct = j.value("scale_pct", a.scale_pct);
  a.pad_percentile = j.value("pad_percentile", a.pad_percentile);
  a.ledd_scale_pct = j.value("ledd_scale_pct", a.ledd_scale_pct);
}

torch::Tensor weighted_mae(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& weights) {
  auto w = weights.expand_as(pred);
  auto denom = w.sum();
  if (denom.item<double>() <= 0.0) throw std::invalid_argument("weighted_mae: mask weights sum to zero");
  if ((weights < 0).any().item<bool>()) throw std::invalid_argument("weighted_mae: negative mask weight");
  return (w * (pred - target).abs()).sum() / denom;
}

// --- augmentation --------------------------------------------------------------

AugmentDraw draw_augment(Rng& rng, const AugmentParams& p) {
  AugmentDraw d;
  d.gamma = rng.uniform(p.gamma_low, p.gamma_high);
  d.rotation_deg = rng.uniform(-p.rotation_deg, p.rotation_deg);
  d.translate_rows = rng.uniform(-p.translate_px, p.translate_px);
  d.translate_cols = rng.uniform(-p.translate_px, p.translate_px);
  d.scale = 1.0 + rng.uniform(-p.scale_pct, p.scale_pct) / 100.0;
  return d;
}

namespace {

void check_draw(const AugmentDraw& d, const AugmentParams& p) {
  constexpr double kSlack = 1e-12;
  if (!(d.gamma > 0.0)) throw std::invalid_argument("augment: gamma must be > 0");
  if (d.gamma < p.gamma_low - kSlack || d.gamma > p.gamma_high + kSlack) {
    throw std::invalid_argument("augment: gamma outside the configured range");
  }
  if (std::abs(d.rotation_deg) > p.rotation_deg + kSlack) throw std::invalid_argument("augment: rotation out of range");
  if (std::abs(d.translate_rows) > p.translate_px + kSlack || std::abs(d.translate_cols) > p.translate_px + kSlack) {
    throw std::invalid_argument("augment: translation exceeds +/-" + std::to_string(p.translate_px) + " pixels");
  }
  if (std::abs(d.scale - 1.0) * 100.0 > p.scale_pct + kSlack) throw std::invalid_argument("augment: scale out of range");
}

ImageGrid apply_gamma(const ImageGrid& image, double gamma) {
  if (gamma == 1.0) return image;
  ImageGrid out = image;
  for (auto& v : out) {
    const double u = std::clamp((static_cast<double>(v) + 1.0) / 2.0, 0.0, 1.0);
    v = static_cast<float>(2.0 * std::pow(u, gamma) - 1.0);
  }
  return out;
}

bool is_identity(const AugmentDraw& d) {
  return d.rotation_deg == 0.0 && d.translate_rows == 0.0 && d.translate_cols == 0.0 && d.scale == 1.0;
}

// Inverse map of output pixel (r, c) into the source frame.
struct InverseMap {
  double cr, cc, cos_t, sin_t, inv_s, tr, tc;
  void operator()(int r, int c, double& sr, double& sc) const {
    const double y = r - cr - tr;
    const double x = c - cc - tc;
    sr = (cos_t * y - sin_t * x) * inv_s + cr;
    sc = (sin_t * y + cos_t * x) * inv_s + cc;
  }
};

InverseMap make_map(const AugmentDraw& d, int rows, int cols) {
  const double th = d.rotation_deg * std::numbers::pi / 180.0;
  return {(rows - 1) / 2.0, (cols - 1) / 2.0, std::cos(th), std::sin(th), 1.0 / d.scale, d.translate_rows,
          d.translate_cols};
}

ImageGrid warp_bilinear(const ImageGrid& image, const InverseMap& map, float pad) {
  ImageGrid out(image.rows(), image.cols(), pad);
  for (int r = 0; r < image.rows(); ++r)
    for (int c = 0; c < image.cols(); ++c) {
      double sr = 0.0;
      double sc = 0.0;
      map(r, c, sr, sc);
      if (sr < 0.0 || sc < 0.0 || sr > image.rows() - 1 || sc > image.cols() - 1) continue;
      const int r0 = std::min(static_cast<int>(sr), image.rows() - 2);
      const int c0 = std::min(static_cast<int>(sc), image.cols() - 2);
      const double fr = sr - r0;
      const double fc = sc - c0;
      const double v = (1 - fr) * ((1 - fc) * image(r0, c0) + fc * image(r0, c0 + 1)) +
                       fr * ((1 - fc) * image(r0 + 1, c0) + fc * image(r0 + 1, c0 + 1));
      out(r, c) = static_cast<float>(v);
    }
  return out;
}

Grid<Zone> warp_nearest(const Grid<Zone>& zones, const InverseMap& map) {
  Grid<Zone> out(zones.rows(), zones.cols(), Zone::kBackground);
  for (int r = 0; r < zones.rows(); ++r)
    for (int c = 0; c < zones.cols(); ++c) {
      double sr = 0.0;
      double sc = 0.0;
      map(r, c, sr, sc);
      const int ir = static_cast<int>(std::lround(sr));
      const int ic = static_cast<int>(std::lround(sc));
      if (zones.in_bounds(ir, ic)) out(r, c) = zones(ir, ic);
    }
  return out;
}

}  // namespace

AugmentedPair augment_image_pair(const ImageGrid& condition, const ImageGrid& target, const RoiWeightMask& mask,
                                 const AugmentDraw& draw, const AugmentParams& params) {
  if (!condition.same_shape(target) || !condition.same_shape(mask.zones)) {
    throw std::invalid_argument("augment_image_pair: condition, target and mask shapes differ");
  }
  check_draw(draw, params);
  AugmentedPair out{apply_gamma(condition, draw.gamma), apply_gamma(target, draw.gamma), mask};
  if (is_identity(draw)) return out;
  const auto map = make_map(draw, condition.rows(), condition.cols());
  const auto pad_c = static_cast<float>(percentile(out.condition.values(), params.pad_percentile));
  const auto pad_t = static_cast<float>(percentile(out.target.values(), params.pad_percentile));
  out.condition = warp_bilinear(out.condition, map, pad_c);
  out.target = warp_bilinear(out.target, map, pad_t);
  out.mask = RoiWeightMask::from_zones(warp_nearest(mask.zones, map));
  return out;
}

AugmentedPair augment_image_pair(const ImageGrid& condition, const ImageGrid& target, const RoiWeightMask& mask,
                                 Rng& rng, const AugmentParams& params) {
  return augment_image_pair(condition, target, mask, draw_augment(rng, params), params);
}

LeddSeries scale_ledd(const LeddSeries& raw, double u) {
  if (raw.scale != DoseScale::kRaw) throw std::invalid_argument("scale_ledd: series must be raw mg/day");
  LeddSeries out{{}, DoseScale::kLog1p};
  out.doses.reserve(raw.doses.size());
  for (double d : raw.doses) out.doses.push_back(std::log1p(d * u));
  return out;
}

LeddSeries augment_ledd(const LeddSeries& raw, Rng& rng, const AugmentParams& params) {
  const double f = params.ledd_scale_pct / 100.0;
  return scale_ledd(raw, rng.uniform(1.0 - f, 1.0 + f));
}

double lr_at(std::int64_t step, std::int64_t total_steps, const TrainConfig& config) {
  if (total_steps < 1 || step < 0 || step > total_steps) throw std::invalid_argument("lr_at: step outside [0, total]");
  const double warm = config.warmup_fraction * static_cast<double>(total_steps);
  const auto s = static_cast<double>(step);
  if (s < warm) return config.lr_peak * s / warm;
  const double span = static_cast<double>(total_steps) - warm;
  if (span <= 0.0) return config.lr_peak;
  return config.lr_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * (s - warm) / span));
}

ImageGrid downsample2x(const ImageGrid& image) {
  if (image.rows() % 2 != 0 || image.cols() % 2 != 0) throw std::invalid_argument("downsample2x: odd image size");
  ImageGrid out(image.rows() / 2, image.cols() / 2);
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c) {
      out(r, c) = 0.25F * (image(2 * r, 2 * c) + image(2 * r + 1, 2 * c) + image(2 * r, 2 * c + 1) +
                           image(2 * r + 1, 2 * c + 1));
    }
  return out;
}

RoiWeightMask downsample2x(const RoiWeightMask& mask) {
  const auto& z = mask.zones;
  if (z.rows() % 2 != 0 || z.cols() % 2 != 0) throw std::invalid_argument("downsample2x: odd mask size");
  Grid<Zone> out(z.rows() / 2, z.cols() / 2, Zone::kBackground);
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c) {
      out(r, c) = std::max({z(2 * r, 2 * c), z(2 * r + 1, 2 * c), z(2 * r, 2 * c + 1), z(2 * r + 1, 2 * c + 1)});
    }
  return RoiWeightMask::from_zones(out);
}

TrainingPair downsample_pair(const TrainingPair& pair) {
  TrainingPair out = pair;
  out.condition.pixels = downsample2x(pair.condition.pixels);
  out.target.pixels = downsample2x(pair.target.pixels);
  out.roi = downsample2x(pair.roi);
  return out;
}

std::vector<DiffusionItem> make_items(const SubjectRecord& record, bool downsample) {
  std::vector<DiffusionItem> out;
  for (auto& p : to_training_pairs(record)) out.push_back({downsample ? downsample_pair(p) : std::move(p), record.ledd});
  return out;
}

// --- training loop -----------------------------------------------------------------

namespace {

torch::Tensor grid_tensor(const ImageGrid& g) {
  return torch::tensor(g.storage()).reshape({1, g.rows(), g.cols()});
}

struct Batch {
  torch::Tensor condition, target, weights, t, eps, treatment;
};

class AutocastGuard {
 public:
  explicit AutocastGuard(bool on) : on_(on) {
    if (on_) {
      at::autocast::set_autocast_enabled(at::kCPU, true);
      at::autocast::set_autocast_dtype(at::kCPU, at::kBFloat16);
    }
  }
  ~AutocastGuard() {
    if (on_) {
      at::autocast::set_autocast_enabled(at::kCPU, false);
      at::autocast::clear_cache();
    }
  }
  AutocastGuard(const AutocastGuard&) = delete;
  AutocastGuard& operator=(const AutocastGuard&) = delete;

 private:
  bool on_;
};

torch::Tensor predict(UNet& model, const Batch& b, const NoiseSchedule& schedule, bool mixed, torch::Tensor& x_t) {
  x_t = q_sample(b.target, b.t, b.eps, schedule);
  AutocastGuard guard(mixed);
  return model->forward(x_t, b.condition, b.t, b.treatment).to(torch::kFloat32);
}

torch::Tensor batch_loss(UNet& model, const Batch& b, const NoiseSchedule& schedule, const TrainConfig& config) {
  torch::Tensor x_t;
  auto v_hat = predict(model, b, schedule, config.mixed_precision, x_t);
  if (config.loss_space == "x0") {
    auto x0_hat = x0_and_eps_from_v(x_t, v_hat, b.t, schedule).x0;
    return weighted_mae(x0_hat, b.target, b.weights);
  }
  return weighted_mae(v_hat, velocity_target(b.target, b.eps, b.t, schedule), b.weights);
}

}  // namespace

double train_step(const std::vector<const DiffusionItem*>& batch, UNet& model, LeddAutoencoder& encoder,
                  const NoiseSchedule& schedule, torch::optim::AdamW& optimizer, const TrainConfig& config,
                  const AugmentParams& augment, const StepContext& ctx) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  std::vector<torch::Tensor> cond, tgt, wts, eps;
  std::vector<std::int64_t> ts;
  std::vector<LeddSeries> ledd;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto& item = *batch[j];
    const std::uint64_t stream = derive_seed(ctx.seed, {0x57E9, static_cast<std::uint64_t>(ctx.step), j});
    Rng rng(stream);
    if (config.augment) {
      auto a = augment_image_pair(item.pair.condition.pixels, item.pair.target.pixels, item.pair.roi, rng, augment);
      cond.push_back(grid_tensor(a.condition));
      tgt.push_back(grid_tensor(a.target));
      wts.push_back(grid_tensor(a.mask.weights));
      ledd.push_back(augment_ledd(item.raw_ledd, rng, augment));
    } else {
      cond.push_back(grid_tensor(item.pair.condition.pixels));
      tgt.push_back(grid_tensor(item.pair.target.pixels));
      wts.push_back(grid_tensor(item.pair.roi.weights));
      ledd.push_back(scale_ledd(item.raw_ledd, 1.0));
    }
    ts.push_back(rng.uniform_int(1, schedule.T));
    eps.push_back(initial_noise({1, item.pair.target.pixels.rows(), item.pair.target.pixels.cols()},
                                derive_seed(stream, {1})));
  }
  Batch b{torch::stack(cond), torch::stack(tgt), torch::stack(wts), torch::tensor(ts, torch::kLong),
          torch::stack(eps), embed_pooled(encoder, ledd)};

  const double lr = lr_at(ctx.step, ctx.total_steps, config);
  for (auto& group : optimizer.param_groups()) static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);

  model->train();
  auto loss = batch_loss(model, b, schedule, config);
  const double value = loss.item<double>();
  if (!std::isfinite(value)) {
    std::ostringstream msg;
    msg << "non-finite training loss at step " << ctx.step << " (epoch " << ctx.epoch << "), t = [";
    for (std::size_t i = 0; i < ts.size(); ++i) msg << (i ? ", " : "") << ts[i];
    msg << "]";
    throw NumericError(msg.str());
  }
  optimizer.zero_grad();
  loss.backward();
  optimizer.step();
  return value;
}

double validation_loss(const std::vector<DiffusionItem>& items, UNet& model, LeddAutoencoder& encoder,
                       const NoiseSchedule& schedule, const TrainConfig& config, std::uint64_t seed) {
  if (items.empty()) throw std::invalid_argument("validation_loss: empty split");
  torch::NoGradGuard no_grad;
  model->eval();
  double total = 0.0;
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (std::size_t start = 0; start < items.size(); start += bs) {
    const std::size_t end = std::min(items.size(), start + bs);
    std::vector<torch::Tensor> cond, tgt, wts, eps;
    std::vector<std::int64_t> ts;
    std::vector<LeddSeries> ledd;
    for (std::size_t j = start; j < end; ++j) {
      const auto& item = items[j];
      const std::uint64_t stream = derive_seed(seed, {0x7A1, j});
      Rng rng(stream);
      cond.push_back(grid_tensor(item.pair.condition.pixels));
      tgt.push_back(grid_tensor(item.pair.target.pixels));
      wts.push_back(grid_tensor(item.pair.roi.weights));
      ledd.push_back(scale_ledd(item.raw_ledd, 1.0));
      ts.push_back(rng.uniform_int(1, schedule.T));
      eps.push_back(initial_noise({1, item.pair.target.pixels.rows(), item.pair.target.pixels.cols()},
                                  derive_seed(stream, {1})));
    }
    Batch b{torch::stack(cond), torch::stack(tgt), torch::stack(wts), torch::tensor(ts, torch::kLong),
            torch::stack(eps), embed_pooled(encoder, ledd)};
    total += batch_loss(model, b, schedule, config).item<double>() * static_cast<double>(end - start);
  }
  return total / static_cast<double>(items.size());
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "epoch,train_loss,val_loss,lr,ema_decay\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.train_loss, r.val_loss, r.lr, r.ema_decay);
    out += buf;
  }
  return out;
}

namespace {

using AdamWState = torch::optim::AdamWParamState;

void save_optimizer(std::vector<NamedTensor>& tensors, nlohmann::json& meta, torch::optim::AdamW& opt,
                    const std::vector<torch::Tensor>& params) {
  auto& state = opt.state();
  nlohmann::json steps = nlohmann::json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = state.find(params[i].unsafeGetTensorImpl());
    if (it == state.end()) {
      steps.push_back(0);
      continue;
    }
    auto& s = static_cast<AdamWState&>(*it->second);
    steps.push_back(s.step());
    tensors.push_back(to_named("opt." + std::to_string(i) + ".exp_avg", s.exp_avg()));
    tensors.push_back(to_named("opt." + std::to_string(i) + ".exp_avg_sq", s.exp_avg_sq()));
  }
  meta["optimizer_steps"] = steps;
}

void load_optimizer(const Container& c, torch::optim::AdamW& opt, const std::vector<torch::Tensor>& params) {
  const auto& steps = c.meta.at("optimizer_steps");
  if (steps.size() != params.size()) throw IoError("checkpoint optimizer state does not match the model");
  auto& state = opt.state();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto step = steps[i].get<std::int64_t>();
    if (step == 0) continue;
    const auto* m = c.find("opt." + std::to_string(i) + ".exp_avg");
    const auto* v = c.find("opt." + std::to_string(i) + ".exp_avg_sq");
    if (m == nullptr || v == nullptr) throw IoError("checkpoint is missing optimizer moments");
    auto s = std::make_unique<AdamWState>();
    s->step(step);
    s->exp_avg(from_named(*m).to(params[i].dtype()));
    s->exp_avg_sq(from_named(*v).to(params[i].dtype()));
    state[params[i].unsafeGetTensorImpl()] = std::move(s);
  }
}

nlohmann::json rows_json(const std::vector<MetricsRow>& rows) {
  auto a = nlohmann::json::array();
  for (const auto& r : rows) a.push_back({r.epoch, r.train_loss, r.val_loss, r.lr, r.ema_decay});
  return a;
}

std::vector<MetricsRow> rows_from_json(const nlohmann::json& a) {
  std::vector<MetricsRow> rows;
  for (const auto& r : a) {
    rows.push_back({r[0].get<int>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>(), r[4].get<double>()});
  }
  return rows;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

}  // namespace

TrainResult train(const std::vector<DiffusionItem>& train_items, const std::vector<DiffusionItem>& val_items,
                  LeddAutoencoder& encoder, const UNetConfig& unet_config, const TrainConfig& config,
                  const AugmentParams& augment, const TrainOptions& options) {
  config.validate();
  if (train_items.empty()) throw std::invalid_argument("train: empty training split");
  if (val_items.empty()) throw std::invalid_argument("train: empty validation split");
  const auto schedule = make_schedule(unet_config.T);
  const auto seed = config.seed;

  torch::manual_seed(derive_seed(seed, {0xD1F}));
  TrainResult result;
  result.model = UNet(unet_config);
  result.ema_model = UNet(unet_config);
  auto& model = result.model;
  const auto params = model->parameters();
  Ema ema(params, config.ema_decay);
  torch::optim::AdamW opt(params, torch::optim::AdamWOptions(config.lr_peak).weight_decay(config.weight_decay));

  const auto n = train_items.size();
  const auto bs = static_cast<std::size_t>(config.batch_size);
  const auto steps_per_epoch = static_cast<std::int64_t>((n + bs - 1) / bs);
  const std::int64_t total_steps = steps_per_epoch * config.epochs;
  std::int64_t step = 0;
  int start_epoch = 0;
  double best = std::numeric_limits<double>::infinity();

  auto checkpoint = [&](const std::filesystem::path& path, int epochs_done) {
    Container c;
    c.config = {{"unet", unet_config}, {"train", config}, {"augment", augment}};
    c.meta = {{"kind", "diffusion"},   {"epochs_done", epochs_done}, {"step", step},
              {"best_val", best},      {"best_epoch", result.best_epoch}, {"ema_updates", ema.updates()},
              {"metrics", rows_json(result.metrics)}, {"schedule_hash", schedule_hash(schedule)},
              {"model_card", model_card(model, seed, schedule_hash(schedule))}};
    c.tensors = module_tensors(*model, "model.");
    ema.copy_to(result.ema_model->parameters());
    append(c.tensors, module_tensors(*result.ema_model, "ema."));
    save_optimizer(c.tensors, c.meta, opt, params);
    write_container(path, c);
  };

  if (options.resume_from) {
    const auto c = read_container(*options.resume_from);
    if (c.meta.value("kind", "") != "diffusion") throw IoError("not a diffusion checkpoint: " + options.resume_from->string());
    if (c.meta.value("schedule_hash", "") != schedule_hash(schedule)) throw ValidationError("checkpoint schedule hash mismatch");
    load_module_tensors(*model, c, "model.");
    load_module_tensors(*result.ema_model, c, "ema.");
    const auto ema_params = result.ema_model->parameters();
    for (std::size_t i = 0; i < ema_params.size(); ++i) ema.shadow()[i].copy_(ema_params[i]);
    ema.set_updates(c.meta.at("ema_updates").get<std::int64_t>());
    load_optimizer(c, opt, params);
    start_epoch = c.meta.at("epochs_done").get<int>();
    step = c.meta.at("step").get<std::int64_t>();
    best = c.meta.at("best_val").is_null() ? std::numeric_limits<double>::infinity() : c.meta.at("best_val").get<double>();
    result.best_epoch = c.meta.at("best_epoch").get<int>();
    result.metrics = rows_from_json(c.meta.at("metrics"));
  }
  if (options.out_dir) std::filesystem::create_directories(*options.out_dir);

  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    if (options.stop_after_epoch >= 0 && epoch >= options.stop_after_epoch) break;
    const auto e = static_cast<std::uint64_t>(epoch);
    torch::manual_seed(derive_seed(seed, {0xD0, e}));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(seed, {0x5F, e}));
    std::shuffle(order.begin(), order.end(), shuffle.engine());

    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t b = 0; b < n; b += bs) {
      std::vector<const DiffusionItem*> batch;
      for (std::size_t j = b; j < std::min(n, b + bs); ++j) batch.push_back(&train_items[order[j]]);
      lr = lr_at(step, total_steps, config);
      loss_sum += train_step(batch, model, encoder, schedule, opt, config, augment, {seed, step, total_steps, epoch});
      ema.update(params);
      ++step;
    }
    ema.copy_to(result.ema_model->parameters());
    const double val = validation_loss(val_items, result.ema_model, encoder, schedule, config, seed);
    result.metrics.push_back({epoch + 1, loss_sum / static_cast<double>(steps_per_epoch), val, lr, config.ema_decay});
    if (options.verbose) {
      std::fprintf(stderr, "epoch %d/%d train %.5f val %.5f lr %.3g\n", epoch + 1, config.epochs,
                   result.metrics.back().train_loss, val, lr);
    }
    const bool improved = val < best;
    if (improved) {
      best = val;
      result.best_epoch = epoch + 1;
    }
    if (options.out_dir) {
      const auto& dir = *options.out_dir;
      if (improved) checkpoint(dir / "best.ckpt", epoch + 1);
      if ((epoch + 1) % config.checkpoint_every == 0 || epoch + 1 == config.epochs) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%04d.ckpt", epoch + 1);
        checkpoint(dir / name, epoch + 1);
        checkpoint(dir / "last.ckpt", epoch + 1);
      }
      write_text(dir / "metrics.csv", metrics_csv(result.metrics));
    }
  }
  ema.copy_to(result.ema_model->parameters());
  result.best_val = best;
  result.steps = step;
  model->eval();
  result.ema_model->eval();
  return result;
}

DiffusionCheckpoint load_diffusion(const std::filesystem::path& path) {
  const auto c = read_container(path);
  if (c.meta.value("kind", "") != "diffusion") throw IoError("not a diffusion checkpoint: " + path.string());
  DiffusionCheckpoint out;
  const auto unet_config = c.config.at("unet").get<UNetConfig>();
  out.train_config = c.config.at("train").get<TrainConfig>();
  out.augment = c.config.at("augment").get<AugmentParams>();
  out.meta = c.meta;
  out.model = UNet(unet_config);
  out.ema_model = UNet(unet_config);
  load_module_tensors(*out.model, c, "model.");
  load_module_tensors(*out.ema_model, c, "ema.");
  for (const auto& p : out.ema_model->parameters()) {
    if (!torch::isfinite(p).all().item<bool>()) throw NumericError("checkpoint contains non-finite weights");
  }
  out.model->eval();
  out.ema_model->eval();
  return out;
}

}  // namespace dopacast::nn
