#include "dopacast/nn/ledd_autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dopacast/errors.hpp"
#include "dopacast/nn/checkpoint.hpp"

namespace dopacast::nn {

void EncoderConfig::validate() const {
  if (hidden_dim < 1 || latent_dim < 1 || layers < 1 || sequence_length < 1 || heads < 1 || ffn_dim < 1) {
    throw std::invalid_argument("EncoderConfig: dimensions must be positive");
  }
  if (hidden_dim % heads != 0) throw std::invalid_argument("EncoderConfig: hidden_dim must be divisible by heads");
  if (!(temperature > 0.0)) throw std::invalid_argument("EncoderConfig: temperature must be > 0");
  if (beta < 0.0) throw std::invalid_argument("EncoderConfig: beta must be >= 0");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("EncoderConfig: dropout outside [0, 1)");
  if (batch_size < 1 || epochs < 1 || !(lr > 0.0)) throw std::invalid_argument("EncoderConfig: training values must be positive");
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"hidden_dim", c.hidden_dim}, {"latent_dim", c.latent_dim}, {"layers", c.layers},
       {"sequence_length", c.sequence_length}, {"heads", c.heads}, {"ffn_dim", c.ffn_dim},
       {"dropout", c.dropout}, {"temperature", c.temperature}, {"beta", c.beta},
       {"batch_size", c.batch_size}, {"epochs", c.epochs}, {"lr", c.lr}, {"weight_decay", c.weight_decay},
       {"gamma_low", c.gamma_low}, {"gamma_high", c.gamma_high}, {"noise_fraction", c.noise_fraction},
       {"noise_floor_mg", c.noise_floor_mg}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.layers = j.value("layers", c.layers);
  c.sequence_length = j.value("sequence_length", c.sequence_length);
  c.heads = j.value("heads", c.heads);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.dropout = j.value("dropout", c.dropout);
  c.temperature = j.value("temperature", c.temperature);
  c.beta = j.value("beta", c.beta);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.gamma_low = j.value("gamma_low", c.gamma_low);
  c.gamma_high = j.value("gamma_high", c.gamma_high);
  c.noise_fraction = j.value("noise_fraction", c.noise_fraction);
  c.noise_floor_mg = j.value("noise_floor_mg", c.noise_floor_mg);
}

// --- augmentation ----------------------------------------------------------------

LeddSeries apply_block_shift(const LeddSeries& raw, int start, int k, double c) {
  const int n = static_cast<int>(raw.doses.size());
  if (k < 0 || start < 0 || start + k > n) throw std::invalid_argument("block shift outside the series");
  LeddSeries out = raw;
  for (int m = start; m < start + k; ++m) {
    auto& d = out.doses[static_cast<std::size_t>(m)];
    d = std::max(0.0, d + c * 25.0);
  }
  return out;
}

LeddSeries block_perturb(const LeddSeries& raw, Rng& rng) {
  const int n = static_cast<int>(raw.doses.size());
  const int k = std::min(n, static_cast<int>(rng.uniform_int(3, 6)));
  const int start = static_cast<int>(rng.uniform_int(0, n - k));
  const double c = rng.uniform(-5.0, 5.0);
  return apply_block_shift(raw, start, k, c);
}

LeddSeries modulate_view(const LeddSeries& raw, double gamma, double noise_std, Rng& rng) {
  LeddSeries out = raw;
  for (auto& d : out.doses) {
    const double noise = noise_std > 0.0 ? rng.normal(0.0, noise_std) : 0.0;
    d = std::max(0.0, d * gamma + noise);
  }
  return out;
}

std::pair<LeddSeries, LeddSeries> stochastic_modulate(const LeddSeries& raw, Rng& rng, const ModulateParams& params) {
  double mean = 0.0;
  for (double d : raw.doses) mean += d;
  if (!raw.doses.empty()) mean /= static_cast<double>(raw.doses.size());
  const double noise_std = std::max(params.noise_fraction * mean, params.noise_floor_mg);
  const double g1 = rng.uniform(params.gamma_low, params.gamma_high);
  auto v1 = modulate_view(raw, g1, noise_std, rng);
  const double g2 = rng.uniform(params.gamma_low, params.gamma_high);
  auto v2 = modulate_view(raw, g2, noise_std, rng);
  return {std::move(v1), std::move(v2)};
}

// --- model -------------------------------------------------------------------------

EncoderLayerImpl::EncoderLayerImpl(int dim, int heads, int ffn_dim, double dropout) {
  norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  attn = register_module("attn", torch::nn::MultiheadAttention(torch::nn::MultiheadAttentionOptions(dim, heads).dropout(dropout)));
  norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  ff1 = register_module("ff1", torch::nn::Linear(dim, ffn_dim));
  ff2 = register_module("ff2", torch::nn::Linear(ffn_dim, dim));
  drop = register_module("drop", torch::nn::Dropout(dropout));
}

torch::Tensor EncoderLayerImpl::forward(const torch::Tensor& x) {
  // x: [B, L, D]; attention runs sequence-first.
  auto h = norm1(x).transpose(0, 1);
  auto a = std::get<0>(attn(h, h, h)).transpose(0, 1);
  auto y = x + drop(a);
  auto f = ff2(drop(torch::gelu(ff1(norm2(y)))));
  return y + drop(f);
}

LeddAutoencoderImpl::LeddAutoencoderImpl(EncoderConfig config) : config_(std::move(config)) {
  config_.validate();
  const int d = config_.hidden_dim;
  lift = register_module("lift", torch::nn::Linear(1, d));
  positional = register_parameter("positional", torch::randn({config_.sequence_length, d}) * 0.02);
  layers = register_module("layers", torch::nn::ModuleList());
  for (int i = 0; i < config_.layers; ++i) layers->push_back(EncoderLayer(d, config_.heads, config_.ffn_dim, config_.dropout));
  final_norm = register_module("final_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  project = register_module("project", torch::nn::Linear(d, config_.latent_dim));
  dec1 = register_module("dec1", torch::nn::Linear(config_.latent_dim, d));
  dec2 = register_module("dec2", torch::nn::Linear(d, 1));
}

Embedding LeddAutoencoderImpl::encode(const torch::Tensor& series) {
  if (series.dim() != 2 || series.size(1) != config_.sequence_length) {
    throw std::invalid_argument("encode: expected [B, " + std::to_string(config_.sequence_length) + "] series");
  }
  auto h = torch::gelu(lift(series.unsqueeze(-1))) + positional;
  for (std::size_t i = 0; i < layers->size(); ++i) h = layers->at<EncoderLayerImpl>(i).forward(h);
  auto z = project(final_norm(h));
  auto pooled = torch::nn::functional::normalize(z.mean(1), torch::nn::functional::NormalizeFuncOptions().dim(1).eps(1e-12));
  return {z, pooled};
}

torch::Tensor LeddAutoencoderImpl::decode(const torch::Tensor& latent) {
  if (latent.dim() != 3 || latent.size(1) != config_.sequence_length || latent.size(2) != config_.latent_dim) {
    throw std::invalid_argument("decode: expected [B, " + std::to_string(config_.sequence_length) + ", " +
                                std::to_string(config_.latent_dim) + "] latent");
  }
  return dec2(torch::gelu(dec1(latent))).squeeze(-1);
}

torch::Tensor series_tensor(const std::vector<LeddSeries>& log_series, int length) {
  std::vector<float> flat;
  flat.reserve(log_series.size() * static_cast<std::size_t>(length));
  for (const auto& s : log_series) {
    if (s.scale != DoseScale::kLog1p) throw std::invalid_argument("series_tensor: series must be log1p-scaled");
    if (static_cast<int>(s.doses.size()) != length) {
      throw std::invalid_argument("series_tensor: expected " + std::to_string(length) + " months, got " +
                                  std::to_string(s.doses.size()));
    }
    for (double d : s.doses) flat.push_back(static_cast<float>(d));
  }
  return torch::tensor(flat).reshape({static_cast<int64_t>(log_series.size()), length});
}

torch::Tensor embed_pooled(LeddAutoencoder& model, const std::vector<LeddSeries>& log_series) {
  torch::NoGradGuard no_grad;
  const bool was_training = model->is_training();
  model->eval();
  auto r = model->encode(series_tensor(log_series, model->config().sequence_length)).pooled;
  model->train(was_training);
  return r;
}

torch::Tensor info_nce(const torch::Tensor& pool1, const torch::Tensor& pool2, double temperature) {
  if (pool1.dim() != 2 || !pool1.sizes().equals(pool2.sizes()) || pool1.size(0) < 1) {
    throw std::invalid_argument("info_nce: expected two [B, D] batches of equal shape with B >= 1");
  }
  if (!(temperature > 0.0)) throw std::invalid_argument("info_nce: temperature must be > 0");
  auto z = torch::cat({pool1, pool2}, 0);
  auto norms = z.norm(2, 1);
  if ((norms < 1e-12).any().item<bool>()) throw std::invalid_argument("info_nce: zero-norm embedding row");
  z = z / norms.unsqueeze(1);
  const auto B = pool1.size(0);
  auto logits = z.matmul(z.t()) / temperature;
  auto eye = torch::eye(2 * B, torch::TensorOptions().dtype(torch::kBool).device(z.device()));
  logits = logits.masked_fill(eye, -std::numeric_limits<double>::infinity());
  auto idx = torch::arange(B, torch::TensorOptions().dtype(torch::kLong).device(z.device()));
  auto target = torch::cat({idx + B, idx});
  return torch::nn::functional::cross_entropy(logits, target);
}

AutoencoderLoss autoencoder_loss(LeddAutoencoder& model, const torch::Tensor& view1, const torch::Tensor& view2,
                                 const torch::Tensor& clean) {
  auto e1 = model->encode(view1);
  auto e2 = model->encode(view2);
  auto rec = 0.5 * (torch::mse_loss(model->decode(e1.sequence_latent), clean) +
                    torch::mse_loss(model->decode(e2.sequence_latent), clean));
  auto cl = info_nce(e1.pooled, e2.pooled, model->config().temperature);
  return {rec + model->config().beta * cl, rec, cl};
}

namespace {

std::vector<LeddSeries> to_log(const std::vector<LeddSeries>& raw) {
  std::vector<LeddSeries> out;
  out.reserve(raw.size());
  for (const auto& s : raw) {
    LeddSeries l{{}, DoseScale::kLog1p};
    for (double d : s.doses) l.doses.push_back(std::log1p(d));
    out.push_back(std::move(l));
  }
  return out;
}

}  // namespace

AutoencoderResult train_autoencoder(const std::vector<LeddSeries>& raw_dataset, const EncoderConfig& config,
                                    std::uint64_t seed) {
  config.validate();
  if (raw_dataset.size() < 2) throw std::invalid_argument("train_autoencoder: at least 2 training sequences required");
  for (const auto& s : raw_dataset) {
    if (s.scale != DoseScale::kRaw) throw std::invalid_argument("train_autoencoder: series must be raw mg/day");
    if (auto v = validate_ledd(s); !v.empty()) throw ValidationError(std::move(v));
  }
  torch::manual_seed(derive_seed(seed, {0xAE}));
  AutoencoderResult result;
  result.model = LeddAutoencoder(config);
  auto& model = result.model;
  model->train();
  torch::optim::AdamW opt(model->parameters(),
                          torch::optim::AdamWOptions(config.lr).weight_decay(config.weight_decay));
  const ModulateParams mod{config.gamma_low, config.gamma_high, config.noise_fraction, config.noise_floor_mg};
  const std::size_t n = raw_dataset.size();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto e = static_cast<std::uint64_t>(epoch);
    torch::manual_seed(derive_seed(seed, {0xAE, e}));
    std::vector<LeddSeries> perturbed;
    perturbed.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Rng r(derive_seed(seed, {0xAE, e, 1, i}));
      perturbed.push_back(block_perturb(raw_dataset[i], r));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(seed, {0xAE, e, 2}));
    std::shuffle(order.begin(), order.end(), shuffle.engine());

    AutoencoderEpoch row{epoch, 0.0, 0.0, 0.0};
    int batches = 0;
    for (std::size_t b = 0; b < n; b += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(n, b + static_cast<std::size_t>(config.batch_size));
      std::vector<LeddSeries> v1, v2, clean;
      Rng r(derive_seed(seed, {0xAE, e, 3, b}));
      for (std::size_t j = b; j < end; ++j) {
        auto views = stochastic_modulate(perturbed[order[j]], r, mod);
        v1.push_back(std::move(views.first));
        v2.push_back(std::move(views.second));
        clean.push_back(raw_dataset[order[j]]);
      }
      const int L = config.sequence_length;
      auto loss = autoencoder_loss(model, series_tensor(to_log(v1), L), series_tensor(to_log(v2), L),
                                   series_tensor(to_log(clean), L));
      if (!std::isfinite(loss.total.item<double>())) {
        throw NumericError("train_autoencoder: non-finite loss at epoch " + std::to_string(epoch));
      }
      opt.zero_grad();
      loss.total.backward();
      opt.step();
      row.total += loss.total.item<double>();
      row.reconstruction += loss.reconstruction.item<double>();
      row.contrastive += loss.contrastive.item<double>();
      ++batches;
    }
    row.total /= batches;
    row.reconstruction /= batches;
    row.contrastive /= batches;
    result.curve.push_back(row);
  }
  model->eval();
  return result;
}

void save_autoencoder(const std::filesystem::path& path, LeddAutoencoder& model, const nlohmann::json& meta) {
  Container c;
  c.config = model->config();
  c.meta = meta.is_null() ? nlohmann::json::object() : meta;
  c.meta["kind"] = "ledd_autoencoder";
  c.tensors = module_tensors(*model, "");
  write_container(path, c);
}

LeddAutoencoder load_autoencoder(const std::filesystem::path& path) {
  const auto c = read_container(path);
  if (c.meta.value("kind", "") != "ledd_autoencoder") throw IoError(path.string() + " is not an autoencoder checkpoint");
  LeddAutoencoder model(c.config.get<EncoderConfig>());
  load_module_tensors(*model, c, "");
  model->eval();
  return model;
}

}  // namespace dopacast::nn
