#include "dopacast/nn/unet.hpp"

#include <cmath>
#include <stdexcept>

namespace dopacast::nn {

void UNetConfig::validate() const {
  if (channels.empty()) throw std::invalid_argument("UNetConfig: channels must not be empty");
  if (res_blocks < 1 || groups < 1) throw std::invalid_argument("UNetConfig: res_blocks and groups must be positive");
  if (in_channels != 2) throw std::invalid_argument("UNetConfig: in_channels must be 2 (noisy image + screening)");
  if (out_channels < 1 || treatment_dim < 1 || T < 1) throw std::invalid_argument("UNetConfig: sizes must be positive");
  for (int c : channels) {
    if (c < 1 || c % groups != 0) {
      throw std::invalid_argument("UNetConfig: channel count " + std::to_string(c) + " not divisible by " +
                                  std::to_string(groups) + " groups");
    }
  }
  if (resolved_time_dim() % 2 != 0) throw std::invalid_argument("UNetConfig: time_dim must be even");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("UNetConfig: dropout outside [0, 1)");
}

void to_json(nlohmann::json& j, const UNetConfig& c) {
  j = {{"channels", c.channels}, {"res_blocks", c.res_blocks}, {"groups", c.groups},
       {"in_channels", c.in_channels}, {"out_channels", c.out_channels}, {"treatment_dim", c.treatment_dim},
       {"time_dim", c.time_dim}, {"cond_dim", c.cond_dim}, {"dropout", c.dropout}, {"T", c.T}};
}

void from_json(const nlohmann::json& j, UNetConfig& c) {
  c.channels = j.value("channels", c.channels);
  c.res_blocks = j.value("res_blocks", c.res_blocks);
  c.groups = j.value("groups", c.groups);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.out_channels = j.value("out_channels", c.out_channels);
  c.treatment_dim = j.value("treatment_dim", c.treatment_dim);
  c.time_dim = j.value("time_dim", c.time_dim);
  c.cond_dim = j.value("cond_dim", c.cond_dim);
  c.dropout = j.value("dropout", c.dropout);
  c.T = j.value("T", c.T);
}

torch::Tensor timestep_embedding(const torch::Tensor& t, int dim, int T) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("timestep_embedding: dim must be even and >= 2");
  if (t.numel() > 0 && (t.min().item<double>() < 0 || t.max().item<double>() > T)) {
    throw std::invalid_argument("timestep_embedding: t outside [0, " + std::to_string(T) + "]");
  }
  const int half = dim / 2;
  auto k = torch::arange(half, torch::TensorOptions().dtype(torch::kFloat64));
  auto freqs = torch::exp(-std::log(10000.0) * k / half);
  auto args = t.to(torch::kFloat64).reshape({-1, 1}) * freqs.reshape({1, -1});
  return torch::cat({torch::sin(args), torch::cos(args)}, 1).to(torch::kFloat32).to(t.device());
}

AdaGNImpl::AdaGNImpl(int channels, int groups, int cond_dim) {
  if (channels % groups != 0) {
    throw std::invalid_argument("AdaGN: " + std::to_string(channels) + " channels not divisible by " +
                                std::to_string(groups) + " groups");
  }
  norm = register_module("norm", torch::nn::GroupNorm(torch::nn::GroupNormOptions(groups, channels).affine(false)));
  head = register_module("head", torch::nn::Linear(cond_dim, 2 * channels));
  torch::NoGradGuard no_grad;
  head->weight.zero_();
  head->bias.zero_();
}

torch::Tensor AdaGNImpl::forward(const torch::Tensor& h, const torch::Tensor& cond) {
  auto sb = head(torch::silu(cond)).unsqueeze(-1).unsqueeze(-1);
  auto parts = sb.chunk(2, 1);
  return (1 + parts[0]) * norm(h) + parts[1];
}

namespace {

torch::nn::Conv2d conv3(int in, int out, int stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

}  // namespace

ResBlockImpl::ResBlockImpl(int in_ch, int out_ch, int groups, int cond_dim, double dropout) {
  norm1 = register_module("norm1", torch::nn::GroupNorm(torch::nn::GroupNormOptions(groups, in_ch)));
  conv1 = register_module("conv1", conv3(in_ch, out_ch));
  ada = register_module("ada", AdaGN(out_ch, groups, cond_dim));
  drop = register_module("drop", torch::nn::Dropout(dropout));
  conv2 = register_module("conv2", conv3(out_ch, out_ch));
  if (in_ch != out_ch) skip = register_module("skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 1)));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& cond) {
  auto h = conv1(torch::silu(norm1(x)));
  h = ada(h, cond);
  h = conv2(drop(torch::silu(h)));
  return (skip ? skip(x) : x) + h;
}

UNetImpl::UNetImpl(UNetConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& ch = config_.channels;
  const int g = config_.groups;
  const int cd = config_.resolved_cond_dim();
  const int td = config_.resolved_time_dim();
  const double dp = config_.dropout;

  time_mlp = register_module("time_mlp", torch::nn::Sequential(torch::nn::Linear(td, cd), torch::nn::SiLU(),
                                                               torch::nn::Linear(cd, cd)));
  treatment_proj = register_module("treatment_proj", torch::nn::Linear(config_.treatment_dim, cd));
  input_conv = register_module("input_conv", conv3(config_.in_channels, ch[0]));

  down_blocks = register_module("down_blocks", torch::nn::ModuleList());
  downsamplers = register_module("downsamplers", torch::nn::ModuleList());
  std::vector<int> skip_ch{ch[0]};
  int cur = ch[0];
  for (std::size_t level = 0; level < ch.size(); ++level) {
    for (int b = 0; b < config_.res_blocks; ++b) {
      down_blocks->push_back(ResBlock(cur, ch[level], g, cd, dp));
      cur = ch[level];
      skip_ch.push_back(cur);
    }
    if (level + 1 < ch.size()) {
      downsamplers->push_back(conv3(cur, cur, 2));
      skip_ch.push_back(cur);
    }
  }

  mid_blocks = register_module("mid_blocks", torch::nn::ModuleList());
  mid_blocks->push_back(ResBlock(cur, cur, g, cd, dp));
  mid_blocks->push_back(ResBlock(cur, cur, g, cd, dp));

  up_blocks = register_module("up_blocks", torch::nn::ModuleList());
  upsamplers = register_module("upsamplers", torch::nn::ModuleList());
  for (std::size_t level = ch.size(); level-- > 0;) {
    for (int b = 0; b <= config_.res_blocks; ++b) {
      const int s = skip_ch.back();
      skip_ch.pop_back();
      up_blocks->push_back(ResBlock(cur + s, ch[level], g, cd, dp));
      cur = ch[level];
    }
    if (level > 0) upsamplers->push_back(conv3(cur, cur));
  }

  out_norm = register_module("out_norm", torch::nn::GroupNorm(torch::nn::GroupNormOptions(g, cur)));
  out_conv = register_module("out_conv", conv3(cur, config_.out_channels));
  torch::NoGradGuard no_grad;
  out_conv->weight.zero_();
  out_conv->bias.zero_();
}

torch::Tensor UNetImpl::fuse_conditioning(const torch::Tensor& t_emb, const torch::Tensor& r) {
  return time_mlp->forward(t_emb) + treatment_proj(r);
}

torch::Tensor UNetImpl::forward(const torch::Tensor& x_t, const torch::Tensor& x_s, const torch::Tensor& t,
                                const torch::Tensor& r) {
  if (x_t.dim() != 4 || !x_t.sizes().equals(x_s.sizes()) || x_t.size(1) != 1) {
    throw std::invalid_argument("UNet: x_t and x_s must both be shaped [B, 1, H, W]");
  }
  const auto levels = static_cast<std::int64_t>(config_.channels.size());
  const std::int64_t factor = std::int64_t{1} << (levels - 1);
  if (x_t.size(2) % factor != 0 || x_t.size(3) % factor != 0) {
    throw std::invalid_argument("UNet: spatial size must be divisible by " + std::to_string(factor));
  }
  if (r.dim() != 2 || r.size(0) != x_t.size(0) || r.size(1) != config_.treatment_dim) {
    throw std::invalid_argument("UNet: treatment embedding must be [B, " + std::to_string(config_.treatment_dim) + "]");
  }
  if (t.numel() != x_t.size(0)) throw std::invalid_argument("UNet: one timestep per batch item required");

  const auto dtype = x_t.scalar_type();
  auto cond = fuse_conditioning(timestep_embedding(t, config_.resolved_time_dim(), config_.T).to(dtype), r);

  std::vector<torch::Tensor> skips;
  auto h = input_conv(torch::cat({x_t, x_s}, 1));
  skips.push_back(h);
  std::size_t block = 0;
  for (std::size_t level = 0; level < config_.channels.size(); ++level) {
    for (int b = 0; b < config_.res_blocks; ++b) {
      h = down_blocks->at<ResBlockImpl>(block++).forward(h, cond);
      skips.push_back(h);
    }
    if (level + 1 < config_.channels.size()) {
      h = downsamplers->at<torch::nn::Conv2dImpl>(level).forward(h);
      skips.push_back(h);
    }
  }
  for (std::size_t i = 0; i < mid_blocks->size(); ++i) h = mid_blocks->at<ResBlockImpl>(i).forward(h, cond);

  block = 0;
  std::size_t up = 0;
  for (std::size_t level = config_.channels.size(); level-- > 0;) {
    for (int b = 0; b <= config_.res_blocks; ++b) {
      h = torch::cat({h, skips.back()}, 1);
      skips.pop_back();
      h = up_blocks->at<ResBlockImpl>(block++).forward(h, cond);
    }
    if (level > 0) {
      h = torch::nn::functional::interpolate(
          h, torch::nn::functional::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
      h = upsamplers->at<torch::nn::Conv2dImpl>(up++).forward(h);
    }
  }
  return out_conv(torch::silu(out_norm(h)));
}

std::int64_t parameter_count(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

nlohmann::json model_card(const UNet& model, std::uint64_t seed, const std::string& schedule_hash) {
  return {{"architecture", "conditional_unet"},
          {"config", model->config()},
          {"parameter_count", parameter_count(*model)},
          {"training_seed", seed},
          {"schedule_hash", schedule_hash}};
}

}  // namespace dopacast::nn
