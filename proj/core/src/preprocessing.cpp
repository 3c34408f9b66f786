#include "dopacast/preprocessing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dopacast/morphology.hpp"

namespace dopacast {
namespace {

// Half-sample symmetric reflection: -1 -> 0, n -> n - 1, valid for any offset.
int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

void require_finite(const ImageGrid& image, const char* what) {
  if (!std::all_of(image.begin(), image.end(), [](float v) { return std::isfinite(v); })) {
    throw std::invalid_argument(std::string(what) + ": image contains non-finite pixels");
  }
}

// Box mean over a window x window neighbourhood with reflected borders.
Grid<double> box_mean(const ImageGrid& image, int window) {
  const int h = image.rows();
  const int w = image.cols();
  const int rad = window / 2;
  Grid<double> tmp(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int d = -rad; d <= rad; ++d) s += image(r, reflect(c + d, w));
      tmp(r, c) = s;
    }
  }
  Grid<double> out(h, w);
  const double norm = 1.0 / (static_cast<double>(window) * window);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int d = -rad; d <= rad; ++d) s += tmp(reflect(r + d, h), c);
      out(r, c) = s * norm;
    }
  }
  return out;
}

}  // namespace

ImageGrid gaussian_blur(const ImageGrid& image, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_blur: sigma must be > 0");
  const auto k = gaussian_kernel(sigma);
  const int rad = static_cast<int>(k.size() / 2);
  const int h = image.rows();
  const int w = image.cols();
  Grid<double> tmp(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int d = -rad; d <= rad; ++d) s += k[static_cast<std::size_t>(d + rad)] * image(r, reflect(c + d, w));
      tmp(r, c) = s;
    }
  }
  ImageGrid out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int d = -rad; d <= rad; ++d) s += k[static_cast<std::size_t>(d + rad)] * tmp(reflect(r + d, h), c);
      out(r, c) = static_cast<float>(s);
    }
  }
  return out;
}

double percentile(std::span<const float> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile: empty input");
  std::vector<float> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return static_cast<double>(v[lo]) + frac * (static_cast<double>(v[hi]) - static_cast<double>(v[lo]));
}

AlphaMask compute_alpha_mask(const ImageGrid& image, const AlphaMaskParams& params) {
  require_finite(image, "compute_alpha_mask");
  if (!(params.ramp_high > params.ramp_low)) throw std::invalid_argument("compute_alpha_mask: empty ramp band");
  AlphaMask out{ImageGrid(image.rows(), image.cols(), 0.0F), false};
  const ImageGrid smooth = gaussian_blur(image, params.smoothing_sigma);
  const auto [mn, mx] = std::minmax_element(smooth.begin(), smooth.end());
  if (smooth.empty() || !(*mx > 0.0F) || *mx == *mn) {
    out.degenerate = true;
    return out;
  }
  const double peak = *mx;
  const double band = params.ramp_high - params.ramp_low;
  for (std::size_t i = 0; i < smooth.size(); ++i) {
    const double x = std::clamp((smooth[i] / peak - params.ramp_low) / band, 0.0, 1.0);
    out.alpha[i] = static_cast<float>(x * x * (3.0 - 2.0 * x));
  }
  return out;
}

ImageGrid soft_mask_blend(const ImageGrid& image, const SoftMaskParams& params) {
  require_finite(image, "soft_mask_blend");
  if (!(params.sigma2 > 0.0)) throw std::invalid_argument("soft_mask_blend: sigma2 must be > 0");
  if (!(params.gamma >= 0.0 && params.gamma <= 1.0)) throw std::invalid_argument("soft_mask_blend: gamma outside [0, 1]");
  if (!params.alpha.same_shape(image)) throw std::invalid_argument("soft_mask_blend: alpha shape mismatch");
  const ImageGrid blurred = gaussian_blur(image, std::sqrt(params.sigma2));
  ImageGrid out(image.rows(), image.cols());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double a = std::clamp(static_cast<double>(params.alpha[i]), 0.0, 1.0);
    out[i] = static_cast<float>(a * image[i] + (1.0 - a) * (params.gamma * blurred[i]));
  }
  return out;
}

SliceImage soft_mask_blend(const SliceImage& image, const SoftMaskParams& params) {
  SliceImage out = image;
  out.pixels = soft_mask_blend(image.pixels, params);
  return out;
}

BinaryMask threshold_view(const ImageGrid& image, const ThresholdParams& params) {
  require_finite(image, "binary_mask");
  if (params.window < 1 || params.window % 2 == 0) throw std::invalid_argument("binary_mask: window must be odd");
  BinaryMask mask(image.rows(), image.cols(), 0);
  if (image.empty()) return mask;
  const auto [mn, mx] = std::minmax_element(image.begin(), image.end());
  const double range = static_cast<double>(*mx) - static_cast<double>(*mn);
  if (!(range > 0.0)) return mask;
  const Grid<double> mean = box_mean(image, params.window);
  const double offset = params.offset_fraction * range;
  for (std::size_t i = 0; i < image.size(); ++i) {
    mask[i] = static_cast<std::uint8_t>(static_cast<double>(image[i]) > mean[i] - offset);
  }
  return params.opening_iterations > 0 ? open(mask, params.opening_iterations) : mask;
}

BinaryMask binary_mask(const ImageGrid& image, const ThresholdParams& params) {
  const BinaryMask direct = threshold_view(image, params);
  const BinaryMask mirrored = flip_horizontal(threshold_view(flip_horizontal(image), params));
  BinaryMask out(image.rows(), image.cols(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint8_t>(direct[i] && mirrored[i]);
  return out;
}

int agreement_count(int n) {
  // 0.65 * n == 13 * n / 20; ceiling in integers.
  return (13 * n + 19) / 20;
}

BinaryMask aggregate_roi(std::span<const BinaryMask> masks) {
  if (masks.empty()) throw std::invalid_argument("aggregate_roi: need at least one mask");
  const auto& first = masks.front();
  std::vector<int> counts(first.size(), 0);
  for (const auto& m : masks) {
    if (!m.same_shape(first)) throw std::invalid_argument("aggregate_roi: mask shapes differ");
    for (std::size_t i = 0; i < m.size(); ++i) counts[i] += m[i] != 0 ? 1 : 0;
  }
  const int need = agreement_count(static_cast<int>(masks.size()));
  BinaryMask out(first.rows(), first.cols(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint8_t>(counts[i] >= need);
  return out;
}

BinaryMask dilate_buffer(const BinaryMask& striatum) {
  BinaryMask grown = dilate(striatum, 4);
  for (std::size_t i = 0; i < grown.size(); ++i) {
    if (striatum[i] != 0) grown[i] = 0;
  }
  return grown;
}

RoiWeightMask build_weight_mask(const BinaryMask& striatum, const BinaryMask& buffer) {
  if (!striatum.same_shape(buffer)) throw std::invalid_argument("build_weight_mask: shape mismatch");
  Grid<Zone> zones(striatum.rows(), striatum.cols(), Zone::kBackground);
  for (std::size_t i = 0; i < zones.size(); ++i) {
    if (striatum[i] != 0 && buffer[i] != 0) {
      throw std::invalid_argument("build_weight_mask: striatum and buffer overlap");
    }
    if (striatum[i] != 0) {
      zones[i] = Zone::kStriatum;
    } else if (buffer[i] != 0) {
      zones[i] = Zone::kBuffer;
    }
  }
  return RoiWeightMask::from_zones(std::move(zones));
}

LeddSeries ledd_log_transform(const LeddSeries& series) {
  if (series.scale != DoseScale::kRaw) throw std::invalid_argument("ledd_log_transform: series is not raw");
  LeddSeries out{std::vector<double>(series.doses.size()), DoseScale::kLog1p};
  for (std::size_t i = 0; i < series.doses.size(); ++i) {
    const double d = series.doses[i];
    if (!std::isfinite(d) || d < 0.0) {
      throw std::invalid_argument("ledd_log_transform: dose at month " + std::to_string(i + 1) +
                                  " is negative or non-finite");
    }
    out.doses[i] = std::log1p(d);
  }
  return out;
}

RoiWeightMask compute_roi(std::span<const SliceImage> screening, const ThresholdParams& params) {
  std::vector<BinaryMask> masks;
  masks.reserve(screening.size());
  for (const auto& s : screening) masks.push_back(binary_mask(s.pixels, params));
  const BinaryMask striatum = aggregate_roi(masks);
  return build_weight_mask(striatum, dilate_buffer(striatum));
}

void attach_roi(SubjectRecord& record, const ThresholdParams& params) {
  const RoiWeightMask roi = compute_roi(record.screening, params);
  record.roi.assign(record.screening.size(), roi);
}

SubjectRecord preprocess_record(const SubjectRecord& record, const PreprocessParams& params) {
  SubjectRecord out = record;
  for (std::size_t i = 0; i < record.screening.size(); ++i) {
    const auto& s = record.screening[i];
    SoftMaskParams sm{params.sigma2, params.gamma, compute_alpha_mask(s.pixels, params.alpha).alpha};
    if (params.soft_mask_condition) out.screening[i] = soft_mask_blend(s, sm);
    if (params.soft_mask_target) {
      for (auto& t : out.month12) {
        if (t.slice_index == s.slice_index) t = soft_mask_blend(t, sm);
      }
    }
  }
  attach_roi(out, params.threshold);
  return out;
}

std::vector<SliceImage> soft_mask_like(const std::vector<SliceImage>& screening,
                                       const std::vector<SliceImage>& companion, const PreprocessParams& params) {
  std::vector<SliceImage> out = companion;
  for (auto& t : out) {
    auto it = std::find_if(screening.begin(), screening.end(),
                           [&](const SliceImage& s) { return s.slice_index == t.slice_index; });
    if (it == screening.end()) {
      throw std::invalid_argument("soft_mask_like: no screening slice " + std::to_string(t.slice_index));
    }
    t = soft_mask_blend(t, SoftMaskParams{params.sigma2, params.gamma, compute_alpha_mask(it->pixels, params.alpha).alpha});
  }
  return out;
}

}  // namespace dopacast
