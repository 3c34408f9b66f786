#include "dopacast/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dopacast {
namespace {

double weight_sum(const ImageGrid& a, const ImageGrid& b, const ImageGrid& w) {
  if (!a.same_shape(b) || !a.same_shape(w)) throw std::invalid_argument("roi metric: shape mismatch");
  double sum = 0.0;
  for (float v : w) {
    if (!(v >= 0.0F)) throw std::invalid_argument("roi metric: weights must be non-negative");
    sum += v;
  }
  if (!(sum > 0.0)) throw std::invalid_argument("roi metric: all-zero weight mask cannot be normalized");
  return sum;
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double center = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    g[static_cast<std::size_t>(i)] = std::exp(-0.5 * (i - center) * (i - center) / (sigma * sigma));
    sum += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= sum;
  return g;
}

ImageGrid to_unit_range(const ImageGrid& g) {
  ImageGrid out = g;
  for (auto& v : out) v = (v + 1.0F) * 0.5F;
  return out;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f%%", v);
  return buf;
}

std::string fixed(double v, int digits = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

double roi_weighted_mae(const ImageGrid& a, const ImageGrid& b, const ImageGrid& weights) {
  const double wsum = weight_sum(a, b, weights);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(weights[i]) * std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
  }
  return acc / wsum;
}

double roi_weighted_mse(const ImageGrid& a, const ImageGrid& b, const ImageGrid& weights) {
  const double wsum = weight_sum(a, b, weights);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += static_cast<double>(weights[i]) * d * d;
  }
  return acc / wsum;
}

Grid<double> ssim_map(const ImageGrid& a, const ImageGrid& b, const SsimParams& params) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
  if (params.window < 1 || params.window % 2 == 0) throw std::invalid_argument("ssim: window must be odd");
  const int h = a.rows();
  const int w = a.cols();
  const int rad = params.window / 2;
  const auto g = gaussian_window(params.window, params.sigma);
  const double c1 = std::pow(params.k1 * params.data_range, 2);
  const double c2 = std::pow(params.k2 * params.data_range, 2);

  // Horizontal pass of the five moment images, then vertical at valid centers.
  enum { kA, kB, kAA, kBB, kAB, kMoments };
  std::vector<Grid<double>> horiz(kMoments, Grid<double>(h, w, 0.0));
  for (int r = 0; r < h; ++r) {
    for (int c = rad; c + rad < w; ++c) {
      double s[kMoments] = {};
      for (int d = -rad; d <= rad; ++d) {
        const double k = g[static_cast<std::size_t>(d + rad)];
        const double x = a(r, c + d);
        const double y = b(r, c + d);
        s[kA] += k * x;
        s[kB] += k * y;
        s[kAA] += k * x * x;
        s[kBB] += k * y * y;
        s[kAB] += k * x * y;
      }
      for (int m = 0; m < kMoments; ++m) horiz[static_cast<std::size_t>(m)](r, c) = s[m];
    }
  }
  Grid<double> out(h, w, std::numeric_limits<double>::quiet_NaN());
  for (int r = rad; r + rad < h; ++r) {
    for (int c = rad; c + rad < w; ++c) {
      double s[kMoments] = {};
      for (int d = -rad; d <= rad; ++d) {
        const double k = g[static_cast<std::size_t>(d + rad)];
        for (int m = 0; m < kMoments; ++m) s[m] += k * horiz[static_cast<std::size_t>(m)](r + d, c);
      }
      const double mu_a = s[kA];
      const double mu_b = s[kB];
      const double var_a = s[kAA] - mu_a * mu_a;
      const double var_b = s[kBB] - mu_b * mu_b;
      const double cov = s[kAB] - mu_a * mu_b;
      out(r, c) = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                  ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    }
  }
  return out;
}

double roi_weighted_ssim(const ImageGrid& a, const ImageGrid& b, const ImageGrid& weights, const SsimParams& params) {
  weight_sum(a, b, weights);
  const Grid<double> map = ssim_map(a, b, params);
  const int rad = params.window / 2;
  const int h = a.rows();
  const int w = a.cols();

  // A center is valid when its whole window carries positive weight.
  Grid<int> positive_prefix(h + 1, w + 1, 0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      positive_prefix(r + 1, c + 1) = (weights(r, c) > 0.0F ? 1 : 0) + positive_prefix(r, c + 1) +
                                      positive_prefix(r + 1, c) - positive_prefix(r, c);
    }
  }
  const int full = params.window * params.window;
  double acc = 0.0;
  double wsum = 0.0;
  for (int r = rad; r + rad < h; ++r) {
    for (int c = rad; c + rad < w; ++c) {
      const int r0 = r - rad;
      const int c0 = c - rad;
      const int r1 = r + rad + 1;
      const int c1 = c + rad + 1;
      const int n = positive_prefix(r1, c1) - positive_prefix(r0, c1) - positive_prefix(r1, c0) + positive_prefix(r0, c0);
      if (n != full) continue;
      acc += weights(r, c) * map(r, c);
      wsum += weights(r, c);
    }
  }
  if (!(wsum > 0.0)) throw std::invalid_argument("roi_weighted_ssim: no valid window centers carry weight");
  return acc / wsum;
}

SliceMetrics evaluate_slice(const ImageGrid& prediction, const ImageGrid& target, const ImageGrid& weights,
                            int slice_index) {
  SliceMetrics m;
  m.slice_index = slice_index;
  m.mae = roi_weighted_mae(prediction, target, weights);
  m.mse = roi_weighted_mse(prediction, target, weights);
  m.ssim = roi_weighted_ssim(to_unit_range(prediction), to_unit_range(target), weights);
  m.n_subjects = 1;
  return m;
}

SliceImage baseline_no_progression(const TrainingPair& pair) { return pair.condition; }

double relative_delta_pct(double baseline, double model) {
  if (baseline == 0.0) {
    if (model == 0.0) return 0.0;
    return model > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  }
  return (model - baseline) / baseline * 100.0;
}

EvalReport build_report_from_rows(std::vector<SliceMetrics> baseline, std::vector<SliceMetrics> model) {
  if (baseline.empty() || baseline.size() != model.size()) {
    throw std::invalid_argument("build_report: baseline and model rows must be non-empty and aligned");
  }
  auto by_slice = [](const SliceMetrics& x, const SliceMetrics& y) { return x.slice_index < y.slice_index; };
  std::sort(baseline.begin(), baseline.end(), by_slice);
  std::sort(model.begin(), model.end(), by_slice);

  EvalReport report;
  const double n = static_cast<double>(baseline.size());
  report.baseline_mean.slice_index = report.model_mean.slice_index = report.delta_mean.slice_index = -1;
  for (std::size_t i = 0; i < baseline.size(); ++i) {
    const auto& b = baseline[i];
    const auto& m = model[i];
    if (b.slice_index != m.slice_index) throw std::invalid_argument("build_report: slice rows do not match");
    DeltaRow d{b.slice_index, relative_delta_pct(b.ssim, m.ssim), relative_delta_pct(b.mae, m.mae),
               relative_delta_pct(b.mse, m.mse)};
    report.delta.push_back(d);

    report.baseline_mean.ssim += b.ssim / n;
    report.baseline_mean.mae += b.mae / n;
    report.baseline_mean.mse += b.mse / n;
    report.baseline_mean.n_subjects = std::max(report.baseline_mean.n_subjects, b.n_subjects);
    report.model_mean.ssim += m.ssim / n;
    report.model_mean.mae += m.mae / n;
    report.model_mean.mse += m.mse / n;
    report.model_mean.n_subjects = std::max(report.model_mean.n_subjects, m.n_subjects);
    report.delta_mean.ssim_pct += d.ssim_pct / n;
    report.delta_mean.mae_pct += d.mae_pct / n;
    report.delta_mean.mse_pct += d.mse_pct / n;
  }
  report.baseline = std::move(baseline);
  report.model = std::move(model);
  return report;
}

EvalReport build_report(const std::vector<EvalSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("build_report: no samples");
  std::map<std::string, std::set<int>> slices_by_subject;
  std::map<int, std::pair<SliceMetrics, SliceMetrics>> acc;
  for (const auto& s : samples) {
    if (!slices_by_subject[s.subject_id].insert(s.slice_index).second) {
      throw std::invalid_argument("build_report: duplicate slice " + std::to_string(s.slice_index) + " for subject " +
                                  s.subject_id);
    }
    const SliceMetrics model = evaluate_slice(s.prediction, s.target, s.weights, s.slice_index);
    const SliceMetrics base = evaluate_slice(s.baseline, s.target, s.weights, s.slice_index);
    auto& [b, m] = acc[s.slice_index];
    b.slice_index = m.slice_index = s.slice_index;
    b.ssim += base.ssim;
    b.mae += base.mae;
    b.mse += base.mse;
    ++b.n_subjects;
    m.ssim += model.ssim;
    m.mae += model.mae;
    m.mse += model.mse;
    ++m.n_subjects;
  }
  const auto& reference = slices_by_subject.begin()->second;
  for (const auto& [id, set] : slices_by_subject) {
    if (set != reference) throw std::invalid_argument("build_report: subject " + id + " is missing slices");
  }
  std::vector<SliceMetrics> base_rows;
  std::vector<SliceMetrics> model_rows;
  for (auto& [k, bm] : acc) {
    auto [b, m] = bm;
    const double n = b.n_subjects;
    b.ssim /= n;
    b.mae /= n;
    b.mse /= n;
    m.ssim /= n;
    m.mae /= n;
    m.mse /= n;
    base_rows.push_back(b);
    model_rows.push_back(m);
  }
  return build_report_from_rows(std::move(base_rows), std::move(model_rows));
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "# intensity space: " << report.intensity_space << "\n";
  os << "slice,baseline_ssim,baseline_mae,baseline_mse,model_ssim,delta_ssim_pct,model_mae,delta_mae_pct,model_mse,"
        "delta_mse_pct,n_subjects\n";
  auto row = [&os](const std::string& label, const SliceMetrics& b, const SliceMetrics& m, const DeltaRow& d) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%.9g,%.9g,%.6f,%.9g,%.6f,%.9g,%.6f,%d\n", label.c_str(), b.ssim, b.mae,
                  b.mse, m.ssim, d.ssim_pct, m.mae, d.mae_pct, m.mse, d.mse_pct, m.n_subjects);
    os << buf;
  };
  for (std::size_t i = 0; i < report.baseline.size(); ++i) {
    row(std::to_string(report.baseline[i].slice_index), report.baseline[i], report.model[i], report.delta[i]);
  }
  row("mean", report.baseline_mean, report.model_mean, report.delta_mean);
  return os.str();
}

std::string report_table(const EvalReport& report) {
  std::ostringstream os;
  char buf[256];
  os << "Intensity space: " << report.intensity_space << "\n";
  std::snprintf(buf, sizeof buf, "%-6s | %-23s | %-55s\n", "", "Baseline", "Model");
  os << buf;
  std::snprintf(buf, sizeof buf, "%-6s | %7s %7s %7s | %7s %8s %7s %8s %7s %8s\n", "Slice", "SSIM", "MAE", "MSE", "SSIM",
                "dSSIM", "MAE", "dMAE", "MSE", "dMSE");
  os << buf << std::string(90, '-') << "\n";
  auto row = [&](const std::string& label, const SliceMetrics& b, const SliceMetrics& m, const DeltaRow& d) {
    std::snprintf(buf, sizeof buf, "%-6s | %7s %7s %7s | %7s %8s %7s %8s %7s %8s\n", label.c_str(),
                  fixed(b.ssim).c_str(), fixed(b.mae).c_str(), fixed(b.mse).c_str(), fixed(m.ssim).c_str(),
                  pct(d.ssim_pct).c_str(), fixed(m.mae).c_str(), pct(d.mae_pct).c_str(), fixed(m.mse).c_str(),
                  pct(d.mse_pct).c_str());
    os << buf;
  };
  for (std::size_t i = 0; i < report.baseline.size(); ++i) {
    row(std::to_string(report.baseline[i].slice_index), report.baseline[i], report.model[i], report.delta[i]);
  }
  os << std::string(90, '-') << "\n";
  row("Mean", report.baseline_mean, report.model_mean, report.delta_mean);
  return os.str();
}

}  // namespace dopacast
