#include "dopacast/types.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "dopacast/morphology.hpp"

namespace dopacast {

std::string describe(const std::vector<Violation>& violations) {
  if (violations.empty()) return "no violations";
  std::ostringstream os;
  os << violations.size() << " violation(s):";
  for (const auto& v : violations) os << " [" << v.field << ": " << v.rule << "]";
  return os.str();
}

SliceImage SliceImage::denormalized() const {
  if (!normalized) return *this;
  SliceImage out = *this;
  const float span = norm_hi - norm_lo;
  for (auto& v : out.pixels) v = (v + 1.0F) * 0.5F * span + norm_lo;
  out.normalized = false;
  return out;
}

RoiWeightMask RoiWeightMask::from_zones(Grid<Zone> zones) {
  RoiWeightMask m;
  m.weights = ImageGrid(zones.rows(), zones.cols());
  for (std::size_t i = 0; i < zones.size(); ++i) m.weights[i] = zone_weight(zones[i]);
  m.zones = std::move(zones);
  return m;
}

std::vector<Violation> validate_ledd(const LeddSeries& series, const std::string& field) {
  std::vector<Violation> out;
  if (series.doses.size() != static_cast<std::size_t>(kLeddMonths)) {
    out.push_back({field + ".doses", "length must be 12, got " + std::to_string(series.doses.size())});
  }
  for (std::size_t m = 0; m < series.doses.size(); ++m) {
    const double d = series.doses[m];
    if (!std::isfinite(d)) {
      out.push_back({field + ".doses[" + std::to_string(m) + "]", "dose must be finite"});
    } else if (series.scale == DoseScale::kRaw && d < 0.0) {
      out.push_back({field + ".doses[" + std::to_string(m) + "]", "raw dose must be >= 0"});
    }
  }
  return out;
}

namespace {

void check_slices(const std::vector<SliceImage>& slices, const std::string& field, std::vector<Violation>& out) {
  if (slices.size() != static_cast<std::size_t>(kNumSlices)) {
    out.push_back({field, "expected 14 slices, got " + std::to_string(slices.size())});
  }
  std::set<int> seen;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const auto& s = slices[i];
    const std::string f = field + "[" + std::to_string(i) + "]";
    if (s.pixels.rows() != kImageSize || s.pixels.cols() != kImageSize) {
      out.push_back({f + ".pixels", "shape must be 128x128, got " + std::to_string(s.pixels.rows()) + "x" +
                                        std::to_string(s.pixels.cols())});
    }
    if (s.slice_index < kFirstSlice || s.slice_index > kLastSlice) {
      out.push_back({f + ".slice_index", "slice index " + std::to_string(s.slice_index) + " outside [34, 47]"});
    }
    if (!seen.insert(s.slice_index).second) {
      out.push_back({f + ".slice_index", "duplicate slice index " + std::to_string(s.slice_index)});
    }
    bool finite = true;
    float lo = 0.0F;
    float hi = 0.0F;
    if (!s.pixels.empty()) {
      const auto [mn, mx] = std::minmax_element(s.pixels.begin(), s.pixels.end());
      lo = *mn;
      hi = *mx;
      finite = std::all_of(s.pixels.begin(), s.pixels.end(), [](float v) { return std::isfinite(v); });
    }
    if (!finite) out.push_back({f + ".pixels", "all values must be finite"});
    if (s.normalized && finite && (lo < -1.0F || hi > 1.0F)) {
      out.push_back({f + ".pixels", "normalized slice must lie in [-1, 1]"});
    }
  }
  std::set<int> expected;
  for (int k = kFirstSlice; k <= kLastSlice; ++k) expected.insert(k);
  if (seen != expected) out.push_back({field, "slice indices must be exactly {34..47}"});
}

void check_roi(const RoiWeightMask& m, const std::string& f, std::vector<Violation>& out) {
  if (m.weights.rows() != kImageSize || m.weights.cols() != kImageSize || !m.zones.same_shape(m.weights)) {
    out.push_back({f, "weights and zones must both be 128x128"});
    return;
  }
  bool mismatch = false;
  BinaryMask striatum(m.zones.rows(), m.zones.cols(), 0);
  for (std::size_t i = 0; i < m.zones.size(); ++i) {
    if (m.weights[i] != zone_weight(m.zones[i])) mismatch = true;
    striatum[i] = static_cast<std::uint8_t>(m.zones[i] == Zone::kStriatum);
  }
  if (mismatch) out.push_back({f + ".weights", "weights must be 1.0/0.8/0.4 matching zones"});
  const BinaryMask shell = dilate(striatum, 4);
  for (std::size_t i = 0; i < shell.size(); ++i) {
    if (shell[i] != 0 && striatum[i] == 0 && m.zones[i] != Zone::kBuffer) {
      out.push_back({f + ".zones", "buffer must cover the 4-iteration dilation shell of the striatum"});
      break;
    }
  }
}

std::vector<double> log1p_doses(const std::vector<double>& raw) {
  std::vector<double> out(raw.size());
  std::transform(raw.begin(), raw.end(), out.begin(), [](double d) { return std::log1p(d); });
  return out;
}

}  // namespace

std::vector<Violation> validate_record(const SubjectRecord& record) {
  std::vector<Violation> out;
  if (record.subject_id.empty()) out.push_back({"subject_id", "must be non-empty"});
  check_slices(record.screening, "screening", out);
  check_slices(record.month12, "month12", out);
  auto ledd = validate_ledd(record.ledd);
  out.insert(out.end(), ledd.begin(), ledd.end());
  if (record.roi.size() != static_cast<std::size_t>(kNumSlices)) {
    out.push_back({"roi", "expected 14 masks, got " + std::to_string(record.roi.size())});
  }
  for (std::size_t i = 0; i < record.roi.size(); ++i) check_roi(record.roi[i], "roi[" + std::to_string(i) + "]", out);
  return out;
}

SliceImage normalize_with(const SliceImage& raw, float lo, float hi) {
  SliceImage out = raw;
  const double span = static_cast<double>(hi) - static_cast<double>(lo);
  const double scale = span > 1e-12 ? 2.0 / span : 0.0;
  for (auto& v : out.pixels) {
    const double n = (static_cast<double>(v) - lo) * scale - 1.0;
    v = static_cast<float>(std::clamp(n, -1.0, 1.0));
  }
  out.normalized = true;
  out.norm_lo = lo;
  out.norm_hi = hi;
  return out;
}

std::vector<TrainingPair> to_training_pairs(const SubjectRecord& record) {
  auto violations = validate_record(record);
  if (!violations.empty()) throw ValidationError(std::move(violations));
  if (record.ledd.scale != DoseScale::kRaw) {
    throw ValidationError(std::vector<Violation>{{"ledd.scale", "record LEDD must be raw"}});
  }

  auto by_index = [](const std::vector<SliceImage>& v, int k) -> std::size_t {
    return static_cast<std::size_t>(std::find_if(v.begin(), v.end(), [k](const SliceImage& s) {
                                      return s.slice_index == k;
                                    }) - v.begin());
  };

  LeddSeries log_series{log1p_doses(record.ledd.doses), DoseScale::kLog1p};
  std::vector<TrainingPair> pairs;
  pairs.reserve(kNumSlices);
  for (int k = kFirstSlice; k <= kLastSlice; ++k) {
    const std::size_t si = by_index(record.screening, k);
    const std::size_t ti = by_index(record.month12, k);
    const auto& screening = record.screening[si];
    const auto [mn, mx] = std::minmax_element(screening.pixels.begin(), screening.pixels.end());
    TrainingPair p;
    p.subject_id = record.subject_id;
    p.condition = normalize_with(screening, *mn, *mx);
    p.target = normalize_with(record.month12[ti], *mn, *mx);
    p.ledd = log_series;
    p.roi = record.roi[si];
    p.slice_index = k;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace dopacast
