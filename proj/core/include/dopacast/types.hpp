#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dopacast/errors.hpp"
#include "dopacast/grid.hpp"

namespace dopacast {

inline constexpr int kImageSize = 128;
inline constexpr int kFirstSlice = 34;
inline constexpr int kLastSlice = 47;
inline constexpr int kNumSlices = kLastSlice - kFirstSlice + 1;
inline constexpr int kLeddMonths = 12;

inline constexpr float kStriatumWeight = 1.0F;
inline constexpr float kBufferWeight = 0.8F;
inline constexpr float kBackgroundWeight = 0.4F;

/// One axial slice. Raw slices carry arbitrary intensity units; normalized slices
/// live in [-1, 1] and remember the (lo, hi) pair that maps them back.
struct SliceImage {
  ImageGrid pixels;
  int slice_index = kFirstSlice;
  bool normalized = false;
  float norm_lo = 0.0F;
  float norm_hi = 1.0F;

  /// Maps a normalized slice back to raw intensity units.
  SliceImage denormalized() const;
};

enum class DoseScale : std::uint8_t { kRaw, kLog1p };

/// Twelve monthly levodopa-equivalent daily doses (mg/day).
struct LeddSeries {
  std::vector<double> doses;
  DoseScale scale = DoseScale::kRaw;
};

enum class Zone : std::uint8_t { kBackground = 0, kBuffer = 1, kStriatum = 2 };

constexpr float zone_weight(Zone z) noexcept {
  switch (z) {
    case Zone::kStriatum:
      return kStriatumWeight;
    case Zone::kBuffer:
      return kBufferWeight;
    case Zone::kBackground:
      break;
  }
  return kBackgroundWeight;
}

struct RoiWeightMask {
  ImageGrid weights;
  Grid<Zone> zones;

  static RoiWeightMask from_zones(Grid<Zone> zones);
};

/// Inputs of the synthetic cohort generator.
struct PhantomSpec {
  int n_subjects = 40;
  double asymmetry = 0.5;             // 0: both hemispheres decay alike, 1: only the affected one
  double decay_gain = 0.8;            // fractional uptake loss at zero dose and unit severity
  double noise_std = 0.01;            // per-scan white noise on month-12 slices
  double background_noise_std = 0.03;  // spatially correlated, shared by both visits
  double zero_dose_fraction = 0.15;
  double max_dose = 1200.0;  // mg/day
  double dose_scale = 12.0;  // decay attenuation exp(-mean log1p dose / dose_scale)
  std::uint64_t seed = 7;
};

/// Ground-truth law of one synthetic subject. Present only on records made by
/// the phantom generator; the oracle forecast replays it.
struct PhantomLaw {
  struct Blob {
    double center_row = 0.0;
    double center_col = 0.0;
    double semi_major = 0.0;  // along rows before tilt
    double semi_minor = 0.0;  // along columns before tilt
    double tilt = 0.0;        // radians
  };
  PhantomSpec spec;
  int subject_index = 0;
  std::array<Blob, 2> blobs{};  // [left, right] in image columns
  double edge_width = 0.06;     // logistic falloff in elliptical-radius units
  int affected = 0;             // index into blobs
  double severity = 1.0;
  std::array<double, 2> month12_factor{1.0, 1.0};  // multiplicative uptake factor per blob
};

struct SubjectRecord {
  std::string subject_id;
  std::vector<SliceImage> screening;
  std::vector<SliceImage> month12;
  LeddSeries ledd;
  std::vector<RoiWeightMask> roi;
  std::optional<PhantomLaw> phantom;
};

struct TrainingPair {
  std::string subject_id;
  SliceImage condition;
  SliceImage target;
  LeddSeries ledd;  // log1p scale
  RoiWeightMask roi;
  int slice_index = kFirstSlice;
};

/// Checks every record invariant. Empty result means the record is well formed.
std::vector<Violation> validate_record(const SubjectRecord& record);

/// Validates a series on its own (length, sign, finiteness).
std::vector<Violation> validate_ledd(const LeddSeries& series, const std::string& field = "ledd");

/// Min-max maps `raw` to [-1, 1] using the (lo, hi) pair; values outside are clipped.
SliceImage normalize_with(const SliceImage& raw, float lo, float hi);

/// One pair per slice index, ordered 34..47. Both images of a pair are min-max
/// normalized with the screening slice's range; LEDD is log1p-transformed.
/// Throws ValidationError when the record is invalid.
std::vector<TrainingPair> to_training_pairs(const SubjectRecord& record);

}  // namespace dopacast
