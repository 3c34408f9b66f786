#pragma once

#include <span>
#include <vector>

#include "dopacast/grid.hpp"
#include "dopacast/types.hpp"

namespace dopacast {

/// Gaussian blur with the given standard deviation (pixels). The kernel is
/// truncated at 4 sigma; borders use half-sample symmetric reflection.
ImageGrid gaussian_blur(const ImageGrid& image, double sigma);

/// Linear-interpolated percentile, p in [0, 100].
double percentile(std::span<const float> values, double p);

struct AlphaMaskParams {
  double smoothing_sigma = 2.0;
  /// Ramp band on the max-normalized smoothed image.
  double ramp_low = 0.30;
  double ramp_high = 0.70;
};

struct AlphaMask {
  ImageGrid alpha;
  bool degenerate = false;  // set when the image carries no content (constant)
};

/// Content mask in [0, 1]: smoothstep over [ramp_low, ramp_high] of the
/// Gaussian-smoothed image divided by its maximum. Invariant to positive
/// intensity scaling. Constant images give alpha == 0 and `degenerate`.
AlphaMask compute_alpha_mask(const ImageGrid& image, const AlphaMaskParams& params = {});

struct SoftMaskParams {
  double sigma2 = 4.0;  // Gaussian variance, px^2
  double gamma = 0.5;   // background attenuation
  ImageGrid alpha;      // values in [0, 1]
};

/// alpha * I + (1 - alpha) * (gamma * blur(I)). Throws std::invalid_argument
/// for non-finite pixels, sigma2 <= 0, gamma outside [0, 1] or a shape mismatch.
ImageGrid soft_mask_blend(const ImageGrid& image, const SoftMaskParams& params);
SliceImage soft_mask_blend(const SliceImage& image, const SoftMaskParams& params);

struct ThresholdParams {
  int window = 31;
  /// Offset as a fraction of the dynamic range; the pixel threshold is
  /// local_mean - offset * range, so a negative offset raises the bar.
  double offset_fraction = -0.02;
  int opening_iterations = 1;
};

/// Mean-of-neighbourhood threshold followed by a 3x3 opening, for one view.
BinaryMask threshold_view(const ImageGrid& image, const ThresholdParams& params = {});

/// Intersection of the original-view mask and the re-flipped mask of the
/// horizontally flipped view; the result is mirror symmetric.
BinaryMask binary_mask(const ImageGrid& image, const ThresholdParams& params = {});

/// Smallest integer count c with c >= 0.65 * n, evaluated exactly.
int agreement_count(int n);

/// Pixels set in at least agreement_count(n) of the n masks.
BinaryMask aggregate_roi(std::span<const BinaryMask> masks);

/// 4 iterations of 3x3 dilation, minus the striatum itself.
BinaryMask dilate_buffer(const BinaryMask& striatum);

/// Zones and weights {1.0, 0.8, 0.4}. Throws std::invalid_argument if the two
/// masks overlap or differ in shape.
RoiWeightMask build_weight_mask(const BinaryMask& striatum, const BinaryMask& buffer);

/// Elementwise log(1 + L). Throws std::invalid_argument for negative doses or
/// a series that is already log-scaled.
LeddSeries ledd_log_transform(const LeddSeries& series);

struct PreprocessParams {
  double sigma2 = 4.0;
  double gamma = 0.5;
  AlphaMaskParams alpha;
  ThresholdParams threshold;
  bool soft_mask_condition = true;
  bool soft_mask_target = true;
};

/// Striatum/buffer/background mask for one subject from its screening slices.
RoiWeightMask compute_roi(std::span<const SliceImage> screening, const ThresholdParams& params = {});

/// Soft-masks the slices (alpha taken from each screening slice and shared with
/// the month-12 slice of the same index) and recomputes the ROI masks from the
/// processed screening slices. Returns the processed record.
SubjectRecord preprocess_record(const SubjectRecord& record, const PreprocessParams& params = {});

/// Soft-masks `companion` slices with the alpha of the same-index screening
/// slice, as preprocess_record does for month-12 slices.
std::vector<SliceImage> soft_mask_like(const std::vector<SliceImage>& screening,
                                       const std::vector<SliceImage>& companion, const PreprocessParams& params = {});

/// Fills `record.roi` from the screening slices without altering intensities.
void attach_roi(SubjectRecord& record, const ThresholdParams& params = {});

}  // namespace dopacast
