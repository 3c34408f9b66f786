#pragma once

#include <string>
#include <vector>

#include "dopacast/grid.hpp"
#include "dopacast/types.hpp"

namespace dopacast {

/// sum(W * |a - b|) / sum(W). Throws std::invalid_argument on shape mismatch,
/// negative weights or an all-zero weight grid.
double roi_weighted_mae(const ImageGrid& a, const ImageGrid& b, const ImageGrid& weights);

/// sum(W * (a - b)^2) / sum(W).
double roi_weighted_mse(const ImageGrid& a, const ImageGrid& b, const ImageGrid& weights);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double data_range = 1.0;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Per-pixel SSIM map with a Gaussian window. Entries are defined only at
/// centers whose full window lies in the grid; the rest are NaN.
Grid<double> ssim_map(const ImageGrid& a, const ImageGrid& b, const SsimParams& params = {});

/// Weighted mean of the SSIM map over valid centers, where a center is valid
/// when its whole window is inside the grid and carries positive weight.
/// Inputs are expected in [0, data_range]. Two identical constant images give
/// exactly 1; differing constants give (2ab + C1) / (a^2 + b^2 + C1).
double roi_weighted_ssim(const ImageGrid& a, const ImageGrid& b, const ImageGrid& weights,
                         const SsimParams& params = {});

struct SliceMetrics {
  int slice_index = kFirstSlice;
  double ssim = 0.0;
  double mae = 0.0;
  double mse = 0.0;
  int n_subjects = 0;
};

/// Metrics for one prediction in [-1, 1] space: MAE/MSE directly, SSIM after
/// mapping both images to [0, 1].
SliceMetrics evaluate_slice(const ImageGrid& prediction, const ImageGrid& target, const ImageGrid& weights,
                            int slice_index);

/// The no-progression forecast: the screening slice, unchanged.
SliceImage baseline_no_progression(const TrainingPair& pair);

struct DeltaRow {
  int slice_index = kFirstSlice;
  double ssim_pct = 0.0;
  double mae_pct = 0.0;
  double mse_pct = 0.0;
};

/// Relative change in percent, (model - baseline) / baseline * 100. A zero
/// baseline gives 0 when the model is also zero and a signed infinity otherwise.
double relative_delta_pct(double baseline, double model);

struct EvalReport {
  std::vector<SliceMetrics> baseline;
  std::vector<SliceMetrics> model;
  std::vector<DeltaRow> delta;
  SliceMetrics baseline_mean;
  SliceMetrics model_mean;
  DeltaRow delta_mean;  // column-wise mean of the per-slice delta rows
  std::string intensity_space = "normalized [-1, 1]; SSIM on [0, 1]";
};

struct EvalSample {
  std::string subject_id;
  int slice_index = kFirstSlice;
  ImageGrid prediction;
  ImageGrid baseline;
  ImageGrid target;
  ImageGrid weights;
};

/// Assembles a report from already computed per-slice rows. Rows are matched
/// by slice index; the mean row averages every column of the slice rows.
EvalReport build_report_from_rows(std::vector<SliceMetrics> baseline, std::vector<SliceMetrics> model);

/// Per-slice means over subjects for model and baseline, then deltas and the
/// mean row. Throws std::invalid_argument if some subject lacks a slice that
/// another subject has, or if the samples are empty or misshapen.
EvalReport build_report(const std::vector<EvalSample>& samples);

std::string report_csv(const EvalReport& report);

/// Fixed-width text table: Slice | baseline SSIM MAE MSE | model SSIM dSSIM MAE dMAE MSE dMSE.
std::string report_table(const EvalReport& report);

}  // namespace dopacast
