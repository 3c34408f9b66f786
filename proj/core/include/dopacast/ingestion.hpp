#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dopacast/io.hpp"
#include "dopacast/types.hpp"

namespace dopacast {

// --- real-data ingestion ------------------------------------------------------

/// Builds a validated record from one manifest entry. Payload entries are read
/// as slice stacks; NIfTI entries are volumes from which slices 34..47 are cut.
/// ROI masks are read when the entry names them, otherwise computed from the
/// screening slices. Throws ValidationError on missing slices, unknown subject
/// ids in the LEDD table, or negative doses.
SubjectRecord load_subject(const ManifestEntry& entry, const std::filesystem::path& base_dir,
                           const std::map<std::string, LeddSeries>& ledd);

struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<SubjectRecord> records;
  std::vector<Split> splits;
};

LoadedDataset load_dataset(const std::filesystem::path& dir);

/// Writes records as payload stacks + ROI masks + LEDD CSV + manifest.json.
void save_dataset(const std::filesystem::path& dir, const std::vector<SubjectRecord>& records,
                  const std::vector<Split>& splits, bool preprocessed = false,
                  const nlohmann::json& preprocess = nlohmann::json::object());

// --- synthetic phantom cohort -------------------------------------------------

/// Elliptical radius of pixel (r, c) with respect to a blob; 1 on the boundary.
double blob_radius(const PhantomLaw::Blob& blob, double row, double col);

/// Logistic uptake profile of a blob, ~1 inside, ~0 outside.
ImageGrid blob_profile(const PhantomLaw::Blob& blob, double edge_width, int size = kImageSize);

/// Unaffected-hemisphere uptake amplitude for a slice index.
double slice_amplitude(int slice_index);

/// Treatment attenuation of decay: exp(-mean(log1p(L)) / dose_scale), in (0, 1].
double dose_attenuation(const LeddSeries& raw, double dose_scale);

/// Pixels with elliptical radius <= 1 in blob `which` (or both when which < 0).
BinaryMask phantom_ground_truth(const PhantomLaw& law, int which = -1, int size = kImageSize);

/// One subject, deterministic in (spec.seed, index).
SubjectRecord generate_phantom_subject(const PhantomSpec& spec, int index);

/// spec.n_subjects records with ids "phantom_0000", ...; ROI masks attached.
std::vector<SubjectRecord> generate_phantom_cohort(const PhantomSpec& spec);

/// Noise-free month-12 slices under the subject's planted law (raw units).
/// Throws std::invalid_argument for records without phantom provenance or whose
/// law no longer matches its regeneration.
std::vector<SliceImage> phantom_oracle_forecast(const SubjectRecord& record);

/// Screening slices of the regenerated subject (raw units), for replaying the
/// preprocessing applied to real slices.
std::vector<SliceImage> phantom_raw_screening(const SubjectRecord& record);

}  // namespace dopacast
