#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dopacast/grid.hpp"
#include "dopacast/types.hpp"

namespace dopacast {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Tensor payloads: <stem>.f32 holds little-endian float32 values in row-major
// order, <stem>.json describes them:
//   {"dtype": "float32", "byte_order": "little", "shape": [...],
//    "slice_indices": [...], ...extra keys}
// ---------------------------------------------------------------------------

struct Payload {
  std::vector<std::int64_t> shape;
  std::vector<int> slice_indices;
  std::vector<float> values;
  nlohmann::json extra = nlohmann::json::object();
};

void write_payload(const fs::path& stem, const Payload& payload);
Payload read_payload(const fs::path& stem);

/// Stacks slices into a [n, rows, cols] payload. Normalization state is kept in
/// the sidecar under "normalized" and "norm_range".
void write_slices(const fs::path& stem, const std::vector<SliceImage>& slices);
std::vector<SliceImage> read_slices(const fs::path& stem);

/// ROI masks as a float weight payload plus an 8-bit PNG (0 background,
/// 128 buffer, 255 striatum).
void write_roi(const fs::path& stem, const RoiWeightMask& mask);
RoiWeightMask read_roi(const fs::path& stem);

// ---------------------------------------------------------------------------
// LEDD CSV: header "subject_id,month_1,...,month_12", one row per subject.
// ---------------------------------------------------------------------------

std::map<std::string, LeddSeries> read_ledd_csv(const fs::path& path);
void write_ledd_csv(const fs::path& path, const std::vector<std::pair<std::string, LeddSeries>>& rows);

// ---------------------------------------------------------------------------
// NIfTI-1 single-file volumes (.nii).
// ---------------------------------------------------------------------------

struct NiftiVolume {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  std::array<float, 3> pixdim{1.0F, 1.0F, 1.0F};
  std::vector<float> data;  // x fastest, then y, then z; scaling already applied

  float at(int x, int y, int z) const {
    return data[(static_cast<std::size_t>(z) * static_cast<std::size_t>(ny) + static_cast<std::size_t>(y)) *
                    static_cast<std::size_t>(nx) +
                static_cast<std::size_t>(x)];
  }
};

/// Reads uint8/int16/int32/float32/float64/uint16 volumes of either byte order
/// and applies scl_slope/scl_inter.
NiftiVolume read_nifti(const fs::path& path);

/// Writes a little-endian float32 NIfTI-1 file.
void write_nifti(const fs::path& path, const NiftiVolume& volume);

/// Axial slices first..last (volume z indices) as raw SliceImages; row = y, col = x.
/// Throws ValidationError if the volume is not 128x128 in-plane or too short.
std::vector<SliceImage> extract_axial_slices(const NiftiVolume& volume, int first = kFirstSlice,
                                             int last = kLastSlice);

/// Packs slices into a volume of depth `depth` with the slices at their indices.
NiftiVolume slices_to_volume(const std::vector<SliceImage>& slices, int depth);

// ---------------------------------------------------------------------------
// PNG output.
// ---------------------------------------------------------------------------

void write_png_gray(const fs::path& path, const Grid<std::uint8_t>& image);
/// `rgb` is rows*cols*3 bytes, row-major.
void write_png_rgb(const fs::path& path, int rows, int cols, const std::vector<std::uint8_t>& rgb);

// ---------------------------------------------------------------------------
// Checkpoint container: "DPCKPT01", uint64 LE header length, JSON header
// {"config": ..., "meta": ..., "tensors": [{"name", "dtype", "shape",
// "offset", "nbytes"}]}, then the concatenated little-endian tensor bytes.
// ---------------------------------------------------------------------------

struct NamedTensor {
  std::string name;
  std::string dtype;  // "float32" or "float64"
  std::vector<std::int64_t> shape;
  std::vector<std::uint8_t> bytes;
};

struct Container {
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

void write_container(const fs::path& path, const Container& container);
Container read_container(const fs::path& path);

// ---------------------------------------------------------------------------
// Dataset manifest (manifest.json inside a dataset directory).
// ---------------------------------------------------------------------------

enum class Split : std::uint8_t { kTrain, kVal, kTest };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct ManifestEntry {
  std::string subject_id;
  Split split = Split::kTrain;
  std::string format = "payload";  // "payload" or "nifti"
  std::string screening;           // stem (payload) or .nii path, relative to the manifest
  std::string month12;
  std::string roi;  // optional payload stem
  std::optional<PhantomLaw> phantom;
};

struct DatasetManifest {
  int version = 1;
  std::string ledd_csv = "ledd.csv";
  bool preprocessed = false;
  nlohmann::json preprocess = nlohmann::json::object();
  std::vector<ManifestEntry> subjects;
};

void write_manifest(const fs::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const fs::path& path);

nlohmann::json phantom_law_to_json(const PhantomLaw& law);
PhantomLaw phantom_law_from_json(const nlohmann::json& j);

/// Deterministic subject-level split: shuffle with `seed`, then the first
/// round(train * n) subjects train, the next round(val * n) validate and the
/// rest test.
std::vector<Split> assign_splits(std::size_t n, std::uint64_t seed, double train = 0.8, double val = 0.1);

/// 64-bit FNV-1a, rendered as 16 hex digits. Used for content-addressed hashes.
std::string fnv1a_hex(std::string_view bytes);
std::string file_hash(const fs::path& path);

}  // namespace dopacast
