#include "dopacast/ingestion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dopacast/preprocessing.hpp"
#include "dopacast/random.hpp"

namespace dopacast {

namespace {

std::vector<SliceImage> read_stack(const ManifestEntry& entry, const fs::path& base, const std::string& rel) {
  const fs::path p = base / rel;
  if (entry.format == "payload") return read_slices(p);
  if (entry.format == "nifti") return extract_axial_slices(read_nifti(p));
  throw ValidationError("subject " + entry.subject_id + ": unknown format '" + entry.format + "'");
}

}  // namespace

SubjectRecord load_subject(const ManifestEntry& entry, const fs::path& base_dir,
                           const std::map<std::string, LeddSeries>& ledd) {
  SubjectRecord r;
  r.subject_id = entry.subject_id;
  r.screening = read_stack(entry, base_dir, entry.screening);
  r.month12 = read_stack(entry, base_dir, entry.month12);
  auto it = ledd.find(entry.subject_id);
  if (it == ledd.end()) throw ValidationError("subject " + entry.subject_id + " has no row in the LEDD table");
  r.ledd = it->second;
  r.phantom = entry.phantom;
  // Validate slices before touching ROI so missing ranges report clearly.
  SubjectRecord probe = r;
  probe.roi.assign(kNumSlices, RoiWeightMask::from_zones(Grid<Zone>(kImageSize, kImageSize, Zone::kBackground)));
  if (auto v = validate_record(probe); !v.empty()) throw ValidationError(std::move(v));
  if (!entry.roi.empty()) {
    r.roi.assign(r.screening.size(), read_roi(base_dir / entry.roi));
  } else {
    attach_roi(r);
  }
  if (auto v = validate_record(r); !v.empty()) throw ValidationError(std::move(v));
  return r;
}

LoadedDataset load_dataset(const fs::path& dir) {
  LoadedDataset d;
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw IoError("no manifest.json in " + dir.string());
  d.manifest = read_manifest(manifest_path);
  const auto ledd = read_ledd_csv(dir / d.manifest.ledd_csv);
  for (const auto& e : d.manifest.subjects) {
    d.records.push_back(load_subject(e, dir, ledd));
    d.splits.push_back(e.split);
  }
  return d;
}

void save_dataset(const fs::path& dir, const std::vector<SubjectRecord>& records, const std::vector<Split>& splits,
                  bool preprocessed, const nlohmann::json& preprocess) {
  if (records.size() != splits.size()) throw std::invalid_argument("save_dataset: one split per record required");
  fs::create_directories(dir);
  DatasetManifest m;
  m.preprocessed = preprocessed;
  m.preprocess = preprocess;
  std::vector<std::pair<std::string, LeddSeries>> rows;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (auto v = validate_record(r); !v.empty()) throw ValidationError(std::move(v));
    for (const auto& mask : r.roi) {
      if (mask.zones != r.roi.front().zones) {
        throw std::invalid_argument("save_dataset: subject " + r.subject_id + " has per-slice ROI masks");
      }
    }
    const std::string sub = "subjects/" + r.subject_id + "/";
    write_slices(dir / (sub + "screening"), r.screening);
    write_slices(dir / (sub + "month12"), r.month12);
    write_roi(dir / (sub + "roi"), r.roi.front());
    m.subjects.push_back({r.subject_id, splits[i], "payload", sub + "screening", sub + "month12", sub + "roi", r.phantom});
    rows.emplace_back(r.subject_id, r.ledd);
  }
  write_ledd_csv(dir / m.ledd_csv, rows);
  write_manifest(dir / "manifest.json", m);
}

// --- phantom ------------------------------------------------------------------------

double blob_radius(const PhantomLaw::Blob& blob, double row, double col) {
  const double dx = col - blob.center_col;
  const double dy = row - blob.center_row;
  const double c = std::cos(blob.tilt);
  const double s = std::sin(blob.tilt);
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  return std::sqrt((u / blob.semi_minor) * (u / blob.semi_minor) + (v / blob.semi_major) * (v / blob.semi_major));
}

ImageGrid blob_profile(const PhantomLaw::Blob& blob, double edge_width, int size) {
  ImageGrid out(size, size);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const double rad = blob_radius(blob, r, c);
      out(r, c) = static_cast<float>(1.0 / (1.0 + std::exp(-(1.0 - rad) / edge_width)));
    }
  return out;
}

double slice_amplitude(int slice_index) {
  return 0.7 + 0.3 * std::sin(std::numbers::pi * (slice_index - (kFirstSlice - 1)) / (kNumSlices + 1));
}

double dose_attenuation(const LeddSeries& raw, double dose_scale) {
  if (raw.doses.empty()) return 1.0;
  double mean = 0.0;
  for (double d : raw.doses) mean += std::log1p(std::max(0.0, d));
  mean /= static_cast<double>(raw.doses.size());
  return std::exp(-mean / dose_scale);
}

BinaryMask phantom_ground_truth(const PhantomLaw& law, int which, int size) {
  BinaryMask out(size, size, 0);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      bool in = false;
      for (int b = 0; b < 2; ++b) {
        if (which >= 0 && b != which) continue;
        in = in || blob_radius(law.blobs[static_cast<std::size_t>(b)], r, c) <= 1.0;
      }
      out(r, c) = static_cast<std::uint8_t>(in);
    }
  return out;
}

namespace {

constexpr double kScreeningImbalance = 0.25;  // affected-side screening deficit per unit severity * asymmetry
constexpr double kMinFactor = 0.05;

struct Synthesized {
  SubjectRecord record;
  std::vector<SliceImage> noise_free_month12;
};

ImageGrid brain_support() {
  ImageGrid brain(kImageSize, kImageSize, 0.0F);
  for (int r = 0; r < kImageSize; ++r)
    for (int c = 0; c < kImageSize; ++c) {
      const double y = (r - 64.0) / 58.0;
      const double x = (c - 63.5) / 50.0;
      brain(r, c) = x * x + y * y <= 1.0 ? 1.0F : 0.0F;
    }
  return gaussian_blur(brain, 8.0);
}

ImageGrid correlated_field(Rng& rng, double stddev) {
  ImageGrid white(kImageSize, kImageSize);
  for (auto& v : white) v = static_cast<float>(rng.normal());
  if (stddev <= 0.0) {
    white.fill(0.0F);
    return white;
  }
  ImageGrid field = gaussian_blur(white, 3.0);
  double mean = 0.0;
  double sq = 0.0;
  for (float v : field) {
    mean += v;
    sq += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(field.size());
  mean /= n;
  const double sd = std::sqrt(std::max(sq / n - mean * mean, 1e-30));
  for (auto& v : field) v = static_cast<float>((v - mean) / sd * stddev);
  return field;
}

Synthesized synthesize(const PhantomSpec& spec, int index) {
  if (spec.n_subjects < 1) throw std::invalid_argument("phantom: n_subjects must be >= 1");
  for (double v : {spec.asymmetry, spec.decay_gain, spec.noise_std, spec.background_noise_std, spec.zero_dose_fraction,
                   spec.max_dose, spec.dose_scale}) {
    if (!std::isfinite(v)) throw std::invalid_argument("phantom: spec values must be finite");
  }
  if (spec.asymmetry < 0.0 || spec.asymmetry > 1.0) throw std::invalid_argument("phantom: asymmetry outside [0, 1]");

  Rng rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(index)}));
  PhantomLaw law;
  law.spec = spec;
  law.subject_index = index;
  const double offset = 22.0 + rng.uniform(-2.0, 2.0);
  const double center_row = 60.0 + rng.uniform(-3.0, 3.0);
  const double semi_major = 20.0 * rng.uniform(0.92, 1.08);
  const double semi_minor = 13.0 * rng.uniform(0.92, 1.08);
  const double tilt = (20.0 + rng.uniform(-5.0, 5.0)) * std::numbers::pi / 180.0;
  const double midline = (kImageSize - 1) / 2.0;
  law.blobs[0] = {center_row, midline - offset, semi_major, semi_minor, tilt};
  law.blobs[1] = {center_row, midline + offset, semi_major, semi_minor, -tilt};
  law.severity = rng.uniform(0.5, 1.5);
  law.affected = static_cast<int>(rng.uniform_int(0, 1));

  LeddSeries ledd;
  const bool untreated = rng.uniform() < spec.zero_dose_fraction;
  const double level = untreated ? 0.0 : rng.uniform(50.0, std::max(50.0, spec.max_dose));
  const auto ramp = static_cast<double>(rng.uniform_int(1, 4));
  for (int m = 0; m < kLeddMonths; ++m) {
    const double target = level * std::min(1.0, (m + 1) / ramp) + rng.normal(0.0, 20.0);
    ledd.doses.push_back(std::max(0.0, std::round(target / 25.0) * 25.0));
  }

  const double decay = spec.decay_gain * law.severity * dose_attenuation(ledd, spec.dose_scale);
  const double unaffected_share = 1.0 - spec.asymmetry;
  law.month12_factor[static_cast<std::size_t>(law.affected)] = std::max(kMinFactor, 1.0 - decay);
  law.month12_factor[static_cast<std::size_t>(1 - law.affected)] = std::max(kMinFactor, 1.0 - decay * unaffected_share);

  const std::array<ImageGrid, 2> profile{blob_profile(law.blobs[0], law.edge_width),
                                         blob_profile(law.blobs[1], law.edge_width)};
  const ImageGrid brain = brain_support();
  const double imbalance = 1.0 - kScreeningImbalance * law.severity * spec.asymmetry;

  Synthesized out;
  auto& rec = out.record;
  rec.subject_id = "phantom_" + std::string(4 - std::min<std::size_t>(4, std::to_string(index).size()), '0') +
                   std::to_string(index);
  rec.ledd = ledd;
  for (int k = kFirstSlice; k <= kLastSlice; ++k) {
    Rng field_rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(index), 1, static_cast<std::uint64_t>(k)}));
    Rng scan_rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(index), 2, static_cast<std::uint64_t>(k)}));
    const ImageGrid field = correlated_field(field_rng, spec.background_noise_std);
    std::array<double, 2> amp{};
    for (std::size_t b = 0; b < 2; ++b) {
      amp[b] = slice_amplitude(k) * (static_cast<int>(b) == law.affected ? imbalance : 1.0);
    }
    SliceImage screening{ImageGrid(kImageSize, kImageSize), k, false, 0.0F, 1.0F};
    SliceImage month12 = screening;
    SliceImage clean = screening;
    for (std::size_t i = 0; i < screening.pixels.size(); ++i) {
      const double background = 0.02 + 0.18 * brain[i] + static_cast<double>(field[i]) * brain[i];
      double s = background;
      double m = background;
      for (std::size_t b = 0; b < 2; ++b) {
        s += (amp[b] * 1.0) * profile[b][i];
        m += (amp[b] * law.month12_factor[b]) * profile[b][i];
      }
      screening.pixels[i] = static_cast<float>(s);
      clean.pixels[i] = static_cast<float>(m);
      month12.pixels[i] = spec.noise_std > 0.0 ? static_cast<float>(m + scan_rng.normal(0.0, spec.noise_std))
                                               : static_cast<float>(m);
    }
    rec.screening.push_back(std::move(screening));
    rec.month12.push_back(std::move(month12));
    out.noise_free_month12.push_back(std::move(clean));
  }
  rec.phantom = law;
  attach_roi(rec);
  return out;
}

const PhantomLaw& require_law(const SubjectRecord& record) {
  if (!record.phantom) {
    throw std::invalid_argument("phantom oracle: record " + record.subject_id + " has no phantom provenance");
  }
  return *record.phantom;
}

Synthesized replay(const SubjectRecord& record) {
  const PhantomLaw& law = require_law(record);
  Synthesized s = synthesize(law.spec, law.subject_index);
  const auto& regen = *s.record.phantom;
  if (regen.affected != law.affected || std::abs(regen.severity - law.severity) > 1e-12 ||
      std::abs(regen.month12_factor[0] - law.month12_factor[0]) > 1e-12 ||
      std::abs(regen.month12_factor[1] - law.month12_factor[1]) > 1e-12) {
    throw std::invalid_argument("phantom oracle: record " + record.subject_id + " does not match its planted law");
  }
  return s;
}

}  // namespace

SubjectRecord generate_phantom_subject(const PhantomSpec& spec, int index) { return synthesize(spec, index).record; }

std::vector<SubjectRecord> generate_phantom_cohort(const PhantomSpec& spec) {
  if (spec.n_subjects < 1) throw std::invalid_argument("phantom: n_subjects must be >= 1");
  std::vector<SubjectRecord> out;
  out.reserve(static_cast<std::size_t>(spec.n_subjects));
  for (int i = 0; i < spec.n_subjects; ++i) out.push_back(generate_phantom_subject(spec, i));
  return out;
}

std::vector<SliceImage> phantom_oracle_forecast(const SubjectRecord& record) {
  return replay(record).noise_free_month12;
}

std::vector<SliceImage> phantom_raw_screening(const SubjectRecord& record) { return replay(record).record.screening; }

}  // namespace dopacast
