#include "dopacast/io.hpp"

#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dopacast/random.hpp"

namespace dopacast {
namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "payload I/O assumes a little-endian host");

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_bytes(const fs::path& path, const void* data, std::size_t n) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw IoError("short write to " + path.string());
}

void write_text(const fs::path& path, const std::string& text) { write_bytes(path, text.data(), text.size()); }

fs::path with_suffix(const fs::path& stem, const char* suffix) { return fs::path(stem.string() + suffix); }

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

template <typename T>
T byteswap_value(T v) {
  std::array<std::uint8_t, sizeof(T)> b{};
  std::memcpy(b.data(), &v, sizeof(T));
  std::reverse(b.begin(), b.end());
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

template <typename T>
T load(const std::uint8_t* p, bool swap) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return swap ? byteswap_value(v) : v;
}

template <typename T>
void store(std::uint8_t* p, T v) {
  std::memcpy(p, &v, sizeof(T));
}

std::vector<std::uint8_t> read_maybe_gz(const fs::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> buf{};
  int n = 0;
  while ((n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()))) > 0) out.insert(out.end(), buf.begin(), buf.begin() + n);
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw IoError("cannot decode " + path.string());
  return out;
}

json blob_to_json(const PhantomLaw::Blob& b) {
  return {{"center_row", b.center_row},
          {"center_col", b.center_col},
          {"semi_major", b.semi_major},
          {"semi_minor", b.semi_minor},
          {"tilt", b.tilt}};
}

PhantomLaw::Blob blob_from_json(const json& j) {
  PhantomLaw::Blob b;
  b.center_row = j.at("center_row").get<double>();
  b.center_col = j.at("center_col").get<double>();
  b.semi_major = j.at("semi_major").get<double>();
  b.semi_minor = j.at("semi_minor").get<double>();
  b.tilt = j.at("tilt").get<double>();
  return b;
}

}  // namespace

// --- payloads ---------------------------------------------------------------

void write_payload(const fs::path& stem, const Payload& payload) {
  if (element_count(payload.shape) != static_cast<std::int64_t>(payload.values.size())) {
    throw std::invalid_argument("write_payload: shape does not match value count");
  }
  json side = payload.extra;
  side["dtype"] = "float32";
  side["byte_order"] = "little";
  side["shape"] = payload.shape;
  side["slice_indices"] = payload.slice_indices;
  write_bytes(with_suffix(stem, ".f32"), payload.values.data(), payload.values.size() * sizeof(float));
  write_text(with_suffix(stem, ".json"), side.dump(2) + "\n");
}

Payload read_payload(const fs::path& stem) {
  json side;
  try {
    side = json::parse(read_text(with_suffix(stem, ".json")));
  } catch (const json::exception& e) {
    throw ValidationError("malformed sidecar " + with_suffix(stem, ".json").string() + ": " + e.what());
  }
  if (side.value("dtype", "") != "float32" || side.value("byte_order", "") != "little") {
    throw ValidationError("sidecar " + stem.string() + ".json: only little-endian float32 is supported");
  }
  Payload p;
  p.shape = side.at("shape").get<std::vector<std::int64_t>>();
  p.slice_indices = side.value("slice_indices", std::vector<int>{});
  const std::string raw = read_text(with_suffix(stem, ".f32"));
  const auto n = element_count(p.shape);
  if (static_cast<std::int64_t>(raw.size()) != n * static_cast<std::int64_t>(sizeof(float))) {
    throw ValidationError("payload " + stem.string() + ".f32 has " + std::to_string(raw.size()) +
                          " bytes, sidecar shape needs " + std::to_string(n * 4));
  }
  p.values.resize(static_cast<std::size_t>(n));
  std::memcpy(p.values.data(), raw.data(), raw.size());
  for (const char* key : {"dtype", "byte_order", "shape", "slice_indices"}) side.erase(key);
  p.extra = std::move(side);
  return p;
}

void write_slices(const fs::path& stem, const std::vector<SliceImage>& slices) {
  Payload p;
  const int rows = slices.empty() ? 0 : slices.front().pixels.rows();
  const int cols = slices.empty() ? 0 : slices.front().pixels.cols();
  p.shape = {static_cast<std::int64_t>(slices.size()), rows, cols};
  json ranges = json::array();
  bool normalized = !slices.empty();
  for (const auto& s : slices) {
    if (s.pixels.rows() != rows || s.pixels.cols() != cols) throw std::invalid_argument("write_slices: ragged slices");
    p.slice_indices.push_back(s.slice_index);
    p.values.insert(p.values.end(), s.pixels.begin(), s.pixels.end());
    normalized = normalized && s.normalized;
    ranges.push_back({s.norm_lo, s.norm_hi});
  }
  p.extra["normalized"] = normalized;
  if (normalized) p.extra["norm_range"] = ranges;
  write_payload(stem, p);
}

std::vector<SliceImage> read_slices(const fs::path& stem) {
  const Payload p = read_payload(stem);
  if (p.shape.size() != 3) throw ValidationError("slice payload " + stem.string() + " must be 3-D");
  const auto n = static_cast<std::size_t>(p.shape[0]);
  const int rows = static_cast<int>(p.shape[1]);
  const int cols = static_cast<int>(p.shape[2]);
  if (p.slice_indices.size() != n) throw ValidationError("slice payload " + stem.string() + ": slice_indices length");
  const bool normalized = p.extra.value("normalized", false);
  std::vector<SliceImage> out;
  const auto plane = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  for (std::size_t i = 0; i < n; ++i) {
    SliceImage s;
    s.pixels = ImageGrid(rows, cols, std::vector<float>(p.values.begin() + static_cast<std::ptrdiff_t>(i * plane),
                                                        p.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * plane)));
    s.slice_index = p.slice_indices[i];
    s.normalized = normalized;
    if (normalized) {
      s.norm_lo = p.extra.at("norm_range").at(i).at(0).get<float>();
      s.norm_hi = p.extra.at("norm_range").at(i).at(1).get<float>();
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_roi(const fs::path& stem, const RoiWeightMask& mask) {
  Payload p;
  p.shape = {mask.weights.rows(), mask.weights.cols()};
  p.values = mask.weights.storage();
  p.extra["content"] = "roi_weights";
  write_payload(stem, p);
  Grid<std::uint8_t> png(mask.zones.rows(), mask.zones.cols(), 0);
  for (std::size_t i = 0; i < png.size(); ++i) {
    png[i] = mask.zones[i] == Zone::kStriatum ? 255 : (mask.zones[i] == Zone::kBuffer ? 128 : 0);
  }
  write_png_gray(with_suffix(stem, ".png"), png);
}

RoiWeightMask read_roi(const fs::path& stem) {
  const Payload p = read_payload(stem);
  if (p.shape.size() != 2) throw ValidationError("roi payload " + stem.string() + " must be 2-D");
  Grid<Zone> zones(static_cast<int>(p.shape[0]), static_cast<int>(p.shape[1]), Zone::kBackground);
  for (std::size_t i = 0; i < zones.size(); ++i) {
    const float w = p.values[i];
    if (w == kStriatumWeight) {
      zones[i] = Zone::kStriatum;
    } else if (w == kBufferWeight) {
      zones[i] = Zone::kBuffer;
    } else if (w != kBackgroundWeight) {
      throw ValidationError("roi payload " + stem.string() + ": weight " + std::to_string(w) + " not in {1.0, 0.8, 0.4}");
    }
  }
  return RoiWeightMask::from_zones(std::move(zones));
}

// --- LEDD CSV -------------------------------------------------------------------

std::map<std::string, LeddSeries> read_ledd_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("LEDD CSV " + path.string() + " is empty");
  std::map<std::string, LeddSeries> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() != 1 + static_cast<std::size_t>(kLeddMonths)) {
      throw ValidationError(where + ": expected subject_id plus 12 monthly doses, got " +
                            std::to_string(cells.size()) + " columns");
    }
    LeddSeries s;
    for (std::size_t m = 1; m < cells.size(); ++m) {
      if (cells[m].find_first_not_of(" \t") == std::string::npos) {
        throw ValidationError(where + ": month " + std::to_string(m) + " is missing (gaps are not imputed)");
      }
      try {
        std::size_t used = 0;
        s.doses.push_back(std::stod(cells[m], &used));
      } catch (const std::exception&) {
        throw ValidationError(where + ": month " + std::to_string(m) + " is not a number");
      }
    }
    auto v = validate_ledd(s, "ledd[" + cells[0] + "]");
    if (!v.empty()) throw ValidationError(std::move(v));
    if (!out.emplace(cells[0], std::move(s)).second) throw ValidationError(where + ": duplicate subject " + cells[0]);
  }
  return out;
}

void write_ledd_csv(const fs::path& path, const std::vector<std::pair<std::string, LeddSeries>>& rows) {
  std::ostringstream os;
  os << "subject_id";
  for (int m = 1; m <= kLeddMonths; ++m) os << ",month_" << m;
  os << "\n";
  char buf[64];
  for (const auto& [id, s] : rows) {
    os << id;
    for (double d : s.doses) {
      std::snprintf(buf, sizeof buf, ",%.17g", d);
      os << buf;
    }
    os << "\n";
  }
  write_text(path, os.str());
}

// --- NIfTI-1 ----------------------------------------------------------------------

NiftiVolume read_nifti(const fs::path& path) {
  const auto bytes = read_maybe_gz(path);
  if (bytes.size() < 348) throw ValidationError(path.string() + ": too short for a NIfTI-1 header");
  bool swap = false;
  if (load<std::int32_t>(bytes.data(), false) != 348) {
    if (load<std::int32_t>(bytes.data(), true) != 348) throw ValidationError(path.string() + ": not a NIfTI-1 file");
    swap = true;
  }
  if (std::memcmp(bytes.data() + 344, "n+1", 3) != 0) {
    throw ValidationError(path.string() + ": only single-file NIfTI-1 (magic n+1) is supported");
  }
  std::array<std::int16_t, 8> dim{};
  for (int i = 0; i < 8; ++i) dim[static_cast<std::size_t>(i)] = load<std::int16_t>(bytes.data() + 40 + 2 * i, swap);
  if (dim[0] < 3) throw ValidationError(path.string() + ": expected a 3-D volume");
  for (int i = 4; i <= std::min<int>(dim[0], 7); ++i) {
    if (dim[static_cast<std::size_t>(i)] > 1) throw ValidationError(path.string() + ": 4-D+ volumes are not supported");
  }
  const auto datatype = load<std::int16_t>(bytes.data() + 70, swap);
  const auto vox_offset = static_cast<std::size_t>(load<float>(bytes.data() + 108, swap));
  float slope = load<float>(bytes.data() + 112, swap);
  const float inter = load<float>(bytes.data() + 116, swap);
  if (slope == 0.0F || !std::isfinite(slope)) slope = 1.0F;

  NiftiVolume v;
  v.nx = dim[1];
  v.ny = dim[2];
  v.nz = dim[3];
  for (int i = 0; i < 3; ++i) v.pixdim[static_cast<std::size_t>(i)] = load<float>(bytes.data() + 80 + 4 * i, swap);
  const auto n = static_cast<std::size_t>(v.nx) * static_cast<std::size_t>(v.ny) * static_cast<std::size_t>(v.nz);
  std::size_t width = 0;
  switch (datatype) {
    case 2: case 256: width = 1; break;
    case 4: case 512: width = 2; break;
    case 8: case 16: width = 4; break;
    case 64: width = 8; break;
    default: throw ValidationError(path.string() + ": unsupported NIfTI datatype " + std::to_string(datatype));
  }
  if (bytes.size() < vox_offset + n * width) throw ValidationError(path.string() + ": truncated voxel data");
  v.data.resize(n);
  const std::uint8_t* p = bytes.data() + vox_offset;
  for (std::size_t i = 0; i < n; ++i, p += width) {
    double x = 0.0;
    switch (datatype) {
      case 2: x = *p; break;
      case 256: x = static_cast<std::int8_t>(*p); break;
      case 4: x = load<std::int16_t>(p, swap); break;
      case 512: x = load<std::uint16_t>(p, swap); break;
      case 8: x = load<std::int32_t>(p, swap); break;
      case 16: x = load<float>(p, swap); break;
      case 64: x = load<double>(p, swap); break;
      default: break;
    }
    v.data[i] = static_cast<float>(x * slope + inter);
  }
  return v;
}

void write_nifti(const fs::path& path, const NiftiVolume& volume) {
  const std::size_t n = volume.data.size();
  std::vector<std::uint8_t> bytes(352 + n * 4, 0);
  std::uint8_t* h = bytes.data();
  store<std::int32_t>(h, 348);
  const std::array<std::int16_t, 8> dim{3, static_cast<std::int16_t>(volume.nx), static_cast<std::int16_t>(volume.ny),
                                        static_cast<std::int16_t>(volume.nz), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) store<std::int16_t>(h + 40 + 2 * i, dim[static_cast<std::size_t>(i)]);
  store<std::int16_t>(h + 70, 16);
  store<std::int16_t>(h + 72, 32);
  store<float>(h + 76, 1.0F);
  for (int i = 0; i < 3; ++i) store<float>(h + 80 + 4 * i, volume.pixdim[static_cast<std::size_t>(i)]);
  store<float>(h + 108, 352.0F);
  store<float>(h + 112, 1.0F);
  store<float>(h + 116, 0.0F);
  h[123] = 2;  // mm
  std::memcpy(h + 344, "n+1", 4);
  std::memcpy(bytes.data() + 352, volume.data.data(), n * 4);
  write_bytes(path, bytes.data(), bytes.size());
}

std::vector<SliceImage> extract_axial_slices(const NiftiVolume& volume, int first, int last) {
  if (volume.nx != kImageSize || volume.ny != kImageSize) {
    throw ValidationError("volume in-plane size " + std::to_string(volume.nx) + "x" + std::to_string(volume.ny) +
                          " is not 128x128");
  }
  if (first < 0 || last >= volume.nz) {
    throw ValidationError("volume has " + std::to_string(volume.nz) + " slices; slices " + std::to_string(first) +
                          ".." + std::to_string(last) + " are required");
  }
  std::vector<SliceImage> out;
  for (int z = first; z <= last; ++z) {
    SliceImage s;
    s.slice_index = z;
    s.pixels = ImageGrid(volume.ny, volume.nx);
    for (int y = 0; y < volume.ny; ++y)
      for (int x = 0; x < volume.nx; ++x) s.pixels(y, x) = volume.at(x, y, z);
    out.push_back(std::move(s));
  }
  return out;
}

NiftiVolume slices_to_volume(const std::vector<SliceImage>& slices, int depth) {
  NiftiVolume v;
  v.nx = kImageSize;
  v.ny = kImageSize;
  v.nz = depth;
  v.data.assign(static_cast<std::size_t>(kImageSize) * kImageSize * static_cast<std::size_t>(depth), 0.0F);
  for (const auto& s : slices) {
    if (s.slice_index < 0 || s.slice_index >= depth) throw std::invalid_argument("slices_to_volume: index outside depth");
    for (int y = 0; y < kImageSize; ++y)
      for (int x = 0; x < kImageSize; ++x) {
        v.data[(static_cast<std::size_t>(s.slice_index) * kImageSize + static_cast<std::size_t>(y)) * kImageSize +
               static_cast<std::size_t>(x)] = s.pixels(y, x);
      }
  }
  return v;
}

// --- PNG --------------------------------------------------------------------------

namespace {

void write_png(const fs::path& path, int rows, int cols, int color_type, int channels, const std::uint8_t* data) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (fp == nullptr) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(cols), static_cast<png_uint_32>(rows), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < rows; ++r) {
    png_write_row(png, const_cast<png_bytep>(data + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) *
                                                        static_cast<std::size_t>(channels)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace

void write_png_gray(const fs::path& path, const Grid<std::uint8_t>& image) {
  write_png(path, image.rows(), image.cols(), PNG_COLOR_TYPE_GRAY, 1, image.values().data());
}

void write_png_rgb(const fs::path& path, int rows, int cols, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * 3) {
    throw std::invalid_argument("write_png_rgb: buffer size mismatch");
  }
  write_png(path, rows, cols, PNG_COLOR_TYPE_RGB, 3, rgb.data());
}

// --- checkpoint container -----------------------------------------------------------

const NamedTensor* Container::find(const std::string& name) const {
  auto it = std::find_if(tensors.begin(), tensors.end(), [&](const NamedTensor& t) { return t.name == name; });
  return it == tensors.end() ? nullptr : &*it;
}

void write_container(const fs::path& path, const Container& container) {
  json header;
  header["config"] = container.config;
  header["meta"] = container.meta;
  header["tensors"] = json::array();
  std::uint64_t offset = 0;
  for (const auto& t : container.tensors) {
    header["tensors"].push_back(
        {{"name", t.name}, {"dtype", t.dtype}, {"shape", t.shape}, {"offset", offset}, {"nbytes", t.bytes.size()}});
    offset += t.bytes.size();
  }
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(8 + 8 + text.size());
  std::memcpy(out.data(), "DPCKPT01", 8);
  store<std::uint64_t>(out.data() + 8, text.size());
  std::memcpy(out.data() + 16, text.data(), text.size());
  out.reserve(out.size() + offset);
  for (const auto& t : container.tensors) out.insert(out.end(), t.bytes.begin(), t.bytes.end());
  write_bytes(path, out.data(), out.size());
}

Container read_container(const fs::path& path) {
  const std::string raw = read_text(path);
  if (raw.size() < 16 || raw.compare(0, 8, "DPCKPT01") != 0) throw ValidationError(path.string() + ": not a checkpoint");
  const auto len = load<std::uint64_t>(reinterpret_cast<const std::uint8_t*>(raw.data()) + 8, false);
  if (16 + len > raw.size()) throw ValidationError(path.string() + ": truncated header");
  json header;
  try {
    header = json::parse(raw.substr(16, len));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": malformed header: " + e.what());
  }
  Container c;
  c.config = header.value("config", json::object());
  c.meta = header.value("meta", json::object());
  const std::size_t base = 16 + len;
  for (const auto& t : header.at("tensors")) {
    NamedTensor nt;
    nt.name = t.at("name").get<std::string>();
    nt.dtype = t.at("dtype").get<std::string>();
    nt.shape = t.at("shape").get<std::vector<std::int64_t>>();
    const auto off = t.at("offset").get<std::size_t>();
    const auto nb = t.at("nbytes").get<std::size_t>();
    if (base + off + nb > raw.size()) throw ValidationError(path.string() + ": tensor " + nt.name + " truncated");
    nt.bytes.assign(raw.begin() + static_cast<std::ptrdiff_t>(base + off),
                    raw.begin() + static_cast<std::ptrdiff_t>(base + off + nb));
    c.tensors.push_back(std::move(nt));
  }
  return c;
}

// --- manifest ---------------------------------------------------------------------

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw ValidationError("unknown split '" + s + "'");
}

json phantom_law_to_json(const PhantomLaw& law) {
  const auto& s = law.spec;
  return {{"spec",
           {{"n_subjects", s.n_subjects},
            {"asymmetry", s.asymmetry},
            {"decay_gain", s.decay_gain},
            {"noise_std", s.noise_std},
            {"background_noise_std", s.background_noise_std},
            {"zero_dose_fraction", s.zero_dose_fraction},
            {"max_dose", s.max_dose},
            {"dose_scale", s.dose_scale},
            {"seed", s.seed}}},
          {"subject_index", law.subject_index},
          {"blobs", {blob_to_json(law.blobs[0]), blob_to_json(law.blobs[1])}},
          {"edge_width", law.edge_width},
          {"affected", law.affected},
          {"severity", law.severity},
          {"month12_factor", law.month12_factor}};
}

PhantomLaw phantom_law_from_json(const json& j) {
  PhantomLaw law;
  const auto& s = j.at("spec");
  law.spec.n_subjects = s.at("n_subjects").get<int>();
  law.spec.asymmetry = s.at("asymmetry").get<double>();
  law.spec.decay_gain = s.at("decay_gain").get<double>();
  law.spec.noise_std = s.at("noise_std").get<double>();
  law.spec.background_noise_std = s.at("background_noise_std").get<double>();
  law.spec.zero_dose_fraction = s.at("zero_dose_fraction").get<double>();
  law.spec.max_dose = s.at("max_dose").get<double>();
  law.spec.dose_scale = s.at("dose_scale").get<double>();
  law.spec.seed = s.at("seed").get<std::uint64_t>();
  law.subject_index = j.at("subject_index").get<int>();
  law.blobs[0] = blob_from_json(j.at("blobs").at(0));
  law.blobs[1] = blob_from_json(j.at("blobs").at(1));
  law.edge_width = j.at("edge_width").get<double>();
  law.affected = j.at("affected").get<int>();
  law.severity = j.at("severity").get<double>();
  law.month12_factor = j.at("month12_factor").get<std::array<double, 2>>();
  return law;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  json j;
  j["version"] = manifest.version;
  j["ledd_csv"] = manifest.ledd_csv;
  j["preprocessed"] = manifest.preprocessed;
  j["preprocess"] = manifest.preprocess;
  j["subjects"] = json::array();
  for (const auto& e : manifest.subjects) {
    json s{{"id", e.subject_id},
           {"split", to_string(e.split)},
           {"format", e.format},
           {"screening", e.screening},
           {"month12", e.month12}};
    if (!e.roi.empty()) s["roi"] = e.roi;
    if (e.phantom) s["phantom"] = phantom_law_to_json(*e.phantom);
    j["subjects"].push_back(std::move(s));
  }
  write_text(path, j.dump(2) + "\n");
}

DatasetManifest read_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ValidationError("malformed manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.version = j.value("version", 1);
    m.ledd_csv = j.value("ledd_csv", std::string("ledd.csv"));
    m.preprocessed = j.value("preprocessed", false);
    m.preprocess = j.value("preprocess", json::object());
    for (const auto& s : j.at("subjects")) {
      ManifestEntry e;
      e.subject_id = s.at("id").get<std::string>();
      e.split = split_from_string(s.value("split", std::string("train")));
      e.format = s.value("format", std::string("payload"));
      e.screening = s.at("screening").get<std::string>();
      e.month12 = s.at("month12").get<std::string>();
      e.roi = s.value("roi", std::string());
      if (s.contains("phantom")) e.phantom = phantom_law_from_json(s.at("phantom"));
      m.subjects.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ValidationError("manifest " + path.string() + ": " + e.what());
  }
  return m;
}

std::vector<Split> assign_splits(std::size_t n, std::uint64_t seed, double train, double val) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {0x5917ULL}));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
    std::swap(order[i - 1], order[j]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(val * static_cast<double>(n)));
  std::vector<Split> out(n, Split::kTest);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = order[i];
    out[s] = i < n_train ? Split::kTrain : (i < n_train + n_val ? Split::kVal : Split::kTest);
  }
  return out;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const fs::path& path) { return fnv1a_hex(read_text(path)); }

}  // namespace dopacast
