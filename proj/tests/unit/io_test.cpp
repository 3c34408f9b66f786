#include <algorithm>
#include <fstream>

#include "doctest.h"
#include "dopacast/errors.hpp"
#include "dopacast/io.hpp"
#include "support.hpp"

using namespace dopacast;

namespace {

std::vector<SliceImage> slices(Rng& rng, int n, int first = kFirstSlice) {
  std::vector<SliceImage> out;
  for (int i = 0; i < n; ++i) out.push_back(SliceImage{testing::random_image(rng, 8, 6), first + i});
  return out;
}

}  // namespace

TEST_CASE("payload round trip keeps shape, indices and extras") {
  testing::TempDir dir("payload");
  Payload p;
  p.shape = {2, 3};
  p.slice_indices = {34, 35};
  p.values = {1.0F, -2.5F, 3.0F, 0.0F, 1e-7F, 6.0F};
  p.extra["note"] = "x";
  write_payload(dir / "a", p);
  const auto q = read_payload(dir / "a");
  CHECK(q.shape == p.shape);
  CHECK(q.slice_indices == p.slice_indices);
  CHECK(q.values == p.values);
  CHECK(q.extra.at("note") == "x");
  CHECK_THROWS_AS(read_payload(dir / "missing"), IoError);
}

TEST_CASE("payload with a truncated value file is rejected") {
  testing::TempDir dir("trunc");
  Payload p{{4}, {}, {1, 2, 3, 4}};
  write_payload(dir / "t", p);
  std::filesystem::resize_file(dir / "t.f32", 8);
  CHECK_THROWS(read_payload(dir / "t"));
}

TEST_CASE("slice stacks round trip with normalization state") {
  testing::TempDir dir("slices");
  Rng rng(1);
  auto s = slices(rng, 3);
  write_slices(dir / "raw", s);
  CHECK_FALSE(read_slices(dir / "raw")[0].normalized);
  for (auto& x : s) x.normalized = true;
  s[1].norm_lo = 0.25F;
  s[1].norm_hi = 4.0F;
  write_slices(dir / "s", s);
  const auto r = read_slices(dir / "s");
  REQUIRE(r.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(r[i].pixels == s[i].pixels);
    CHECK(r[i].slice_index == s[i].slice_index);
  }
  CHECK(r[1].normalized);
  CHECK(r[1].norm_lo == 0.25F);
  CHECK(r[1].norm_hi == 4.0F);
}

TEST_CASE("roi masks round trip and write a png") {
  testing::TempDir dir("roi");
  Grid<Zone> zones(6, 6, Zone::kBackground);
  zones(2, 2) = Zone::kStriatum;
  zones(2, 3) = Zone::kBuffer;
  const auto m = RoiWeightMask::from_zones(zones);
  write_roi(dir / "roi", m);
  CHECK(std::filesystem::exists(dir / "roi.png"));
  const auto r = read_roi(dir / "roi");
  CHECK(r.zones == m.zones);
  CHECK(r.weights == m.weights);
}

TEST_CASE("LEDD CSV round trip and column checks") {
  testing::TempDir dir("ledd");
  LeddSeries a{{0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}};
  LeddSeries b{{100, 150, 200, 250, 300, 350, 400, 400, 400, 400, 450.5, 500}};
  write_ledd_csv(dir / "l.csv", {{"a", a}, {"b", b}});
  const auto m = read_ledd_csv(dir / "l.csv");
  REQUIRE(m.size() == 2);
  CHECK(m.at("b").doses == b.doses);

  std::ofstream(dir / "bad.csv") << "subject_id,m1\ns1,1,2,3,4,5,6,7,8,9,10,11,12,13\n";
  CHECK_THROWS_AS(read_ledd_csv(dir / "bad.csv"), ValidationError);
  std::ofstream(dir / "gap.csv") << "subject_id\ns1,1,2,3,4,5,,7,8,9,10,11,12\n";
  CHECK_THROWS_AS(read_ledd_csv(dir / "gap.csv"), ValidationError);
  std::ofstream(dir / "neg.csv") << "subject_id\ns1,1,2,3,4,5,-6,7,8,9,10,11,12\n";
  CHECK_THROWS_AS(read_ledd_csv(dir / "neg.csv"), ValidationError);
  std::ofstream(dir / "dup.csv") << "subject_id\ns1,1,2,3,4,5,6,7,8,9,10,11,12\ns1,1,2,3,4,5,6,7,8,9,10,11,12\n";
  CHECK_THROWS_AS(read_ledd_csv(dir / "dup.csv"), ValidationError);
}

TEST_CASE("NIfTI volumes round trip and slice extraction checks depth") {
  testing::TempDir dir("nifti");
  Rng rng(2);
  NiftiVolume v;
  v.nx = kImageSize;
  v.ny = kImageSize;
  v.nz = 60;
  v.data.resize(static_cast<std::size_t>(v.nx) * v.ny * v.nz);
  for (auto& x : v.data) x = static_cast<float>(rng.uniform());
  write_nifti(dir / "v.nii", v);
  const auto r = read_nifti(dir / "v.nii");
  CHECK(r.nz == 60);
  CHECK(r.data == v.data);
  const auto s = extract_axial_slices(r);
  REQUIRE(s.size() == static_cast<std::size_t>(kNumSlices));
  CHECK(s.front().slice_index == kFirstSlice);
  CHECK(s.front().pixels(3, 5) == r.at(5, 3, kFirstSlice));
  const auto back = slices_to_volume(s, 60);
  CHECK(back.at(7, 9, 40) == r.at(7, 9, 40));

  v.nz = 40;
  v.data.resize(static_cast<std::size_t>(v.nx) * v.ny * v.nz);
  write_nifti(dir / "short.nii", v);
  CHECK_THROWS_AS(extract_axial_slices(read_nifti(dir / "short.nii")), ValidationError);
  NiftiVolume small;
  small.nx = small.ny = 16;
  small.nz = 60;
  small.data.assign(16 * 16 * 60, 0.0F);
  CHECK_THROWS_AS(extract_axial_slices(small), ValidationError);
}

TEST_CASE("checkpoint container round trip") {
  testing::TempDir dir("ckpt");
  Container c;
  c.config["channels"] = {8, 16};
  c.meta["epoch"] = 3;
  c.tensors.push_back({"w", "float32", {2}, {0, 0, 128, 63, 0, 0, 0, 64}});
  c.tensors.push_back({"b", "float64", {}, std::vector<std::uint8_t>(8, 1)});
  write_container(dir / "c.ckpt", c);
  const auto r = read_container(dir / "c.ckpt");
  CHECK(r.config == c.config);
  CHECK(r.meta.at("epoch") == 3);
  REQUIRE(r.find("w") != nullptr);
  CHECK(r.find("w")->bytes == c.tensors[0].bytes);
  CHECK(r.find("b")->shape.empty());
  CHECK(r.find("nope") == nullptr);
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  CHECK_THROWS(read_container(dir / "junk.ckpt"));
}

TEST_CASE("manifest round trip with phantom provenance") {
  testing::TempDir dir("manifest");
  DatasetManifest m;
  m.preprocessed = true;
  ManifestEntry e;
  e.subject_id = "s1";
  e.split = Split::kVal;
  e.screening = "a";
  e.month12 = "b";
  PhantomLaw law;
  law.subject_index = 5;
  law.severity = 1.25;
  law.month12_factor = {0.5, 0.75};
  e.phantom = law;
  m.subjects.push_back(e);
  write_manifest(dir / "manifest.json", m);
  const auto r = read_manifest(dir / "manifest.json");
  REQUIRE(r.subjects.size() == 1);
  CHECK(r.preprocessed);
  CHECK(r.subjects[0].split == Split::kVal);
  REQUIRE(r.subjects[0].phantom.has_value());
  CHECK(r.subjects[0].phantom->severity == 1.25);
  CHECK(r.subjects[0].phantom->month12_factor[1] == 0.75);
  CHECK(split_from_string(to_string(Split::kTest)) == Split::kTest);
}

TEST_CASE("splits are deterministic and sized by rounding") {
  const auto s = assign_splits(40, 3);
  CHECK(std::count(s.begin(), s.end(), Split::kTrain) == 32);
  CHECK(std::count(s.begin(), s.end(), Split::kVal) == 4);
  CHECK(std::count(s.begin(), s.end(), Split::kTest) == 4);
  CHECK(assign_splits(40, 3) == s);
  CHECK(assign_splits(40, 4) != s);
}

TEST_CASE("fnv1a hash reference values") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}
