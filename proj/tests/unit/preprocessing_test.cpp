#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "dopacast/ingestion.hpp"
#include "dopacast/morphology.hpp"
#include "dopacast/preprocessing.hpp"
#include "support.hpp"

using namespace dopacast;

namespace {

ImageGrid disk(int n, double radius, float value) {
  ImageGrid g(n, n, 0.0F);
  const double c = (n - 1) / 2.0;
  for (int r = 0; r < n; ++r)
    for (int col = 0; col < n; ++col)
      if (std::hypot(r - c, col - c) <= radius) g(r, col) = value;
  return g;
}

}  // namespace

TEST_CASE("gaussian blur keeps constants and mass") {
  const auto c = testing::constant(20, 17, 3.5F);
  for (float v : gaussian_blur(c, 2.0)) CHECK(v == doctest::Approx(3.5).epsilon(1e-6));
  ImageGrid spike(41, 41, 0.0F);
  spike(20, 20) = 1.0F;
  const auto b = gaussian_blur(spike, 1.5);
  double sum = 0.0;
  for (float v : b) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(b(20, 19) == doctest::Approx(b(20, 21)));
}

TEST_CASE("percentile interpolates") {
  std::vector<float> v{4.0F, 1.0F, 3.0F, 2.0F};
  CHECK(percentile(v, 0.0) == 1.0);
  CHECK(percentile(v, 100.0) == 4.0);
  CHECK(percentile(v, 50.0) == doctest::Approx(2.5));
}

TEST_CASE("soft mask blend limits") {
  Rng rng(3);
  const auto img = testing::random_image(rng, 32, 32);
  SoftMaskParams p{4.0, 0.7, testing::constant(32, 32, 1.0F)};
  CHECK(soft_mask_blend(img, p) == img);
  p.alpha = testing::constant(32, 32, 0.0F);
  p.gamma = 0.0;
  for (float v : soft_mask_blend(img, p)) CHECK(v == 0.0F);
  p.gamma = 1.0;
  for (float v : soft_mask_blend(testing::constant(32, 32, 2.25F), p)) CHECK(v == doctest::Approx(2.25).epsilon(1e-6));
}

TEST_CASE("soft mask blend is linear in the image") {
  Rng rng(5);
  const auto a = testing::random_image(rng, 24, 24);
  const auto b = testing::random_image(rng, 24, 24);
  SoftMaskParams p{4.0, 0.5, testing::random_image(rng, 24, 24)};
  ImageGrid mix(24, 24);
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 2.0F * a[i] - 0.5F * b[i];
  const auto lhs = soft_mask_blend(mix, p);
  const auto ba = soft_mask_blend(a, p);
  const auto bb = soft_mask_blend(b, p);
  for (std::size_t i = 0; i < mix.size(); ++i) {
    CHECK(lhs[i] == doctest::Approx(2.0 * ba[i] - 0.5 * bb[i]).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("soft mask blend rejects bad input") {
  SoftMaskParams p{4.0, 0.5, testing::constant(4, 4, 1.0F)};
  auto img = testing::constant(4, 4, 1.0F);
  img(1, 1) = INFINITY;
  CHECK_THROWS_AS(soft_mask_blend(img, p), std::invalid_argument);
  p.gamma = 1.5;
  CHECK_THROWS_AS(soft_mask_blend(testing::constant(4, 4, 1.0F), p), std::invalid_argument);
}

TEST_CASE("alpha mask on a bright disk") {
  const auto img = disk(64, 15.0, 1.0F);
  const auto a = compute_alpha_mask(img);
  CHECK_FALSE(a.degenerate);
  for (float v : a.alpha) CHECK_UNARY(v >= 0.0F && v <= 1.0F);
  CHECK(a.alpha(32, 32) == doctest::Approx(1.0));
  CHECK(a.alpha(0, 0) == doctest::Approx(0.0));
  // Against the thresholded disk with a 4-pixel tolerance band at the edge.
  const double c = 31.5;
  for (int r = 0; r < 64; ++r)
    for (int col = 0; col < 64; ++col) {
      const double d = std::hypot(r - c, col - c);
      if (d < 11.0) CHECK(a.alpha(r, col) > 0.99F);
      if (d > 19.0) CHECK(a.alpha(r, col) < 0.01F);
    }
}

TEST_CASE("alpha mask degenerate and scale-invariant cases") {
  const auto z = compute_alpha_mask(testing::constant(16, 16, 0.0F));
  CHECK(z.degenerate);
  for (float v : z.alpha) CHECK(v == 0.0F);
  CHECK(compute_alpha_mask(testing::constant(16, 16, 4.0F)).degenerate);
  const auto img = disk(48, 10.0, 0.5F);
  auto twice = img;
  for (auto& v : twice) v *= 2.0F;
  const auto a1 = compute_alpha_mask(img).alpha;
  const auto a2 = compute_alpha_mask(twice).alpha;
  for (std::size_t i = 0; i < a1.size(); ++i) CHECK(a1[i] == doctest::Approx(a2[i]).epsilon(1e-6));
}

TEST_CASE("binary mask symmetry and emptiness") {
  const auto law_subject = generate_phantom_subject(testing::small_spec(), 1);
  // A perfectly symmetric two-blob image.
  PhantomLaw law = *law_subject.phantom;
  law.blobs[0].tilt = 0.3;
  law.blobs[1] = law.blobs[0];
  law.blobs[1].center_col = (kImageSize - 1) - law.blobs[0].center_col;
  law.blobs[1].tilt = -0.3;
  ImageGrid img(kImageSize, kImageSize, 0.05F);
  for (int b = 0; b < 2; ++b) {
    const auto prof = blob_profile(law.blobs[static_cast<std::size_t>(b)], law.edge_width);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] += prof[i];
  }
  const auto m = binary_mask(img);
  CHECK(count_set(m) > 0);
  CHECK(m == flip_horizontal(m));
  CHECK(count_set(binary_mask(testing::constant(kImageSize, kImageSize, 0.0F))) == 0);
}

TEST_CASE("binary mask of an off-axis blob is the intersection of both views") {
  ImageGrid img(64, 64, 0.0F);
  for (int r = 20; r < 30; ++r)
    for (int c = 5; c < 15; ++c) img(r, c) = 1.0F;
  const auto direct = threshold_view(img);
  const auto mirrored = flip_horizontal(threshold_view(flip_horizontal(img)));
  const auto m = binary_mask(img);
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(m[i] == (direct[i] && mirrored[i] ? 1 : 0));
}

TEST_CASE("agreement count is the exact ceiling of 0.65 n") {
  for (int n = 1; n <= 200; ++n) {
    const int need = agreement_count(n);
    CHECK(20 * need >= 13 * n);
    CHECK(20 * (need - 1) < 13 * n);
  }
  CHECK(agreement_count(1) == 1);
  CHECK(agreement_count(2) == 2);
  CHECK(agreement_count(20) == 13);
}

TEST_CASE("aggregate_roi examples") {
  Rng rng(9);
  const auto m = testing::random_mask(rng, 16, 16, 0.4);
  std::vector<BinaryMask> one{m};
  CHECK(aggregate_roi(one) == m);
  std::vector<BinaryMask> same(5, m);
  CHECK(aggregate_roi(same) == m);
  BinaryMask a(4, 4, 0);
  BinaryMask b(4, 4, 0);
  a(0, 0) = 1;
  b(3, 3) = 1;
  std::vector<BinaryMask> disjoint{a, b};
  CHECK(count_set(aggregate_roi(disjoint)) == 0);
  CHECK_THROWS_AS(aggregate_roi(std::span<const BinaryMask>{}), std::invalid_argument);
}

TEST_CASE("aggregate_roi is monotone when adding a superset mask") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<BinaryMask> masks;
    const int n = 1 + static_cast<int>(rng.uniform_int(0, 9));
    for (int i = 0; i < n; ++i) masks.push_back(testing::random_mask(rng, 12, 12, 0.6));
    const auto before = aggregate_roi(masks);
    auto sup = before;
    for (auto& v : sup)
      if (rng.uniform() < 0.3) v = 1;
    masks.push_back(sup);
    const auto after = aggregate_roi(masks);
    for (std::size_t i = 0; i < before.size(); ++i)
      if (before[i]) CHECK(after[i]);
  }
}

TEST_CASE("dilate_buffer examples") {
  BinaryMask center(33, 33, 0);
  center(16, 16) = 1;
  const auto buf = dilate_buffer(center);
  CHECK(count_set(buf) == 80);
  CHECK(buf(16, 16) == 0);
  CHECK(buf(12, 12) == 1);
  CHECK(buf(11, 16) == 0);
  CHECK(count_set(dilate_buffer(BinaryMask(10, 10, 0))) == 0);
  BinaryMask corner(10, 10, 0);
  corner(0, 0) = 1;
  const auto cb = dilate_buffer(corner);
  CHECK(count_set(cb) == 24);
  CHECK(cb == testing::brute_buffer(corner));
}

TEST_CASE("buffer pixels lie within Chebyshev distance 4 of the striatum") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 4 + static_cast<int>(rng.uniform_int(0, 28));
    const int w = 4 + static_cast<int>(rng.uniform_int(0, 28));
    const auto s = testing::random_mask(rng, h, w, 0.03);
    const auto buf = dilate_buffer(s);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        int best = 1 << 20;
        for (int rr = 0; rr < h; ++rr)
          for (int cc = 0; cc < w; ++cc)
            if (s(rr, cc)) best = std::min(best, std::max(std::abs(rr - r), std::abs(cc - c)));
        const bool expect = !s(r, c) && best <= 4;
        CHECK(static_cast<bool>(buf(r, c)) == expect);
      }
  }
}

TEST_CASE("build_weight_mask zones and rejection") {
  const auto empty = build_weight_mask(BinaryMask(8, 8, 0), BinaryMask(8, 8, 0));
  for (float v : empty.weights) CHECK(v == 0.4F);
  const auto full = build_weight_mask(BinaryMask(8, 8, 1), BinaryMask(8, 8, 0));
  for (float v : full.weights) CHECK(v == 1.0F);
  BinaryMask s(8, 8, 0);
  s(2, 2) = 1;
  CHECK_THROWS_AS(build_weight_mask(s, s), std::invalid_argument);
  const auto m = build_weight_mask(s, dilate_buffer(s));
  std::size_t counts[3] = {0, 0, 0};
  for (auto z : m.zones) ++counts[static_cast<int>(z)];
  CHECK(counts[0] + counts[1] + counts[2] == 64);
  CHECK(counts[2] == 1);
}

TEST_CASE("ledd log transform") {
  LeddSeries zero{std::vector<double>(12, 0.0)};
  for (double d : ledd_log_transform(zero).doses) CHECK(d == 0.0);
  LeddSeries e{std::vector<double>(12, std::exp(1.0) - 1.0)};
  for (double d : ledd_log_transform(e).doses) CHECK(d == doctest::Approx(1.0));
  LeddSeries mono{{0, 10, 20, 50, 100, 200, 300, 400, 500, 600, 700, 800}};
  const auto l = ledd_log_transform(mono).doses;
  CHECK(std::is_sorted(l.begin(), l.end()));
  mono.doses[4] = -5.0;
  CHECK_THROWS_AS(ledd_log_transform(mono), std::invalid_argument);
}

TEST_CASE("phantom weight histogram is near 10% striatum") {
  const auto r = generate_phantom_subject(testing::small_spec(), 2);
  const auto processed = preprocess_record(r);
  std::size_t striatum = 0;
  for (auto z : processed.roi[0].zones) striatum += z == Zone::kStriatum;
  const double frac = static_cast<double>(striatum) / static_cast<double>(processed.roi[0].zones.size());
  CHECK(frac > 0.07);
  CHECK(frac < 0.13);
  CHECK(validate_record(processed).empty());
}

TEST_CASE("preprocess_record shares alpha between visits") {
  auto r = generate_phantom_subject(testing::small_spec(), 3);
  r.month12 = r.screening;
  const auto p = preprocess_record(r);
  for (std::size_t i = 0; i < p.screening.size(); ++i) CHECK(p.screening[i].pixels == p.month12[i].pixels);
  const auto like = soft_mask_like(r.screening, r.month12);
  CHECK(like[0].pixels == p.month12[0].pixels);
}
