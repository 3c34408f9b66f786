#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dopacast/grid.hpp"
#include "dopacast/ingestion.hpp"
#include "dopacast/random.hpp"
#include "dopacast/types.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("dopacast_test_" + tag + "_" + std::to_string(counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  static int& counter() {
    static int n = 0;
    return n;
  }
  std::filesystem::path path_;
};

inline dopacast::BinaryMask random_mask(dopacast::Rng& rng, int rows, int cols, double density) {
  dopacast::BinaryMask m(rows, cols, 0);
  for (auto& v : m) v = static_cast<std::uint8_t>(rng.uniform() < density);
  return m;
}

inline dopacast::ImageGrid random_image(dopacast::Rng& rng, int rows, int cols, double lo = 0.0, double hi = 1.0) {
  dopacast::ImageGrid g(rows, cols);
  for (auto& v : g) v = static_cast<float>(rng.uniform(lo, hi));
  return g;
}

inline dopacast::ImageGrid constant(int rows, int cols, float v) { return dopacast::ImageGrid(rows, cols, v); }

/// Dilation by repeated neighbourhood scans with explicit bounds checks.
inline dopacast::BinaryMask brute_dilate(const dopacast::BinaryMask& m, int iterations) {
  dopacast::BinaryMask cur = m;
  for (int it = 0; it < iterations; ++it) {
    dopacast::BinaryMask next(cur.rows(), cur.cols(), 0);
    for (int r = 0; r < cur.rows(); ++r)
      for (int c = 0; c < cur.cols(); ++c) {
        bool any = false;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr;
            const int cc = c + dc;
            if (rr >= 0 && rr < cur.rows() && cc >= 0 && cc < cur.cols() && cur(rr, cc)) any = true;
          }
        next(r, c) = any ? 1 : 0;
      }
    cur = next;
  }
  return cur;
}

inline dopacast::BinaryMask brute_buffer(const dopacast::BinaryMask& striatum) {
  auto d = brute_dilate(striatum, 4);
  for (std::size_t i = 0; i < d.size(); ++i)
    if (striatum[i]) d[i] = 0;
  return d;
}

/// Pixel set where count >= 0.65 n, compared exactly as 20 * count >= 13 * n.
inline dopacast::BinaryMask brute_aggregate(const std::vector<dopacast::BinaryMask>& masks) {
  const auto& f = masks.front();
  dopacast::BinaryMask out(f.rows(), f.cols(), 0);
  const int n = static_cast<int>(masks.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    int count = 0;
    for (const auto& m : masks) count += m[i] ? 1 : 0;
    out[i] = 20 * count >= 13 * n ? 1 : 0;
  }
  return out;
}

inline dopacast::PhantomSpec small_spec(int n = 4, std::uint64_t seed = 11) {
  dopacast::PhantomSpec s;
  s.n_subjects = n;
  s.seed = seed;
  return s;
}

}  // namespace testing
