#include "dopacast/colormap.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dopacast/io.hpp"

namespace dopacast {

std::vector<std::uint8_t> colorize(const ImageGrid& image, float lo, float hi) {
  if (!(hi > lo)) throw std::invalid_argument("colorize: empty intensity range");
  std::vector<std::uint8_t> rgb;
  rgb.reserve(image.size() * 3);
  for (float v : image) {
    const double u = std::clamp((static_cast<double>(v) - lo) / (hi - lo), 0.0, 1.0);
    const auto& c = kColormap[static_cast<std::size_t>(std::lround(u * 255.0))];
    rgb.insert(rgb.end(), c.begin(), c.end());
  }
  return rgb;
}

void write_triptych(const std::filesystem::path& path, const std::vector<ImageGrid>& panels, float lo, float hi) {
  if (panels.empty()) throw std::invalid_argument("write_triptych: no panels");
  constexpr int kGap = 2;
  const int rows = panels.front().rows();
  const int cols = panels.front().cols();
  for (const auto& p : panels) {
    if (p.rows() != rows || p.cols() != cols) throw std::invalid_argument("write_triptych: panel shapes differ");
  }
  const int n = static_cast<int>(panels.size());
  const int width = n * cols + (n - 1) * kGap;
  std::vector<std::uint8_t> canvas(static_cast<std::size_t>(rows) * width * 3, 0);
  for (int k = 0; k < n; ++k) {
    const auto rgb = colorize(panels[static_cast<std::size_t>(k)], lo, hi);
    const int x0 = k * (cols + kGap);
    for (int r = 0; r < rows; ++r) {
      std::copy_n(rgb.begin() + static_cast<std::ptrdiff_t>(r) * cols * 3, cols * 3,
                  canvas.begin() + (static_cast<std::ptrdiff_t>(r) * width + x0) * 3);
    }
  }
  write_png_rgb(path, rows, width, canvas);
}

}  // namespace dopacast
