#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dopacast {

/// Dense row-major 2D grid. Pixel (r, c) lives at index r * cols + c.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{}) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Grid: negative extent");
    data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
  }
  Grid(int rows, int cols, std::vector<T> values) : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (rows < 0 || cols < 0 || data_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
      throw std::invalid_argument("Grid: value count " + std::to_string(data_.size()) + " does not match " +
                                  std::to_string(rows) + "x" + std::to_string(cols));
    }
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int r, int c) noexcept { return data_[index(r, c)]; }
  const T& operator()(int r, int c) const noexcept { return data_[index(r, c)]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  bool in_bounds(int r, int c) const noexcept { return r >= 0 && c >= 0 && r < rows_ && c < cols_; }
  bool same_shape(const auto& other) const noexcept { return rows_ == other.rows() && cols_ == other.cols(); }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(int r, int c) const noexcept {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using ImageGrid = Grid<float>;

/// Boolean pixel set stored one byte per pixel (0 or 1).
using BinaryMask = Grid<std::uint8_t>;

inline std::size_t count_set(const BinaryMask& m) {
  return static_cast<std::size_t>(std::count_if(m.begin(), m.end(), [](std::uint8_t v) { return v != 0; }));
}

/// Mirror across the vertical axis (column c maps to cols - 1 - c).
template <typename T>
Grid<T> flip_horizontal(const Grid<T>& g) {
  Grid<T> out(g.rows(), g.cols());
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c) out(r, c) = g(r, g.cols() - 1 - c);
  return out;
}

}  // namespace dopacast
