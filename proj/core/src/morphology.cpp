#include "dopacast/morphology.hpp"

namespace dopacast {
namespace {

// One 3x3 pass. `want` is the value a neighbour must hold to trigger `result`.
BinaryMask pass(const BinaryMask& in, bool dilating) {
  BinaryMask out(in.rows(), in.cols(), 0);
  for (int r = 0; r < in.rows(); ++r) {
    for (int c = 0; c < in.cols(); ++c) {
      bool any = false;
      bool all = true;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const bool v = in.in_bounds(r + dr, c + dc) && in(r + dr, c + dc) != 0;
          any = any || v;
          all = all && v;
        }
      }
      out(r, c) = static_cast<std::uint8_t>(dilating ? any : all);
    }
  }
  return out;
}

}  // namespace

BinaryMask dilate(const BinaryMask& mask, int iterations) {
  BinaryMask out = mask;
  for (int i = 0; i < iterations; ++i) out = pass(out, true);
  return out;
}

BinaryMask erode(const BinaryMask& mask, int iterations) {
  BinaryMask out = mask;
  for (int i = 0; i < iterations; ++i) out = pass(out, false);
  return out;
}

BinaryMask open(const BinaryMask& mask, int iterations) { return dilate(erode(mask, iterations), iterations); }

}  // namespace dopacast
