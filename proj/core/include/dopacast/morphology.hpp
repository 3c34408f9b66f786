#pragma once

#include "dopacast/grid.hpp"

namespace dopacast {

/// Binary dilation with the full 3x3 ones kernel, repeated `iterations` times.
/// Pixels outside the grid are treated as unset (no wraparound).
BinaryMask dilate(const BinaryMask& mask, int iterations = 1);

/// Binary erosion with the full 3x3 ones kernel; out-of-grid pixels count as unset.
BinaryMask erode(const BinaryMask& mask, int iterations = 1);

/// Erosion followed by dilation.
BinaryMask open(const BinaryMask& mask, int iterations = 1);

}  // namespace dopacast
