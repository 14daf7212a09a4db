#pragma once

#include <array>
#include <span>

namespace sckd::datagen {

inline constexpr int kRows = 16;  // toe (row 0) to heel (row 15)
inline constexpr int kCols = 8;
inline constexpr int kPixels = kRows * kCols;

/// Effective pixel coverage of the insole outline on the 16x8 sensor grid.
/// Values are 0 (outside), 0.33 / 0.67 (edge), 1 (fully enclosed).
struct FractionMask {
  std::array<float, kPixels> grid{};

  float at(int row, int col) const { return grid[static_cast<std::size_t>(row * kCols + col)]; }
  /// Mirror image across the long axis (right foot from left foot).
  FractionMask mirrored() const;
};

/// Left-foot outline.
FractionMask fraction_mask();

/// Multiplies every trailing 16x8 frame of `frames` element-wise by the mask.
/// Throws ShapeError when the length is not a multiple of 128.
void apply_fraction(std::span<float> frames, const FractionMask& mask);

}  // namespace sckd::datagen
