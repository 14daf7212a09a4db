#include "sckd/datagen/fraction.hpp"

#include "sckd/tensor.hpp"

namespace sckd::datagen {

namespace {

constexpr float E1 = 0.33f;
constexpr float E2 = 0.67f;

// Left insole outline, toe at row 0, medial side at column 0.
constexpr std::array<float, kPixels> kLeftOutline = {
    0,  E1, E2, E2, E1, 0,  0,  0,   //
    E1, 1,  1,  1,  1,  E2, 0,  0,   //
    E2, 1,  1,  1,  1,  1,  E1, 0,   //
    E2, 1,  1,  1,  1,  1,  E2, 0,   //
    E2, 1,  1,  1,  1,  1,  1,  E1,  //
    E1, 1,  1,  1,  1,  1,  1,  E2,  //
    E1, 1,  1,  1,  1,  1,  1,  E2,  //
    0,  E2, 1,  1,  1,  1,  1,  E2,  //
    0,  E2, 1,  1,  1,  1,  1,  E1,  //
    0,  E1, 1,  1,  1,  1,  1,  E1,  //
    0,  E1, 1,  1,  1,  1,  1,  E1,  //
    0,  E1, 1,  1,  1,  1,  1,  E1,  //
    0,  E1, 1,  1,  1,  1,  1,  E1,  //
    0,  E1, 1,  1,  1,  1,  E2, 0,   //
    0,  0,  E2, 1,  1,  1,  E1, 0,   //
    0,  0,  E1, E2, E2, E1, 0,  0,   //
};

}  // namespace

FractionMask fraction_mask() { return FractionMask{kLeftOutline}; }

FractionMask FractionMask::mirrored() const {
  FractionMask out;
  for (int r = 0; r < kRows; ++r) {
    for (int c = 0; c < kCols; ++c) out.grid[r * kCols + c] = at(r, kCols - 1 - c);
  }
  return out;
}

void apply_fraction(std::span<float> frames, const FractionMask& mask) {
  if (frames.size() % kPixels != 0) {
    throw ShapeError("apply_fraction: frame buffer of " + std::to_string(frames.size()) +
                     " values is not a whole number of 16x8 frames");
  }
  for (std::size_t i = 0; i < frames.size(); i += kPixels) {
    for (int p = 0; p < kPixels; ++p) frames[i + p] *= mask.grid[p];
  }
}

}  // namespace sckd::datagen
