#pragma once

#include <cstdint>
#include <vector>

#include "deal/tensor.hpp"

namespace deal {

/// Random piecewise-constant image: a flat background overlaid with
/// rectangles and discs of random intensity in [0.1, 0.9].
Image piecewise_constant(int channels, int height, int width, std::uint64_t seed,
                         int shapes = 6);

std::vector<Image> piecewise_constant_set(int count, int channels, int size, std::uint64_t seed);

/// Vertical step edge: `low` on the left half, `high` on the right.
Image step_image(int height, int width, double low = 0.2, double high = 0.8);

/// Shepp-Logan style phantom built from ellipses, values in [0, 1].
Image phantom(int height, int width);

/// Cartesian undersampling pattern in the unshifted DFT layout: the
/// `center` lowest-frequency rows are always kept, the rest with
/// probability `fraction`.
std::vector<std::vector<int>> fourier_row_mask(int height, int width, int center, double fraction,
                                               std::uint64_t seed);

}  // namespace deal
