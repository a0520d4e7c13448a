#pragma once

#include <filesystem>

#include "deal/tensor.hpp"

namespace deal {

/// Reads a binary PGM (P5, one channel) or PPM (P6, three channels) with
/// maxval up to 65535. Intensities are mapped to [0, 1]. Throws
/// FormatError on malformed input.
Image read_image(const std::filesystem::path& path);

/// Writes PGM for one channel and PPM for three, at 8 or 16 bits. Values
/// are clamped to [0, 1] and rounded to the nearest level.
void write_image(const std::filesystem::path& path, const Image& image, int bit_depth = 8);

}  // namespace deal
