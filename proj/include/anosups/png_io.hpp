#pragma once

#include <filesystem>

#include "anosups/image.hpp"

namespace anosups {

// Reads an 8-bit grayscale or RGB PNG into [0, 1] intensities (value / 255).
// Palette images are expanded to RGB; alpha channels and 16-bit depths are
// rejected with kFormat.
ImageTensor read_png(const std::filesystem::path& path);

// Writes an 8-bit PNG (grayscale for C = 1, RGB for C = 3). Values are
// rounded to the nearest of the 256 levels.
void write_png(const std::filesystem::path& path, const ImageTensor& image);

// Mask PNGs are 8-bit grayscale: 255 = anomalous, 0 = normal.
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);
// Any non-zero pixel reads as anomalous.
BinaryMask read_mask_png(const std::filesystem::path& path);

}  // namespace anosups
