#pragma once

#include <string>

#include "anosups/image.hpp"
#include "anosups/patch_grid.hpp"

namespace anosups {

// Patch geometry a reconstructor is built for.
struct GridGeometry {
  int patch_size = 0;
  int channels = 0;
  int rows = 0;
  int cols = 0;

  int num_patches() const { return rows * cols; }
  int patch_dim() const { return patch_size * patch_size * channels; }
  int height() const { return rows * patch_size; }
  int width() const { return cols * patch_size; }

  static GridGeometry of(const PatchGrid& grid) {
    return {grid.patch_size(), grid.channels(), grid.rows(), grid.cols()};
  }
  static GridGeometry of(const ImageTensor& image, int patch_size) {
    return {patch_size, image.channels(), image.height() / patch_size, image.width() / patch_size};
  }

  std::string describe() const;

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

// Throws kGeometryMismatch naming both geometries when they differ.
void require_same_geometry(const GridGeometry& expected, const GridGeometry& actual,
                           const std::string& what);

}  // namespace anosups
