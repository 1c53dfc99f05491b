#include "anosups/geometry.hpp"

#include "anosups/error.hpp"

namespace anosups {

std::string GridGeometry::describe() const {
  return "{patch_size=" + std::to_string(patch_size) + ", channels=" + std::to_string(channels) +
         ", rows=" + std::to_string(rows) + ", cols=" + std::to_string(cols) + "}";
}

void require_same_geometry(const GridGeometry& expected, const GridGeometry& actual,
                           const std::string& what) {
  if (!(expected == actual)) {
    throw Error(ErrorCode::kGeometryMismatch,
                what + ": expected " + expected.describe() + ", got " + actual.describe());
  }
}

}  // namespace anosups
