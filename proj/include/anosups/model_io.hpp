#pragma once

#include <filesystem>

#include "json.hpp"

#include "anosups/reconstructor.hpp"

namespace anosups {

// Binary model file, all integers and floats little-endian:
//
//   "ANOSUPS1"                       8-byte magic
//   u32 version (1)
//   u32 kind (0 attention, 1 pca, 2 positional-mean)
//   u32 patch_size, channels, rows, cols
//   u32 embed_dim, heads, blocks, mlp_ratio, rank
//   u64 array_count
//   per array: u64 length, then length f64 values
//
// Arrays: attention -> [parameters in layout order]; pca -> [mean, basis
// column-major]; positional-mean -> [means row-major M x patch_dim].
void save_model(const std::filesystem::path& path, const ReconstructorModel& model);
ReconstructorModel load_model(const std::filesystem::path& path);

// Header fields mirrored as JSON (written next to the binary as
// <path>.json by the CLI).
nlohmann::json model_header_json(const ReconstructorModel& model);

}  // namespace anosups
