#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "anosups/image.hpp"
#include "anosups/rng.hpp"

namespace anosups::testing {

inline ImageTensor constant_image(int h, int w, int c, double value) {
  return ImageTensor(h, w, c, std::vector<double>(static_cast<std::size_t>(h) * w * c, value));
}

// Values on the 8-bit lattice so PNG round trips are exact.
inline ImageTensor random_image(int h, int w, int c, Seed seed) {
  Rng rng(seed);
  std::vector<double> data(static_cast<std::size_t>(h) * w * c);
  for (double& v : data) v = static_cast<double>(rng.below(256)) / 255.0;
  return ImageTensor(h, w, c, std::move(data));
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("anosups_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace anosups::testing
