#include "anosups/patch_grid.hpp"

#include <algorithm>
#include <string>

#include "anosups/error.hpp"

namespace anosups {

std::span<const double> PatchGrid::patch(int index) const {
  if (index < 0 || index >= num_patches()) {
    throw Error(ErrorCode::kIndexOutOfRange, "patch index " + std::to_string(index));
  }
  const auto dim = static_cast<std::size_t>(patch_dim());
  return std::span<const double>(values_).subspan(static_cast<std::size_t>(index) * dim, dim);
}

bool PatchGrid::is_masked(int index) const {
  if (index < 0 || index >= num_patches()) {
    throw Error(ErrorCode::kIndexOutOfRange, "patch index " + std::to_string(index));
  }
  return masked_[static_cast<std::size_t>(index)] != 0;
}

std::vector<int> PatchGrid::masked_indices() const {
  std::vector<int> out;
  for (int i = 0; i < num_patches(); ++i) {
    if (masked_[static_cast<std::size_t>(i)]) out.push_back(i);
  }
  return out;
}

std::vector<int> PatchGrid::visible_indices() const {
  std::vector<int> out;
  for (int i = 0; i < num_patches(); ++i) {
    if (!masked_[static_cast<std::size_t>(i)]) out.push_back(i);
  }
  return out;
}

std::size_t PatchGrid::masked_count() const {
  return static_cast<std::size_t>(std::count(masked_.begin(), masked_.end(), 1));
}

PatchGrid patchify(const ImageTensor& image, int patch_size) {
  if (patch_size <= 0 || image.height() % patch_size != 0 || image.width() % patch_size != 0) {
    throw Error(ErrorCode::kNonDivisibleDimensions,
                std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                    " is not divisible by patch size " + std::to_string(patch_size));
  }
  PatchGrid grid;
  grid.patch_size_ = patch_size;
  grid.rows_ = image.height() / patch_size;
  grid.cols_ = image.width() / patch_size;
  grid.channels_ = image.channels();
  grid.values_.resize(image.size());
  grid.masked_.assign(static_cast<std::size_t>(grid.num_patches()), 0);

  const int c = image.channels();
  const std::size_t row_len = static_cast<std::size_t>(patch_size) * c;
  auto src = image.data();
  auto out = grid.values_.begin();
  for (int r = 0; r < grid.rows_; ++r) {
    for (int q = 0; q < grid.cols_; ++q) {
      for (int y = 0; y < patch_size; ++y) {
        const std::size_t offset =
            (static_cast<std::size_t>(r * patch_size + y) * image.width() + q * patch_size) * c;
        out = std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(offset), row_len, out);
      }
    }
  }
  return grid;
}

ImageTensor unpatchify(const PatchGrid& grid) {
  const int p = grid.patch_size();
  const int c = grid.channels();
  const int width = grid.cols() * p;
  std::vector<double> data(static_cast<std::size_t>(grid.rows() * p) * width * c, 0.0);
  const std::size_t row_len = static_cast<std::size_t>(p) * c;
  for (int i = 0; i < grid.num_patches(); ++i) {
    if (grid.is_masked(i)) continue;
    auto values = grid.patch(i);
    const int r = grid.row_of(i);
    const int q = grid.col_of(i);
    for (int y = 0; y < p; ++y) {
      const std::size_t offset = (static_cast<std::size_t>(r * p + y) * width + q * p) * c;
      std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(y * row_len), row_len,
                  data.begin() + static_cast<std::ptrdiff_t>(offset));
    }
  }
  return ImageTensor(grid.rows() * p, width, c, std::move(data));
}

PatchGrid mask_patches(const PatchGrid& grid, std::span<const int> indices) {
  PatchGrid out = grid;
  const auto dim = static_cast<std::size_t>(grid.patch_dim());
  for (int index : indices) {
    if (index < 0 || index >= grid.num_patches()) {
      throw Error(ErrorCode::kIndexOutOfRange,
                  "patch index " + std::to_string(index) + " outside [0, " +
                      std::to_string(grid.num_patches()) + ")");
    }
    out.masked_[static_cast<std::size_t>(index)] = 1;
    std::fill_n(out.values_.begin() + static_cast<std::ptrdiff_t>(index * dim), dim, 0.0);
  }
  return out;
}

std::vector<std::vector<int>> Partition::groups() const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(k_groups));
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    out[static_cast<std::size_t>(assignment[i])].push_back(static_cast<int>(i));
  }
  return out;
}

Partition partition_patches(int m, int k, Seed seed) {
  if (k < 2 || k > m) {
    throw Error(ErrorCode::kInvalidK,
                "k=" + std::to_string(k) + " must satisfy 2 <= k <= m=" + std::to_string(m));
  }
  std::vector<int> order(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(order);

  Partition partition;
  partition.k_groups = k;
  partition.seed = seed;
  partition.assignment.assign(static_cast<std::size_t>(m), 0);
  for (int pos = 0; pos < m; ++pos) {
    partition.assignment[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] = pos % k;
  }
  return partition;
}

std::vector<PatchGrid> make_incomplete_images(const PatchGrid& grid, const Partition& partition) {
  if (static_cast<int>(partition.assignment.size()) != grid.num_patches()) {
    throw Error(ErrorCode::kGeometryMismatch, "partition size " +
                                                  std::to_string(partition.assignment.size()) +
                                                  " != M=" + std::to_string(grid.num_patches()));
  }
  std::vector<PatchGrid> out;
  out.reserve(static_cast<std::size_t>(partition.k_groups));
  for (const auto& group : partition.groups()) out.push_back(mask_patches(grid, group));
  return out;
}

BinaryMask patches_to_mask(int patch_size, int rows, int cols, std::span<const int> indices) {
  BinaryMask mask(rows * patch_size, cols * patch_size);
  for (int index : indices) {
    if (index < 0 || index >= rows * cols) {
      throw Error(ErrorCode::kIndexOutOfRange, "patch index " + std::to_string(index));
    }
    const int y0 = (index / cols) * patch_size;
    const int x0 = (index % cols) * patch_size;
    for (int y = y0; y < y0 + patch_size; ++y) {
      for (int x = x0; x < x0 + patch_size; ++x) mask.at(y, x) = 1;
    }
  }
  return mask;
}

BinaryMask patches_to_mask(const PatchGrid& grid, std::span<const int> indices) {
  return patches_to_mask(grid.patch_size(), grid.rows(), grid.cols(), indices);
}

std::vector<int> mask_to_patches(const BinaryMask& mask, int patch_size) {
  if (patch_size <= 0 || mask.height % patch_size != 0 || mask.width % patch_size != 0) {
    throw Error(ErrorCode::kNonDivisibleDimensions, "mask not divisible by patch size");
  }
  const int cols = mask.width / patch_size;
  std::vector<std::uint8_t> hit(static_cast<std::size_t>((mask.height / patch_size) * cols), 0);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(y, x)) hit[static_cast<std::size_t>((y / patch_size) * cols + x / patch_size)] = 1;
    }
  }
  std::vector<int> out;
  for (std::size_t i = 0; i < hit.size(); ++i) {
    if (hit[i]) out.push_back(static_cast<int>(i));
  }
  return out;
}

}  // namespace anosups
