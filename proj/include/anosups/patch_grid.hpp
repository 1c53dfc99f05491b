#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "anosups/image.hpp"
#include "anosups/rng.hpp"

namespace anosups {

// Non-overlapping P x P decomposition of an image into M = rows * cols
// patches. Patch i sits at (row = i / cols, col = i % cols). Each patch is
// stored as P*P*C values in (y, x, c) order. Masked patches hold zeros; the
// original content is discarded when a patch is masked.
class PatchGrid {
 public:
  PatchGrid() = default;

  int patch_size() const { return patch_size_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int channels() const { return channels_; }
  int num_patches() const { return rows_ * cols_; }
  int patch_dim() const { return patch_size_ * patch_size_ * channels_; }

  std::span<const double> patch(int index) const;
  bool is_masked(int index) const;
  std::vector<int> masked_indices() const;
  std::vector<int> visible_indices() const;
  std::size_t masked_count() const;

  int index_of(int row, int col) const { return row * cols_ + col; }
  int row_of(int index) const { return index / cols_; }
  int col_of(int index) const { return index % cols_; }

  bool same_geometry(const PatchGrid& other) const {
    return patch_size_ == other.patch_size_ && rows_ == other.rows_ && cols_ == other.cols_ &&
           channels_ == other.channels_;
  }

  friend bool operator==(const PatchGrid&, const PatchGrid&) = default;

 private:
  friend PatchGrid patchify(const ImageTensor& image, int patch_size);
  friend PatchGrid mask_patches(const PatchGrid& grid, std::span<const int> indices);

  int patch_size_ = 0;
  int rows_ = 0;
  int cols_ = 0;
  int channels_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> masked_;
};

// Throws kNonDivisibleDimensions unless P divides H and W.
PatchGrid patchify(const ImageTensor& image, int patch_size);

// Reassembles the image; masked patches render as zeros.
ImageTensor unpatchify(const PatchGrid& grid);

// Returns a copy with `indices` masked in addition to any patches that were
// already masked. Throws kIndexOutOfRange.
PatchGrid mask_patches(const PatchGrid& grid, std::span<const int> indices);

// Random even assignment of m patches into k groups (0-based group ids).
struct Partition {
  int k_groups = 0;
  Seed seed = 0;
  std::vector<int> assignment;

  std::vector<std::vector<int>> groups() const;
};

// Seeded Fisher-Yates shuffle of 0..m-1, then round-robin dealing: the patch
// at shuffled position p goes to group p % k. Throws kInvalidK unless
// 2 <= k <= m.
Partition partition_patches(int m, int k, Seed seed);

// One grid per group; grid g has exactly the patches of group g masked.
std::vector<PatchGrid> make_incomplete_images(const PatchGrid& grid, const Partition& partition);

// Pixel mask covering the P x P blocks of the given patches.
BinaryMask patches_to_mask(const PatchGrid& grid, std::span<const int> indices);
BinaryMask patches_to_mask(int patch_size, int rows, int cols, std::span<const int> indices);

// Patches whose pixel overlap with `mask` is non-zero.
std::vector<int> mask_to_patches(const BinaryMask& mask, int patch_size);

}  // namespace anosups
