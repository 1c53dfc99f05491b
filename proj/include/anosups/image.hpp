#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace anosups {

// H x W x C intensity image with values in [0, 1]. Pixels are stored
// row-major with channels interleaved: index = (y * width + x) * channels + c.
class ImageTensor {
 public:
  ImageTensor() = default;
  // Zero-filled image.
  ImageTensor(int height, int width, int channels);
  // Validates the size and the [0, 1] range of `data`.
  ImageTensor(int height, int width, int channels, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const { return data_; }

  double at(int y, int x, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  // Mutating access; callers keep values in [0, 1].
  double& at(int y, int x, int c) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  bool same_geometry(const ImageTensor& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// H x W binary mask, 1 = anomalous.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t area() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

// Rounds every value to the nearest multiple of 1/255.
ImageTensor quantize_8bit(const ImageTensor& image);

}  // namespace anosups
