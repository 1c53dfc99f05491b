#include "anosups/image.hpp"

#include <cmath>
#include <string>

#include "anosups/error.hpp"

namespace anosups {

ImageTensor::ImageTensor(int height, int width, int channels)
    : ImageTensor(height, width, channels,
                  std::vector<double>(static_cast<std::size_t>(height) * width * channels, 0.0)) {}

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (height <= 0 || width <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "image dimensions must be positive");
  }
  if (channels != 1 && channels != 3) {
    throw Error(ErrorCode::kInvalidArgument,
                "channels must be 1 or 3, got " + std::to_string(channels));
  }
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw Error(ErrorCode::kShapeMismatch, "data length does not match H*W*C");
  }
  for (double v : data_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "intensity outside [0, 1]");
    }
  }
}

std::size_t BinaryMask::area() const {
  std::size_t n = 0;
  for (auto v : data) n += v != 0;
  return n;
}

ImageTensor quantize_8bit(const ImageTensor& image) {
  std::vector<double> out(image.data().begin(), image.data().end());
  for (double& v : out) v = std::round(v * 255.0) / 255.0;
  return ImageTensor(image.height(), image.width(), image.channels(), std::move(out));
}

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kNonDivisibleDimensions: return "NonDivisibleDimensions";
    case ErrorCode::kInvalidK: return "InvalidK";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kGeometryMismatch: return "GeometryMismatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kTargetNotMasked: return "TargetNotMasked";
    case ErrorCode::kDivergedTraining: return "DivergedTraining";
    case ErrorCode::kEmptySample: return "EmptySample";
    case ErrorCode::kAllPatchesSuspected: return "AllPatchesSuspected";
    case ErrorCode::kOutOfBounds: return "OutOfBounds";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kFormat: return "Format";
  }
  return "Unknown";
}

}  // namespace anosups
