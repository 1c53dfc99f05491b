#pragma once

#include <array>
#include <string>
#include <vector>

#include "anosups/image.hpp"
#include "anosups/rng.hpp"

namespace anosups {

enum class TextureKind { kGrid, kStripes, kBlotch };
enum class AnomalyKind { kLine, kColor, kHole };

const char* texture_name(TextureKind kind);
TextureKind parse_texture(const std::string& name);
const char* anomaly_name(AnomalyKind kind);
AnomalyKind parse_anomaly(const std::string& name);

// Parametric normal texture. `jitter` bounds the per-image brightness offset
// (uniform in [-jitter, jitter]) and enables a random integer phase shift;
// `noise` is the per-pixel Gaussian standard deviation.
struct TextureParams {
  TextureKind kind = TextureKind::kStripes;
  int height = 224;
  int width = 224;
  int channels = 3;
  double jitter = 0.05;
  double noise = 0.02;
  int period = 8;          // grid spacing / stripe period in pixels
  int line_width = 2;      // grid line width in pixels
  double contrast = 0.25;  // grid line darkening / stripe amplitude
  double shading = 0.1;    // amplitude of a smooth per-image illumination field
  std::array<double, 3> base = {0.62, 0.58, 0.50};
};

// Values are quantized to multiples of 1/255 so PNG round trips are exact.
ImageTensor generate_texture(const TextureParams& params, Seed seed);

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct AnomalySpec {
  AnomalyKind kind = AnomalyKind::kColor;
  // Line: from -> to with `thickness` pixels.
  Point from, to;
  double thickness = 1.0;
  // Color disk and holes.
  std::vector<Point> centers;
  double radius = 1.0;
  std::array<double, 3> fill = {0.0, 0.0, 0.0};
  Seed seed = 0;
};

struct LabeledImage {
  std::string name;
  ImageTensor image;
  BinaryMask gt_mask;
  std::vector<AnomalySpec> specs;

  bool abnormal() const { return !specs.empty(); }
};

// Pixel membership; pixel (x, y) has its center at (x + 0.5, y + 0.5).
// Line: distance to the segment <= thickness / 2. Disk: (dx^2 + dy^2) <=
// radius^2 measured from the center to the pixel center.
BinaryMask anomaly_shape(const AnomalySpec& spec, int height, int width);

// Paints the anomaly. Line pixels take `fill` (a dark crack colour), color
// disks take `fill`, holes are set to 0. Throws kOutOfBounds when the
// geometry leaves the image or is degenerate (zero-length line, radius or
// thickness below one pixel). The ground-truth mask is exactly the set of
// modified pixels; throws kInvalidArgument if some shape pixel would be left
// unchanged (fill within 0.2 of the background).
LabeledImage inject(const ImageTensor& image, const AnomalySpec& spec);

struct AnomalyMix {
  int line = 1;
  int color = 1;
  int hole = 1;
};

struct SuiteConfig {
  int n_images = 60;
  AnomalyMix mix;
  int size_min = 4;   // pixels
  int size_max = 64;  // pixels
  int patch_size = 16;
  TextureParams texture;
  Seed seed = 0;
};

// Half the images (rounded down) are abnormal; abnormal images alternate with
// normal ones. Anomaly sizes are spread evenly over [size_min, size_max]
// within each kind; anomalies smaller than one patch are placed inside a
// single patch.
std::vector<LabeledImage> build_suite(const SuiteConfig& config);

// Normal images only, for training or calibration splits.
std::vector<ImageTensor> build_normals(const TextureParams& texture, int count, Seed seed);

// Stable content hash (FNV-1a over the 8-bit pixel values).
std::uint64_t image_hash(const ImageTensor& image);
std::uint64_t mask_hash(const BinaryMask& mask);

}  // namespace anosups
