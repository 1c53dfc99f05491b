#pragma once

#include <span>
#include <vector>

#include "anosups/image.hpp"
#include "anosups/reconstructor.hpp"
#include "anosups/rng.hpp"

namespace anosups {

// Order statistic at ascending 1-based rank ceil((1 - alpha) * n) of an
// ascending-sorted sample. At most a fraction alpha of the sample lies
// strictly above the result; alpha = 0 gives the maximum.
// Throws kEmptySample, kInvalidArgument (alpha outside [0, 1)).
double upper_quantile(std::span<const double> sorted_errors, double alpha);

struct CalibrationProfile {
  std::vector<double> errors;  // ascending
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double q1 = 0.0;
  double q2 = 0.0;
  int k = 2;
  Seed seed = 0;

  // Sorts `errors` and derives q1, q2.
  static CalibrationProfile build(std::vector<double> errors, double alpha1, double alpha2, int k,
                                  Seed seed);
};

// Per-image seed used by Step 1 during calibration: derived from the stage
// seed and the image's position-independent key.
Seed image_seed(Seed stage_seed, std::string_view image_key);

// Runs Step 1 on each (anomaly-free) image and returns all M errors per
// image, image by image. seeds[i] drives the partition of images[i].
std::vector<double> collect_errors(const ReconstructorModel& model,
                                   std::span<const ImageTensor> images, int k,
                                   std::span<const Seed> seeds, int jobs = 1);

}  // namespace anosups
