#include "anosups/calibration.hpp"

#include <algorithm>
#include <cmath>

#include "anosups/detector.hpp"
#include "anosups/error.hpp"
#include "anosups/parallel.hpp"

namespace anosups {

double upper_quantile(std::span<const double> sorted_errors, double alpha) {
  if (sorted_errors.empty()) throw Error(ErrorCode::kEmptySample, "no calibration errors");
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha must lie in [0, 1)");
  }
  // ceil((1 - alpha) * n) == n - floor(alpha * n); the small slack absorbs
  // products such as 0.07 * 100 landing just below an integer.
  const std::size_t n = sorted_errors.size();
  const auto above = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(n) + 1e-9));
  const std::size_t rank = std::clamp<std::size_t>(n - std::min(above, n - 1), 1, n);
  return sorted_errors[rank - 1];
}

CalibrationProfile CalibrationProfile::build(std::vector<double> errors, double alpha1,
                                             double alpha2, int k, Seed seed) {
  if (errors.empty()) throw Error(ErrorCode::kEmptySample, "no calibration errors");
  std::sort(errors.begin(), errors.end());
  CalibrationProfile profile;
  profile.q1 = upper_quantile(errors, alpha1);
  profile.q2 = upper_quantile(errors, alpha2);
  profile.errors = std::move(errors);
  profile.alpha1 = alpha1;
  profile.alpha2 = alpha2;
  profile.k = k;
  profile.seed = seed;
  return profile;
}

Seed image_seed(Seed stage_seed, std::string_view image_key) {
  return derive_seed(stage_seed, image_key);
}

std::vector<double> collect_errors(const ReconstructorModel& model,
                                   std::span<const ImageTensor> images, int k,
                                   std::span<const Seed> seeds, int jobs) {
  if (seeds.size() != images.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one seed per calibration image required");
  }
  const int m = model.geometry().num_patches();
  std::vector<std::vector<double>> per_image(images.size());
  parallel_for(images.size(), jobs, [&](std::size_t i) {
    require_same_geometry(model.geometry(),
                          GridGeometry::of(images[i], model.geometry().patch_size),
                          "calibration image " + std::to_string(i));
    per_image[i] = step1_identify_suspects(model, images[i], k, 0.0, seeds[i]).e1;
  });
  std::vector<double> errors;
  errors.reserve(images.size() * static_cast<std::size_t>(m));
  for (const auto& e : per_image) errors.insert(errors.end(), e.begin(), e.end());
  return errors;
}

}  // namespace anosups
