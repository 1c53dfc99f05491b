#include "anosups/detector.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "anosups/error.hpp"
#include "anosups/parallel.hpp"

namespace anosups {

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

PatchGrid patchify_for(const ReconstructorModel& model, const ImageTensor& image) {
  PatchGrid grid = patchify(image, model.geometry().patch_size);
  require_same_geometry(model.geometry(), GridGeometry::of(grid), "image");
  return grid;
}

}  // namespace

const char* mode_name(DetectionMode mode) {
  return mode == DetectionMode::kTwoStep ? "two-step" : "one-step";
}

DetectionMode parse_mode(const std::string& name) {
  if (name == "two-step") return DetectionMode::kTwoStep;
  if (name == "one-step") return DetectionMode::kOneStep;
  throw Error(ErrorCode::kInvalidArgument, "unknown mode '" + name + "'");
}

double patch_error(std::span<const double> reconstructed, std::span<const double> actual) {
  if (reconstructed.size() != actual.size()) {
    throw Error(ErrorCode::kShapeMismatch, "patch sizes " + std::to_string(reconstructed.size()) +
                                               " and " + std::to_string(actual.size()));
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < actual.size(); ++j) {
    const double d = reconstructed[j] - actual[j];
    sum += d * d;
  }
  return std::sqrt(sum);
}

std::vector<int> threshold_suspects(std::span<const double> e1, double q1) {
  std::vector<int> out;
  for (std::size_t i = 0; i < e1.size(); ++i) {
    if (e1[i] > q1) out.push_back(static_cast<int>(i));
  }
  return out;
}

Step1Result step1_identify_suspects(const ReconstructorModel& model, const ImageTensor& image,
                                    int k, double q1, Seed seed, bool concurrent) {
  const PatchGrid grid = patchify_for(model, image);
  Step1Result result;
  result.partition = partition_patches(grid.num_patches(), k, seed);
  const auto groups = result.partition.groups();
  result.e1.assign(static_cast<std::size_t>(grid.num_patches()), 0.0);

  // Each group writes only its own patches' slots.
  parallel_for(groups.size(), concurrent ? static_cast<int>(groups.size()) : 1, [&](std::size_t g) {
    const PatchGrid incomplete = mask_patches(grid, groups[g]);
    const auto predicted = reconstruct_patches(model, incomplete, groups[g]);
    for (const auto& [index, patch] : predicted) {
      result.e1[static_cast<std::size_t>(index)] = patch_error(patch, grid.patch(index));
    }
  });
  result.suspected = threshold_suspects(result.e1, q1);
  return result;
}

Step2Result step2_confirm(const ReconstructorModel& model, const ImageTensor& image,
                          std::span<const int> suspected, double q2) {
  const PatchGrid grid = patchify_for(model, image);
  Step2Result result;
  if (suspected.empty()) return result;
  result.input = mask_patches(grid, suspected);
  if (result.input.masked_count() >= static_cast<std::size_t>(grid.num_patches())) {
    throw Error(ErrorCode::kAllPatchesSuspected,
                "all " + std::to_string(grid.num_patches()) +
                    " patches are suspected; the anomaly exceeds the method's scope");
  }
  const auto predicted = reconstruct_patches(model, result.input, suspected);
  result.e2.reserve(suspected.size());
  for (int index : suspected) {
    const double e = patch_error(predicted.at(index), grid.patch(index));
    result.e2.push_back(e);
    if (e > q2) result.anomalies.push_back(index);
  }
  return result;
}

DetectionReport detect(const ReconstructorModel& model, const CalibrationProfile& profile,
                       const ImageTensor& image, Seed seed, const DetectOptions& options) {
  DetectionReport report;
  report.mode = options.mode;
  report.k = profile.k;
  report.seed = seed;
  report.q1 = profile.q1;
  report.q2 = profile.q2;

  auto start = std::chrono::steady_clock::now();
  Step1Result step1 =
      step1_identify_suspects(model, image, profile.k, profile.q1, seed, options.concurrent_step1);
  report.timings.step1_ms = elapsed_ms(start);
  report.e1 = std::move(step1.e1);
  report.suspected = std::move(step1.suspected);
  const int m = model.geometry().num_patches();
  report.warning = warn_scope(report.suspected.size(), m, options.scope_ratio);

  if (options.mode == DetectionMode::kOneStep) {
    report.anomalies = report.suspected;
  } else if (!options.all_suspected_is_error && static_cast<int>(report.suspected.size()) == m) {
    report.status = error_code_name(ErrorCode::kAllPatchesSuspected);
    report.anomalies = report.suspected;
  } else {
    start = std::chrono::steady_clock::now();
    Step2Result step2 = step2_confirm(model, image, report.suspected, profile.q2);
    report.timings.step2_ms = elapsed_ms(start);
    report.e2 = std::move(step2.e2);
    report.anomalies = std::move(step2.anomalies);
  }
  const auto& g = model.geometry();
  report.pixel_mask = patches_to_mask(g.patch_size, g.rows, g.cols, report.anomalies);
  return report;
}

std::optional<std::string> warn_scope(std::size_t suspected, int m, double ratio) {
  if (m <= 0) return std::nullopt;
  const double fraction = static_cast<double>(suspected) / m;
  if (fraction <= ratio) return std::nullopt;
  std::ostringstream out;
  out << suspected << " of " << m << " patches suspected (" << fraction
      << " > " << ratio << "); anomaly may be global rather than regional";
  return out.str();
}

}  // namespace anosups
