#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anosups/calibration.hpp"
#include "anosups/image.hpp"
#include "anosups/patch_grid.hpp"
#include "anosups/reconstructor.hpp"

namespace anosups {

enum class DetectionMode { kTwoStep, kOneStep };

const char* mode_name(DetectionMode mode);
DetectionMode parse_mode(const std::string& name);

// Frobenius norm of the elementwise difference. Throws kShapeMismatch.
double patch_error(std::span<const double> reconstructed, std::span<const double> actual);

struct Step1Result {
  std::vector<double> e1;       // length M
  std::vector<int> suspected;   // ascending
  Partition partition;
};

// Partitions the patches into k groups, reconstructs every patch from the
// incomplete image that hides its group, and flags E1 > q1. With
// `concurrent` the k reconstructions run on separate threads; the result is
// identical either way.
Step1Result step1_identify_suspects(const ReconstructorModel& model, const ImageTensor& image,
                                    int k, double q1, Seed seed, bool concurrent = false);

// Suspected set from an error vector: {i : e1[i] > q1}.
std::vector<int> threshold_suspects(std::span<const double> e1, double q1);

struct Step2Result {
  std::vector<double> e2;      // aligned with the suspected list
  std::vector<int> anomalies;  // ascending, subset of suspected
  PatchGrid input;             // the incomplete image the reconstructor saw
};

// Hides exactly the suspected patches and re-reconstructs them from the
// remaining ones; flags E2 > q2. An empty suspected set returns an empty
// result without reconstructing. Throws kAllPatchesSuspected when nothing
// would remain visible.
Step2Result step2_confirm(const ReconstructorModel& model, const ImageTensor& image,
                          std::span<const int> suspected, double q2);

struct Timings {
  double step1_ms = 0.0;
  double step2_ms = 0.0;
};

struct DetectionReport {
  std::string image;
  DetectionMode mode = DetectionMode::kTwoStep;
  int k = 2;
  Seed seed = 0;
  double q1 = 0.0;
  double q2 = 0.0;
  std::vector<double> e1;
  std::vector<int> suspected;
  std::vector<double> e2;  // aligned with suspected; empty in one-step mode
  std::vector<int> anomalies;
  BinaryMask pixel_mask;
  Timings timings;
  std::optional<std::string> warning;
  // "ok", or "AllPatchesSuspected" when Step 2 could not run (see
  // DetectOptions::all_suspected_is_error).
  std::string status = "ok";
};

struct DetectOptions {
  DetectionMode mode = DetectionMode::kTwoStep;
  bool concurrent_step1 = false;
  double scope_ratio = 0.5;
  // When false, a two-step run that suspects every patch is reported with
  // status "AllPatchesSuspected" and every patch flagged instead of
  // throwing. Batch commands use this so one image cannot abort a run.
  bool all_suspected_is_error = true;
};

// Step 1 then (two-step mode) Step 2. One-step mode reports the Step-1
// flags directly. Uses profile.k, q1 and q2.
DetectionReport detect(const ReconstructorModel& model, const CalibrationProfile& profile,
                       const ImageTensor& image, Seed seed, const DetectOptions& options = {});

// Warning text when |suspected| / m exceeds `ratio`.
std::optional<std::string> warn_scope(std::size_t suspected, int m, double ratio = 0.5);

}  // namespace anosups
