#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "anosups/calibration.hpp"
#include "anosups/detector.hpp"
#include "anosups/metrics.hpp"
#include "anosups/reconstructor.hpp"
#include "anosups/serialize.hpp"
#include "anosups/synth.hpp"

namespace anosups {

struct NamedImage {
  std::string name;
  ImageTensor image;
};

enum class Preprocess { kNone, kCrop, kResize };

const char* preprocess_name(Preprocess p);
Preprocess parse_preprocess(const std::string& name);

// kNone returns the image unchanged (patchify rejects bad sizes later).
// kCrop takes the centred window whose sides are the largest multiples of
// patch_size; kResize resamples bilinearly to the nearest multiples (at
// least one patch per side).
ImageTensor preprocess(const ImageTensor& image, int patch_size, Preprocess mode);

// Corpus directory:
//   train/<name>.png, calib/<name>.png   anomaly-free splits
//   images/<name>.png, masks/<name>.png  labelled test split
//   manifest.json                        configuration, specs and hashes
struct CorpusConfig {
  SuiteConfig suite;
  int n_train = 200;
  int n_calib = 40;
};

// Writes the corpus and returns the manifest that was written.
Json write_corpus(const std::filesystem::path& dir, const CorpusConfig& config);

// Every *.png directly inside `dir`, sorted by file name; names are stems.
std::vector<NamedImage> read_image_dir(const std::filesystem::path& dir,
                                       int patch_size = 1, Preprocess mode = Preprocess::kNone);

// Test images with masks of the same stem (an absent mask means normal).
std::vector<LabeledImage> read_labeled_dir(const std::filesystem::path& images_dir,
                                           const std::filesystem::path& masks_dir);

std::vector<ImageTensor> images_of(std::span<const NamedImage> named);

// Seed derivation. Every stage hashes its name into the root seed; images
// are keyed by name so results do not depend on list order.
Seed calibration_stage_seed(Seed root);
Seed detection_seed(Seed root, int repeat, std::string_view image_name);

CalibrationProfile calibrate(const ReconstructorModel& model, std::span<const NamedImage> images,
                             int k, double alpha1, double alpha2, Seed root, int jobs);

// Runs detect on every image (fan-out over `jobs` threads). Reports come back
// in input order. AllPatchesSuspected is recorded in the report status.
std::vector<DetectionReport> detect_batch(const ReconstructorModel& model,
                                          const CalibrationProfile& profile,
                                          std::span<const NamedImage> images, Seed root, int repeat,
                                          DetectOptions options, int jobs);

// <dir>/<name>.json and <dir>/<name>.mask.png per report.
void write_reports(const std::filesystem::path& dir, std::span<const DetectionReport> reports,
                   int patch_size);

struct EvalRow {
  std::string image;
  bool abnormal = false;
  std::string status = "ok";
  EvalResult result;
};

// DICE on pixel masks; confusion on patch sets, with ground-truth patches
// from any-overlap patchization of the mask.
EvalRow evaluate_one(const std::string& name, std::span<const int> predicted_patches,
                     const BinaryMask& predicted_mask, const BinaryMask& truth, int patch_size,
                     const std::string& status = "ok");

struct EvalSummary {
  MeanStd dice_all;
  MeanStd dice_abnormal;
  MeanStd dice_normal;
};
EvalSummary summarize(std::span<const EvalRow> rows);

// Per-image rows followed by mean and std rows over all, abnormal and
// normal images.
std::string eval_csv(std::span<const EvalRow> rows);

struct AblationConfig {
  std::vector<int> ks = {2, 4, 8, 16};
  int one_step_k = 2;
  int repeat = 3;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  Seed seed = 0;
  int jobs = 1;
};

struct AblationRow {
  std::string method;  // "one-step" or "two-step"
  int k = 2;
  int repeat = 0;
  MeanStd dice;           // per-repeat mean DICE over abnormal images
  MeanStd dice_all;       // same over every image
  double ms_per_image = 0.0;
  int all_suspected = 0;  // images that hit AllPatchesSuspected, summed over repeats
};

// Detection model for a given K.
using ModelForK = std::function<const ReconstructorModel&(int k)>;

// One-step row followed by one two-step row per K. Each K gets its own
// calibration profile from `calibration` so thresholds match the masking
// ratio used at detection time.
std::vector<AblationRow> run_ablation(const ModelForK& model_for_k,
                                      std::span<const NamedImage> calibration,
                                      std::span<const LabeledImage> suite,
                                      const AblationConfig& config);

// Same model for every K.
std::vector<AblationRow> run_ablation(const ReconstructorModel& model,
                                      std::span<const NamedImage> calibration,
                                      std::span<const LabeledImage> suite,
                                      const AblationConfig& config);

std::string ablation_csv(std::span<const AblationRow> rows);

// Fixed-precision formatting shared by the CSV writers.
std::string format_number(double value);

}  // namespace anosups
