#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "anosups/calibration.hpp"
#include "anosups/detector.hpp"
#include "anosups/synth.hpp"

namespace anosups {

using Json = nlohmann::ordered_json;

// Report as JSON: sets are ascending index lists, e2 is aligned with
// `suspected`, timings are in milliseconds. The pixel mask is not embedded
// (it goes to a PNG next to the report).
Json report_json(const DetectionReport& report, int patch_size);

// Fields the evaluation needs back from a report file.
struct ReportSummary {
  std::string image;
  std::string status;  // "ok" or an error code name
  int patch_size = 0;
  int num_patches = 0;
  std::vector<int> suspected;
  std::vector<int> anomalies;
  double step1_ms = 0.0;
  double step2_ms = 0.0;
};
ReportSummary read_report_summary(const std::filesystem::path& path);

Json spec_json(const AnomalySpec& spec);
AnomalySpec spec_from_json(const Json& json);

// Raw errors: flat little-endian float64 array, no header.
void write_errors(const std::filesystem::path& path, std::span<const double> errors);
std::vector<double> read_errors(const std::filesystem::path& path);

// Profile JSON {alpha1, alpha2, q1, q2, k, seed, n_errors, errors_path};
// errors_path is relative to the JSON file's directory.
void save_profile(const std::filesystem::path& path, const CalibrationProfile& profile);
CalibrationProfile load_profile(const std::filesystem::path& path);

// Whole-file helpers; both throw kIo.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// Seeds print as decimal strings so 64-bit values survive JSON readers
// that use doubles.
std::string seed_string(Seed seed);
Seed parse_seed(const std::string& text);

}  // namespace anosups
