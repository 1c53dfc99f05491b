#include "anosups/serialize.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>

#include "anosups/error.hpp"

namespace anosups {

namespace {

Json point_json(const Point& p) { return Json::array({p.x, p.y}); }

Point point_from_json(const Json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

template <typename T>
T field(const Json& j, const char* name, const std::filesystem::path& path) {
  if (!j.contains(name)) {
    throw Error(ErrorCode::kFormat, path.string() + ": missing field '" + name + "'");
  }
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, path.string() + ": field '" + name + "': " + e.what());
  }
}

Json parse_json_file(const std::filesystem::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
}

}  // namespace

std::string seed_string(Seed seed) { return std::to_string(seed); }

Seed parse_seed(const std::string& text) {
  Seed value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "invalid seed '" + text + "'");
  }
  return value;
}

Json report_json(const DetectionReport& report, int patch_size) {
  Json j;
  j["image"] = report.image;
  j["status"] = report.status;
  j["mode"] = mode_name(report.mode);
  j["k"] = report.k;
  j["seed"] = seed_string(report.seed);
  j["patch_size"] = patch_size;
  j["num_patches"] = report.e1.size();
  j["q1"] = report.q1;
  j["q2"] = report.q2;
  j["e1"] = report.e1;
  j["suspected"] = report.suspected;
  j["e2"] = report.e2;
  j["anomalies"] = report.anomalies;
  j["anomalous_pixels"] = report.pixel_mask.area();
  j["warning"] = report.warning ? Json(*report.warning) : Json(nullptr);
  j["timings"] = {{"step1_ms", report.timings.step1_ms}, {"step2_ms", report.timings.step2_ms}};
  return j;
}

ReportSummary read_report_summary(const std::filesystem::path& path) {
  const Json j = parse_json_file(path);
  ReportSummary s;
  s.image = field<std::string>(j, "image", path);
  s.status = field<std::string>(j, "status", path);
  s.patch_size = field<int>(j, "patch_size", path);
  s.num_patches = field<int>(j, "num_patches", path);
  s.suspected = field<std::vector<int>>(j, "suspected", path);
  s.anomalies = field<std::vector<int>>(j, "anomalies", path);
  const Json timings = field<Json>(j, "timings", path);
  s.step1_ms = field<double>(timings, "step1_ms", path);
  s.step2_ms = field<double>(timings, "step2_ms", path);
  return s;
}

Json spec_json(const AnomalySpec& spec) {
  Json j;
  j["kind"] = anomaly_name(spec.kind);
  switch (spec.kind) {
    case AnomalyKind::kLine:
      j["from"] = point_json(spec.from);
      j["to"] = point_json(spec.to);
      j["thickness"] = spec.thickness;
      j["fill"] = spec.fill;
      break;
    case AnomalyKind::kColor:
      j["centers"] = Json::array();
      for (const auto& c : spec.centers) j["centers"].push_back(point_json(c));
      j["radius"] = spec.radius;
      j["fill"] = spec.fill;
      break;
    case AnomalyKind::kHole:
      j["centers"] = Json::array();
      for (const auto& c : spec.centers) j["centers"].push_back(point_json(c));
      j["radius"] = spec.radius;
      break;
  }
  j["seed"] = seed_string(spec.seed);
  return j;
}

AnomalySpec spec_from_json(const Json& j) {
  AnomalySpec spec;
  spec.kind = parse_anomaly(j.at("kind").get<std::string>());
  if (j.contains("from")) spec.from = point_from_json(j.at("from"));
  if (j.contains("to")) spec.to = point_from_json(j.at("to"));
  if (j.contains("thickness")) spec.thickness = j.at("thickness").get<double>();
  if (j.contains("centers")) {
    for (const auto& c : j.at("centers")) spec.centers.push_back(point_from_json(c));
  }
  if (j.contains("radius")) spec.radius = j.at("radius").get<double>();
  if (j.contains("fill")) spec.fill = j.at("fill").get<std::array<double, 3>>();
  spec.seed = parse_seed(j.at("seed").get<std::string>());
  return spec;
}

void write_errors(const std::filesystem::path& path, std::span<const double> errors) {
  std::string bytes(errors.size() * 8, '\0');
  for (std::size_t i = 0; i < errors.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(errors[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  write_text(path, bytes);
}

std::vector<double> read_errors(const std::filesystem::path& path) {
  const std::string bytes = read_text(path);
  if (bytes.size() % 8 != 0) {
    throw Error(ErrorCode::kFormat, path.string() + ": size is not a multiple of 8 bytes");
  }
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

void save_profile(const std::filesystem::path& path, const CalibrationProfile& profile) {
  std::filesystem::path errors_name = path.filename();
  errors_name.replace_extension(".errors.bin");
  write_errors(path.parent_path() / errors_name, profile.errors);
  Json j;
  j["alpha1"] = profile.alpha1;
  j["alpha2"] = profile.alpha2;
  j["q1"] = profile.q1;
  j["q2"] = profile.q2;
  j["k"] = profile.k;
  j["seed"] = seed_string(profile.seed);
  j["n_errors"] = profile.errors.size();
  j["errors_path"] = errors_name.string();
  write_text(path, j.dump(2) + "\n");
}

CalibrationProfile load_profile(const std::filesystem::path& path) {
  const Json j = parse_json_file(path);
  const auto errors_path = path.parent_path() / field<std::string>(j, "errors_path", path);
  std::vector<double> errors = read_errors(errors_path);
  const auto n = field<std::size_t>(j, "n_errors", path);
  if (errors.size() != n) {
    throw Error(ErrorCode::kFormat, errors_path.string() + ": expected " + std::to_string(n) +
                                        " errors, found " + std::to_string(errors.size()));
  }
  CalibrationProfile profile = CalibrationProfile::build(
      std::move(errors), field<double>(j, "alpha1", path), field<double>(j, "alpha2", path),
      field<int>(j, "k", path), parse_seed(field<std::string>(j, "seed", path)));
  if (profile.q1 != field<double>(j, "q1", path) || profile.q2 != field<double>(j, "q2", path)) {
    throw Error(ErrorCode::kFormat, path.string() + ": thresholds do not match the stored errors");
  }
  return profile;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace anosups
