#include "anosups/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "anosups/error.hpp"
#include "anosups/parallel.hpp"
#include "anosups/png_io.hpp"

namespace anosups {

namespace fs = std::filesystem;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Json texture_json(const TextureParams& t) {
  Json j;
  j["kind"] = texture_name(t.kind);
  j["height"] = t.height;
  j["width"] = t.width;
  j["channels"] = t.channels;
  j["jitter"] = t.jitter;
  j["noise"] = t.noise;
  j["period"] = t.period;
  j["line_width"] = t.line_width;
  j["contrast"] = t.contrast;
  j["shading"] = t.shading;
  j["base"] = t.base;
  return j;
}

std::string image_name(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d", prefix, i);
  return buf;
}

Json write_normals(const fs::path& dir, const char* prefix, const std::vector<ImageTensor>& images) {
  Json list = Json::array();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string name = image_name(prefix, static_cast<int>(i));
    write_png(dir / (name + ".png"), images[i]);
    list.push_back({{"name", name}, {"hash", hex64(image_hash(images[i]))}});
  }
  return list;
}

double bilinear(const ImageTensor& img, double y, double x, int c) {
  const double fy = std::clamp(y, 0.0, static_cast<double>(img.height() - 1));
  const double fx = std::clamp(x, 0.0, static_cast<double>(img.width() - 1));
  const int y0 = static_cast<int>(std::floor(fy));
  const int x0 = static_cast<int>(std::floor(fx));
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const double wy = fy - y0;
  const double wx = fx - x0;
  const double top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
  const double bottom = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
  return top * (1 - wy) + bottom * wy;
}

}  // namespace

const char* preprocess_name(Preprocess p) {
  switch (p) {
    case Preprocess::kNone: return "none";
    case Preprocess::kCrop: return "crop";
    case Preprocess::kResize: return "resize";
  }
  return "unknown";
}

Preprocess parse_preprocess(const std::string& name) {
  if (name == "none") return Preprocess::kNone;
  if (name == "crop") return Preprocess::kCrop;
  if (name == "resize") return Preprocess::kResize;
  throw Error(ErrorCode::kInvalidArgument, "unknown preprocessing '" + name + "'");
}

ImageTensor preprocess(const ImageTensor& image, int patch_size, Preprocess mode) {
  if (patch_size < 1) throw Error(ErrorCode::kInvalidArgument, "patch size must be >= 1");
  const int h = image.height();
  const int w = image.width();
  const int c = image.channels();
  if (mode == Preprocess::kNone || (h % patch_size == 0 && w % patch_size == 0)) return image;
  if (mode == Preprocess::kCrop) {
    const int th = h / patch_size * patch_size;
    const int tw = w / patch_size * patch_size;
    if (th == 0 || tw == 0) {
      throw Error(ErrorCode::kNonDivisibleDimensions, "image smaller than one patch");
    }
    const int oy = (h - th) / 2;
    const int ox = (w - tw) / 2;
    std::vector<double> data(static_cast<std::size_t>(th) * tw * c);
    for (int y = 0; y < th; ++y) {
      for (int x = 0; x < tw; ++x) {
        for (int ch = 0; ch < c; ++ch) {
          data[(static_cast<std::size_t>(y) * tw + x) * c + ch] = image.at(y + oy, x + ox, ch);
        }
      }
    }
    return ImageTensor(th, tw, c, std::move(data));
  }
  auto nearest = [&](int v) {
    return std::max(patch_size, static_cast<int>(std::lround(static_cast<double>(v) / patch_size)) * patch_size);
  };
  const int th = nearest(h);
  const int tw = nearest(w);
  std::vector<double> data(static_cast<std::size_t>(th) * tw * c);
  const double sy = static_cast<double>(h) / th;
  const double sx = static_cast<double>(w) / tw;
  for (int y = 0; y < th; ++y) {
    for (int x = 0; x < tw; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        const double v = bilinear(image, (y + 0.5) * sy - 0.5, (x + 0.5) * sx - 0.5, ch);
        data[(static_cast<std::size_t>(y) * tw + x) * c + ch] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return ImageTensor(th, tw, c, std::move(data));
}

Json write_corpus(const fs::path& dir, const CorpusConfig& config) {
  const SuiteConfig& suite_config = config.suite;
  if (config.n_train < 1 || config.n_calib < 1 || suite_config.n_images < 1) {
    throw Error(ErrorCode::kInvalidArgument, "image counts must be >= 1");
  }
  const std::vector<LabeledImage> suite = build_suite(suite_config);
  const auto train = build_normals(suite_config.texture, config.n_train,
                                   derive_seed(suite_config.seed, "train-split"));
  const auto calib = build_normals(suite_config.texture, config.n_calib,
                                   derive_seed(suite_config.seed, "calib-split"));
  for (const char* sub : {"train", "calib", "images", "masks"}) {
    fs::remove_all(dir / sub);
    fs::create_directories(dir / sub);
  }

  Json manifest;
  manifest["seed"] = seed_string(suite_config.seed);
  manifest["patch_size"] = suite_config.patch_size;
  manifest["size_min"] = suite_config.size_min;
  manifest["size_max"] = suite_config.size_max;
  manifest["mix"] = {{"line", suite_config.mix.line},
                     {"color", suite_config.mix.color},
                     {"hole", suite_config.mix.hole}};
  manifest["texture"] = texture_json(suite_config.texture);
  manifest["train"] = write_normals(dir / "train", "train", train);
  manifest["calib"] = write_normals(dir / "calib", "calib", calib);
  Json test = Json::array();
  for (const auto& item : suite) {
    write_png(dir / "images" / (item.name + ".png"), item.image);
    write_mask_png(dir / "masks" / (item.name + ".png"), item.gt_mask);
    Json entry;
    entry["name"] = item.name;
    entry["abnormal"] = item.abnormal();
    entry["hash"] = hex64(image_hash(item.image));
    entry["mask_hash"] = hex64(mask_hash(item.gt_mask));
    entry["mask_area"] = item.gt_mask.area();
    entry["specs"] = Json::array();
    for (const auto& spec : item.specs) entry["specs"].push_back(spec_json(spec));
    test.push_back(std::move(entry));
  }
  manifest["test"] = std::move(test);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

std::vector<NamedImage> read_image_dir(const fs::path& dir, int patch_size, Preprocess mode) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kIo, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<NamedImage> out;
  out.reserve(files.size());
  for (const auto& f : files) {
    out.push_back({f.stem().string(), preprocess(read_png(f), patch_size, mode)});
  }
  return out;
}

std::vector<LabeledImage> read_labeled_dir(const fs::path& images_dir, const fs::path& masks_dir) {
  std::vector<LabeledImage> out;
  for (auto& named : read_image_dir(images_dir)) {
    LabeledImage item;
    item.name = named.name;
    const fs::path mask_path = masks_dir / (named.name + ".png");
    if (fs::exists(mask_path)) {
      item.gt_mask = read_mask_png(mask_path);
      if (item.gt_mask.height != named.image.height() || item.gt_mask.width != named.image.width()) {
        throw Error(ErrorCode::kShapeMismatch, "mask " + mask_path.string() + " does not match its image");
      }
    } else {
      item.gt_mask = BinaryMask(named.image.height(), named.image.width());
    }
    item.image = std::move(named.image);
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<ImageTensor> images_of(std::span<const NamedImage> named) {
  std::vector<ImageTensor> out;
  out.reserve(named.size());
  for (const auto& n : named) out.push_back(n.image);
  return out;
}

Seed calibration_stage_seed(Seed root) { return derive_seed(root, "calibrate"); }

Seed detection_seed(Seed root, int repeat, std::string_view image_name) {
  const Seed stage = derive_seed(derive_seed(root, "detect"), static_cast<std::uint64_t>(repeat));
  return image_seed(stage, image_name);
}

CalibrationProfile calibrate(const ReconstructorModel& model, std::span<const NamedImage> images,
                             int k, double alpha1, double alpha2, Seed root, int jobs) {
  const Seed stage = calibration_stage_seed(root);
  std::vector<Seed> seeds;
  for (const auto& n : images) seeds.push_back(image_seed(stage, n.name));
  const auto plain = images_of(images);
  return CalibrationProfile::build(collect_errors(model, plain, k, seeds, jobs), alpha1, alpha2, k,
                                   stage);
}

std::vector<DetectionReport> detect_batch(const ReconstructorModel& model,
                                          const CalibrationProfile& profile,
                                          std::span<const NamedImage> images, Seed root, int repeat,
                                          DetectOptions options, int jobs) {
  options.all_suspected_is_error = false;
  std::vector<DetectionReport> reports(images.size());
  parallel_for(images.size(), jobs, [&](std::size_t i) {
    reports[i] = detect(model, profile, images[i].image,
                        detection_seed(root, repeat, images[i].name), options);
    reports[i].image = images[i].name;
  });
  return reports;
}

void write_reports(const fs::path& dir, std::span<const DetectionReport> reports, int patch_size) {
  fs::create_directories(dir);
  for (const auto& r : reports) {
    write_text(dir / (r.image + ".json"), report_json(r, patch_size).dump(2) + "\n");
    write_mask_png(dir / (r.image + ".mask.png"), r.pixel_mask);
  }
}

EvalRow evaluate_one(const std::string& name, std::span<const int> predicted_patches,
                     const BinaryMask& predicted_mask, const BinaryMask& truth, int patch_size,
                     const std::string& status) {
  EvalRow row;
  row.image = name;
  row.status = status;
  row.abnormal = truth.area() > 0;
  const auto truth_patches = mask_to_patches(truth, patch_size);
  const int m = (truth.height / patch_size) * (truth.width / patch_size);
  row.result = patch_confusion(predicted_patches, truth_patches, m);
  row.result.dice = dice(predicted_mask, truth);
  return row;
}

EvalSummary summarize(std::span<const EvalRow> rows) {
  std::vector<double> all, abnormal, normal;
  for (const auto& r : rows) {
    all.push_back(r.result.dice);
    (r.abnormal ? abnormal : normal).push_back(r.result.dice);
  }
  return {mean_std(all), mean_std(abnormal), mean_std(normal)};
}

std::string format_number(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

std::string eval_csv(std::span<const EvalRow> rows) {
  std::ostringstream out;
  out << "image,abnormal,status,dice,tp,fp,fn,tn,type1_rate,type2_rate\n";
  for (const auto& r : rows) {
    const auto& e = r.result;
    out << r.image << ',' << (r.abnormal ? 1 : 0) << ',' << r.status << ',' << format_number(e.dice)
        << ',' << e.tp << ',' << e.fp << ',' << e.fn << ',' << e.tn << ','
        << format_number(e.type1_rate) << ',' << format_number(e.type2_rate) << '\n';
  }
  auto aggregate = [&](const char* label, auto keep) {
    std::vector<double> d, t1, t2;
    for (const auto& r : rows) {
      if (!keep(r)) continue;
      d.push_back(r.result.dice);
      t1.push_back(r.result.type1_rate);
      t2.push_back(r.result.type2_rate);
    }
    const MeanStd md = mean_std(d), m1 = mean_std(t1), m2 = mean_std(t2);
    out << "mean_" << label << ",," << d.size() << ',' << format_number(md.mean) << ",,,,,"
        << format_number(m1.mean) << ',' << format_number(m2.mean) << '\n';
    out << "std_" << label << ",," << d.size() << ',' << format_number(md.stddev) << ",,,,,"
        << format_number(m1.stddev) << ',' << format_number(m2.stddev) << '\n';
  };
  aggregate("all", [](const EvalRow&) { return true; });
  aggregate("abnormal", [](const EvalRow& r) { return r.abnormal; });
  aggregate("normal", [](const EvalRow& r) { return !r.abnormal; });
  return out.str();
}

std::vector<AblationRow> run_ablation(const ModelForK& model_for_k,
                                      std::span<const NamedImage> calibration,
                                      std::span<const LabeledImage> suite,
                                      const AblationConfig& config) {
  if (config.repeat < 1) throw Error(ErrorCode::kInvalidArgument, "repeat must be >= 1");
  if (config.ks.empty()) throw Error(ErrorCode::kInvalidArgument, "no K values given");
  std::vector<NamedImage> test;
  for (const auto& item : suite) test.push_back({item.name, item.image});
  auto run = [&](DetectionMode mode, int k) {
    const ReconstructorModel& model = model_for_k(k);
    const int patch_size = model.geometry().patch_size;
    const CalibrationProfile profile =
        calibrate(model, calibration, k, config.alpha1, config.alpha2, config.seed, config.jobs);
    AblationRow row;
    row.method = mode_name(mode);
    row.k = k;
    row.repeat = config.repeat;
    std::vector<double> per_repeat_abnormal, per_repeat_all;
    double total_ms = 0.0;
    for (int r = 0; r < config.repeat; ++r) {
      DetectOptions options;
      options.mode = mode;
      const auto reports = detect_batch(model, profile, test, config.seed, r, options, config.jobs);
      std::vector<double> abnormal, all;
      for (std::size_t i = 0; i < reports.size(); ++i) {
        const EvalRow e = evaluate_one(suite[i].name, reports[i].anomalies, reports[i].pixel_mask,
                                       suite[i].gt_mask, patch_size, reports[i].status);
        all.push_back(e.result.dice);
        if (e.abnormal) abnormal.push_back(e.result.dice);
        if (reports[i].status != "ok") ++row.all_suspected;
        total_ms += reports[i].timings.step1_ms + reports[i].timings.step2_ms;
      }
      per_repeat_abnormal.push_back(mean_std(abnormal).mean);
      per_repeat_all.push_back(mean_std(all).mean);
    }
    row.dice = mean_std(per_repeat_abnormal);
    row.dice_all = mean_std(per_repeat_all);
    row.ms_per_image = total_ms / static_cast<double>(config.repeat * std::max<std::size_t>(1, test.size()));
    return row;
  };

  std::vector<AblationRow> rows;
  rows.push_back(run(DetectionMode::kOneStep, config.one_step_k));
  for (int k : config.ks) rows.push_back(run(DetectionMode::kTwoStep, k));
  return rows;
}

std::vector<AblationRow> run_ablation(const ReconstructorModel& model,
                                      std::span<const NamedImage> calibration,
                                      std::span<const LabeledImage> suite,
                                      const AblationConfig& config) {
  return run_ablation([&](int) -> const ReconstructorModel& { return model; }, calibration, suite,
                      config);
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::ostringstream out;
  out << "method,k,repeat,mean_dice,std_dice,mean_dice_all,std_dice_all,all_suspected,ms_per_image\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.k << ',' << r.repeat << ',' << format_number(r.dice.mean) << ','
        << format_number(r.dice.stddev) << ',' << format_number(r.dice_all.mean) << ','
        << format_number(r.dice_all.stddev) << ',' << r.all_suspected << ','
        << format_number(r.ms_per_image) << '\n';
  }
  return out.str();
}

}  // namespace anosups
