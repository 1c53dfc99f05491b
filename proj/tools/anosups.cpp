// anosups: command-line front end for corpus synthesis, training,
// calibration, detection, evaluation and the one-step/two-step ablation.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "anosups/error.hpp"
#include "anosups/model_io.hpp"
#include "anosups/parallel.hpp"
#include "anosups/pipeline.hpp"
#include "anosups/png_io.hpp"
#include "anosups/serialize.hpp"

namespace fs = std::filesystem;
using namespace anosups;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Common {
  int jobs = default_jobs();
  std::string seed = "0";
  std::string config;
};

void add_common(CLI::App* app, Common& common) {
  app->add_option("--config", common.config, "Flat key=value file; command-line flags win");
  app->add_option("--jobs", common.jobs, "Worker threads (default: ANOSUPS_JOBS or 1)")
      ->check(CLI::PositiveNumber);
  app->add_option("--seed", common.seed, "Root seed");
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.rfind(flag + "=", 0) == 0;
  });
}

// Keys of the config file are long option names without the dashes. Each
// entry whose option is absent from the command line is appended to it, so
// flags win. Keys the subcommand does not know are ignored.
std::vector<std::string> expand_config(const CLI::App& app, std::vector<std::string> args) {
  if (args.empty()) return args;
  const CLI::App* sub = app.get_subcommand_no_throw(args[0]);
  if (sub == nullptr) return args;
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::istringstream in(read_text(path));
  std::vector<std::string> extra;
  for (const auto& item : CLI::ConfigINI().from_config(in)) {
    if (!item.parents.empty() && item.parents != std::vector<std::string>{sub->get_name()}) continue;
    const std::string flag = "--" + item.name;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (opt == nullptr || flag == "--config" || has_flag(args, flag)) continue;
    if (opt->get_expected_min() == 0) {
      const std::string v = item.inputs.empty() ? "true" : item.inputs.front();
      if (v == "true" || v == "1" || v == "on" || v == "yes") extra.push_back(flag);
      continue;
    }
    extra.push_back(flag);
    extra.insert(extra.end(), item.inputs.begin(), item.inputs.end());
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "invalid integer list '" + text + "'");
    }
  }
  if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "empty integer list");
  return out;
}

void require_geometry(const ReconstructorModel& model, std::span<const NamedImage> images,
                      const std::string& what) {
  for (const auto& n : images) {
    require_same_geometry(model.geometry(), GridGeometry::of(n.image, model.geometry().patch_size),
                          what + " image " + n.name);
  }
}

void require_nonempty(std::span<const NamedImage> images, const std::string& dir) {
  if (images.empty()) throw Error(ErrorCode::kIo, "no PNG images in " + dir);
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDivergedTraining:
    case ErrorCode::kAllPatchesSuspected:
    case ErrorCode::kEmptySample:
      return kExitRuntime;
    default:
      return kExitValidation;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-step patch-reconstruction anomaly detection"};
  app.require_subcommand(1);

  // synth
  Common synth_common;
  CorpusConfig corpus;
  std::string synth_out, texture = texture_name(corpus.suite.texture.kind);
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus (train/calib/test splits)");
  add_common(synth, synth_common);
  synth->add_option("--out", synth_out, "Corpus directory")->required();
  synth->add_option("--n", corpus.suite.n_images, "Test images (half abnormal)");
  synth->add_option("--n-train", corpus.n_train, "Anomaly-free training images");
  synth->add_option("--n-calib", corpus.n_calib, "Anomaly-free calibration images");
  synth->add_option("--texture", texture, "grid, stripes or blotch");
  synth->add_option("--height", corpus.suite.texture.height);
  synth->add_option("--width", corpus.suite.texture.width);
  synth->add_option("--channels", corpus.suite.texture.channels);
  synth->add_option("--period", corpus.suite.texture.period);
  synth->add_option("--line-width", corpus.suite.texture.line_width);
  synth->add_option("--contrast", corpus.suite.texture.contrast);
  synth->add_option("--shading", corpus.suite.texture.shading);
  synth->add_option("--jitter", corpus.suite.texture.jitter);
  synth->add_option("--noise", corpus.suite.texture.noise);
  synth->add_option("--size-min", corpus.suite.size_min, "Smallest anomaly extent in pixels");
  synth->add_option("--size-max", corpus.suite.size_max, "Largest anomaly extent in pixels");
  synth->add_option("--patch-size", corpus.suite.patch_size);
  synth->add_option("--mix-line", corpus.suite.mix.line);
  synth->add_option("--mix-color", corpus.suite.mix.color);
  synth->add_option("--mix-hole", corpus.suite.mix.hole);

  // train
  Common train_common;
  TrainConfig train_config;
  std::string train_images, train_out, train_curve, kind = "attention", optimizer = "adam",
                                                   train_pre = "none";
  bool no_cosine = false;
  auto* train_cmd = app.add_subcommand("train", "Train a patch reconstructor on normal images");
  add_common(train_cmd, train_common);
  train_cmd->add_option("--images", train_images, "Directory of anomaly-free PNGs")->required();
  train_cmd->add_option("--out", train_out, "Model file")->required();
  train_cmd->add_option("--curve", train_curve, "Loss curve CSV (default <out>.curve.csv)");
  train_cmd->add_option("--kind", kind, "attention, pca or positional-mean");
  train_cmd->add_option("--patch-size", train_config.patch_size);
  train_cmd->add_option("--k", train_config.k_for_masking, "Masking ratio alpha = 1 - 1/K");
  train_cmd->add_option("--epochs", train_config.epochs);
  train_cmd->add_option("--batch", train_config.batch_size);
  train_cmd->add_option("--lr", train_config.learning_rate);
  train_cmd->add_option("--optimizer", optimizer, "adam or sgd");
  train_cmd->add_option("--momentum", train_config.momentum);
  train_cmd->add_flag("--no-cosine", no_cosine, "Constant learning rate after warmup");
  train_cmd->add_option("--holdout", train_config.holdout_fraction);
  train_cmd->add_option("--embed-dim", train_config.attention.embed_dim);
  train_cmd->add_option("--heads", train_config.attention.heads);
  train_cmd->add_option("--blocks", train_config.attention.blocks);
  train_cmd->add_option("--mlp-ratio", train_config.attention.mlp_ratio);
  train_cmd->add_option("--rank", train_config.pca_rank, "PCA rank");
  train_cmd->add_option("--preprocess", train_pre, "none, crop or resize");

  // calibrate
  Common cal_common;
  std::string cal_model, cal_images, cal_out, cal_pre = "none";
  int cal_k = 2;
  double cal_alpha1 = 0.0, cal_alpha2 = 0.0;
  auto* cal_cmd = app.add_subcommand("calibrate", "Build thresholds from anomaly-free images");
  add_common(cal_cmd, cal_common);
  cal_cmd->add_option("--model", cal_model)->required();
  cal_cmd->add_option("--images", cal_images, "Directory of anomaly-free PNGs")->required();
  cal_cmd->add_option("--out", cal_out, "Profile JSON")->required();
  cal_cmd->add_option("--k", cal_k);
  cal_cmd->add_option("--alpha1", cal_alpha1);
  cal_cmd->add_option("--alpha2", cal_alpha2);
  cal_cmd->add_option("--preprocess", cal_pre, "none, crop or resize");

  // detect
  Common det_common;
  std::string det_model, det_profile, det_images, det_out, det_mode = "two-step", det_pre = "none";
  DetectOptions det_options;
  auto* det_cmd = app.add_subcommand("detect", "Detect anomalous patches in images");
  add_common(det_cmd, det_common);
  det_cmd->add_option("--model", det_model)->required();
  det_cmd->add_option("--profile", det_profile)->required();
  det_cmd->add_option("--images", det_images)->required();
  det_cmd->add_option("--out", det_out, "Report directory")->required();
  det_cmd->add_option("--mode", det_mode, "two-step or one-step");
  det_cmd->add_flag("--concurrent-step1", det_options.concurrent_step1,
                    "Run the K Step-1 reconstructions on separate threads");
  det_cmd->add_option("--scope-ratio", det_options.scope_ratio, "Warn when |S|/M exceeds this");
  det_cmd->add_option("--preprocess", det_pre, "none, crop or resize");

  // eval
  Common eval_common;
  std::string eval_reports, eval_masks, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "Score detection reports against ground-truth masks");
  add_common(eval_cmd, eval_common);
  eval_cmd->add_option("--reports", eval_reports)->required();
  eval_cmd->add_option("--masks", eval_masks)->required();
  eval_cmd->add_option("--out", eval_out, "CSV path")->required();

  // ablate
  Common abl_common;
  AblationConfig abl;
  std::string abl_model, abl_calib, abl_images, abl_masks, abl_out, abl_ks = "2,4,8,16";
  auto* abl_cmd = app.add_subcommand("ablate", "One-step vs two-step over K");
  add_common(abl_cmd, abl_common);
  abl_cmd->add_option("--model", abl_model,
                      "Model file; a {k} in the path selects one model per K")
      ->required();
  abl_cmd->add_option("--calib", abl_calib, "Anomaly-free calibration PNGs")->required();
  abl_cmd->add_option("--images", abl_images, "Test PNGs")->required();
  abl_cmd->add_option("--masks", abl_masks, "Ground-truth mask PNGs")->required();
  abl_cmd->add_option("--out", abl_out, "CSV path")->required();
  abl_cmd->add_option("--ks", abl_ks, "Comma-separated K values for the two-step rows");
  abl_cmd->add_option("--one-step-k", abl.one_step_k);
  abl_cmd->add_option("--repeat", abl.repeat)->check(CLI::PositiveNumber);
  abl_cmd->add_option("--alpha1", abl.alpha1);
  abl_cmd->add_option("--alpha2", abl.alpha2);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(app, std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (synth->parsed()) {
      corpus.suite.texture.kind = parse_texture(texture);
      corpus.suite.seed = parse_seed(synth_common.seed);
      if (corpus.suite.size_min < 1 || corpus.suite.size_max < corpus.suite.size_min) {
        throw Error(ErrorCode::kInvalidArgument, "need 1 <= size-min <= size-max");
      }
      const int p = corpus.suite.patch_size;
      if (p < 1 || corpus.suite.texture.height % p != 0 || corpus.suite.texture.width % p != 0) {
        throw Error(ErrorCode::kNonDivisibleDimensions,
                    "image size must be a multiple of the patch size");
      }
      const Json manifest = write_corpus(synth_out, corpus);
      std::cout << "wrote " << manifest["test"].size() << " test, " << manifest["train"].size()
                << " train, " << manifest["calib"].size() << " calibration images to " << synth_out
                << "\nmanifest hash " << hex64(fnv1a64(read_text(fs::path(synth_out) / "manifest.json")))
                << "\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      train_config.seed = parse_seed(train_common.seed);
      train_config.jobs = train_common.jobs;
      train_config.cosine_decay = !no_cosine;
      if (optimizer == "adam") {
        train_config.optimizer = Optimizer::kAdam;
      } else if (optimizer == "sgd") {
        train_config.optimizer = Optimizer::kSgdMomentum;
      } else {
        throw Error(ErrorCode::kInvalidArgument, "unknown optimizer '" + optimizer + "'");
      }
      const auto named =
          read_image_dir(train_images, train_config.patch_size, parse_preprocess(train_pre));
      require_nonempty(named, train_images);
      const auto images = images_of(named);
      const TrainResult result = train(train_config, parse_kind(kind), images, [](const EpochRecord& r) {
        std::cerr << "epoch " << r.epoch << " train " << r.train_loss << " holdout " << r.holdout_loss
                  << "\n";
      });
      save_model(train_out, result.model);
      Json sidecar = model_header_json(result.model);
      sidecar["training"] = {{"epochs", train_config.epochs},
                             {"batch", train_config.batch_size},
                             {"lr", train_config.learning_rate},
                             {"optimizer", optimizer},
                             {"k_for_masking", train_config.k_for_masking},
                             {"seed", train_common.seed},
                             {"images", images.size()},
                             {"best_epoch", result.best_epoch}};
      write_text(train_out + ".json", sidecar.dump(2) + "\n");
      std::ostringstream curve;
      curve << "epoch,train_loss,holdout_loss\n";
      for (const auto& r : result.curve) {
        curve << r.epoch << ',' << (std::isnan(r.train_loss) ? "" : format_number(r.train_loss)) << ','
              << format_number(r.holdout_loss) << '\n';
      }
      write_text(train_curve.empty() ? train_out + ".curve.csv" : train_curve, curve.str());
      std::cout << "saved " << kind_name(result.model.kind()) << " model to " << train_out
                << " (best epoch " << result.best_epoch << ")\n";
      return 0;
    }

    if (cal_cmd->parsed()) {
      const ReconstructorModel model = load_model(cal_model);
      const auto named =
          read_image_dir(cal_images, model.geometry().patch_size, parse_preprocess(cal_pre));
      require_nonempty(named, cal_images);
      require_geometry(model, named, "calibration");
      const CalibrationProfile profile = calibrate(model, named, cal_k, cal_alpha1, cal_alpha2,
                                                   parse_seed(cal_common.seed), cal_common.jobs);
      save_profile(cal_out, profile);
      std::cout << "calibrated on " << profile.errors.size() << " patch errors: q1 " << profile.q1
                << ", q2 " << profile.q2 << "\n";
      return 0;
    }

    if (det_cmd->parsed()) {
      const ReconstructorModel model = load_model(det_model);
      const CalibrationProfile profile = load_profile(det_profile);
      det_options.mode = parse_mode(det_mode);
      const auto named =
          read_image_dir(det_images, model.geometry().patch_size, parse_preprocess(det_pre));
      require_nonempty(named, det_images);
      require_geometry(model, named, "detection");
      const auto reports = detect_batch(model, profile, named, parse_seed(det_common.seed), 0,
                                        det_options, det_common.jobs);
      write_reports(det_out, reports, model.geometry().patch_size);
      int flagged = 0;
      for (const auto& r : reports) {
        if (!r.anomalies.empty()) ++flagged;
        if (r.warning) std::cerr << r.image << ": " << *r.warning << "\n";
        if (r.status != "ok") std::cerr << r.image << ": " << r.status << "\n";
      }
      std::cout << "wrote " << reports.size() << " reports to " << det_out << "; " << flagged
                << " images with anomalies\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(eval_reports)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) throw Error(ErrorCode::kIo, "no reports in " + eval_reports);
      std::vector<EvalRow> rows;
      for (const auto& f : files) {
        const ReportSummary s = read_report_summary(f);
        const BinaryMask predicted = read_mask_png(f.parent_path() / (s.image + ".mask.png"));
        const fs::path truth_path = fs::path(eval_masks) / (s.image + ".png");
        const BinaryMask truth = fs::exists(truth_path)
                                     ? read_mask_png(truth_path)
                                     : BinaryMask(predicted.height, predicted.width);
        if (!(truth.height == predicted.height && truth.width == predicted.width)) {
          throw Error(ErrorCode::kShapeMismatch, "mask size differs for " + s.image);
        }
        rows.push_back(evaluate_one(s.image, s.anomalies, predicted, truth, s.patch_size, s.status));
      }
      write_text(eval_out, eval_csv(rows));
      const EvalSummary summary = summarize(rows);
      std::cout << "mean DICE " << format_number(summary.dice_all.mean) << " over " << rows.size()
                << " images; abnormal " << format_number(summary.dice_abnormal.mean) << "\n";
      return 0;
    }

    if (abl_cmd->parsed()) {
      abl.ks = parse_int_list(abl_ks);
      std::vector<int> needed = abl.ks;
      needed.push_back(abl.one_step_k);
      std::map<int, ReconstructorModel> models;
      for (int k : needed) {
        if (models.contains(k)) continue;
        std::string path = abl_model;
        if (const auto at = path.find("{k}"); at != std::string::npos) {
          path.replace(at, 3, std::to_string(k));
        } else if (!models.empty()) {
          models.emplace(k, models.begin()->second);
          continue;
        }
        models.emplace(k, load_model(path));
      }
      const auto calib = read_image_dir(abl_calib);
      require_nonempty(calib, abl_calib);
      const auto suite = read_labeled_dir(abl_images, abl_masks);
      if (suite.empty()) throw Error(ErrorCode::kIo, "no PNG images in " + abl_images);
      for (const auto& [k, model] : models) {
        require_geometry(model, calib, "calibration");
        for (const auto& item : suite) {
          require_same_geometry(model.geometry(),
                                GridGeometry::of(item.image, model.geometry().patch_size),
                                "test image " + item.name);
        }
      }
      abl.seed = parse_seed(abl_common.seed);
      abl.jobs = abl_common.jobs;
      const auto rows = run_ablation(
          [&](int k) -> const ReconstructorModel& { return models.at(k); }, calib, suite, abl);
      const std::string csv = ablation_csv(rows);
      write_text(abl_out, csv);
      std::cout << csv;
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}
