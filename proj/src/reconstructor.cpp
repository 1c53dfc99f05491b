#include "anosups/reconstructor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "anosups/error.hpp"
#include "anosups/parallel.hpp"

namespace anosups {

namespace {

GridGeometry common_geometry(std::span<const ImageTensor> images, int patch_size) {
  if (images.empty()) throw Error(ErrorCode::kInvalidArgument, "training set is empty");
  for (const auto& image : images) {
    if (!image.same_geometry(images.front())) {
      throw Error(ErrorCode::kGeometryMismatch,
                  "training images differ in size: " + std::to_string(image.height()) + "x" +
                      std::to_string(image.width()) + "x" + std::to_string(image.channels()) +
                      " vs " + std::to_string(images.front().height()) + "x" +
                      std::to_string(images.front().width()) + "x" +
                      std::to_string(images.front().channels()));
    }
  }
  // patchify validates divisibility.
  return GridGeometry::of(patchify(images.front(), patch_size));
}

Eigen::MatrixXd gather_truth(const PatchGrid& full, std::span<const int> targets) {
  Eigen::MatrixXd truth(static_cast<Eigen::Index>(targets.size()), full.patch_dim());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    auto values = full.patch(targets[t]);
    for (int j = 0; j < full.patch_dim(); ++j) {
      truth(static_cast<Eigen::Index>(t), j) = values[static_cast<std::size_t>(j)];
    }
  }
  return truth;
}

TrainingSample make_sample(const ImageTensor& image, int patch_size, double alpha, Seed seed) {
  MaskedSample masked = generate_training_sample(image, patch_size, alpha, seed);
  const PatchGrid full = patchify(image, patch_size);
  Eigen::MatrixXd truth = gather_truth(full, masked.targets);
  return {std::move(masked.grid), std::move(masked.targets), std::move(truth)};
}

PositionalMeanModel fit_positional_mean(const GridGeometry& geometry,
                                        std::span<const ImageTensor> images) {
  PositionalMeanModel model{geometry,
                            Eigen::MatrixXd::Zero(geometry.num_patches(), geometry.patch_dim())};
  for (const auto& image : images) {
    const PatchGrid grid = patchify(image, geometry.patch_size);
    for (int i = 0; i < geometry.num_patches(); ++i) {
      auto values = grid.patch(i);
      for (int j = 0; j < geometry.patch_dim(); ++j) {
        model.means(i, j) += values[static_cast<std::size_t>(j)];
      }
    }
  }
  model.means /= static_cast<double>(images.size());
  return model;
}

PcaModel fit_pca(const GridGeometry& geometry, std::span<const ImageTensor> images, int rank) {
  if (rank < 1) throw Error(ErrorCode::kInvalidArgument, "pca rank must be >= 1");
  const auto n = static_cast<Eigen::Index>(images.size());
  const Eigen::Index dim = static_cast<Eigen::Index>(geometry.num_patches()) * geometry.patch_dim();
  Eigen::MatrixXd data(n, dim);
  for (Eigen::Index r = 0; r < n; ++r) {
    // Patch-major flattening matches PatchGrid storage.
    const PatchGrid grid = patchify(images[static_cast<std::size_t>(r)], geometry.patch_size);
    for (int i = 0; i < geometry.num_patches(); ++i) {
      auto values = grid.patch(i);
      for (int j = 0; j < geometry.patch_dim(); ++j) {
        data(r, static_cast<Eigen::Index>(i) * geometry.patch_dim() + j) =
            values[static_cast<std::size_t>(j)];
      }
    }
  }
  PcaModel model;
  model.geometry = geometry;
  model.mean = data.colwise().mean().transpose();
  data.rowwise() -= model.mean.transpose();

  // Eigen-decompose the N x N Gram matrix; cheaper than the D x D covariance.
  const Eigen::MatrixXd gram = data * data.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  const Eigen::VectorXd values = solver.eigenvalues();
  const double top = values.size() ? std::max(values.maxCoeff(), 0.0) : 0.0;
  std::vector<Eigen::VectorXd> columns;
  for (Eigen::Index j = values.size() - 1; j >= 0 && static_cast<int>(columns.size()) < rank; --j) {
    if (values(j) <= 1e-12 * top || values(j) <= 0.0) break;
    Eigen::VectorXd u = data.transpose() * solver.eigenvectors().col(j);
    u /= u.norm();
    columns.push_back(std::move(u));
  }
  model.rank = static_cast<int>(columns.size());
  model.basis.resize(dim, model.rank);
  for (int j = 0; j < model.rank; ++j) model.basis.col(j) = columns[static_cast<std::size_t>(j)];
  // One Gram-Schmidt pass tightens orthonormality lost to rounding.
  if (model.rank > 0) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(model.basis);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, model.rank);
    for (int j = 0; j < model.rank; ++j) {
      if (q.col(j).dot(model.basis.col(j)) < 0) q.col(j) *= -1.0;
    }
    model.basis = std::move(q);
  }
  return model;
}

Eigen::MatrixXd pca_predict(const PcaModel& model, const PatchGrid& grid,
                            std::span<const int> targets) {
  const int dim = model.geometry.patch_dim();
  const int rank = model.rank;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(targets.size()), dim);
  Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(rank);
  if (rank > 0) {
    Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(rank, rank);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(rank);
    for (int i : grid.visible_indices()) {
      const auto block = model.basis.middleRows(static_cast<Eigen::Index>(i) * dim, dim);
      auto values = grid.patch(i);
      const Eigen::VectorXd residual =
          Eigen::Map<const Eigen::VectorXd>(values.data(), dim) -
          model.mean.segment(static_cast<Eigen::Index>(i) * dim, dim);
      normal.noalias() += block.transpose() * block;
      rhs.noalias() += block.transpose() * residual;
    }
    const double ridge = 1e-10 * std::max(normal.trace() / rank, 1e-300);
    normal.diagonal().array() += ridge;
    coeffs = normal.ldlt().solve(rhs);
  }
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const Eigen::Index start = static_cast<Eigen::Index>(targets[t]) * dim;
    Eigen::VectorXd patch = model.mean.segment(start, dim);
    if (rank > 0) patch.noalias() += model.basis.middleRows(start, dim) * coeffs;
    out.row(static_cast<Eigen::Index>(t)) = patch.transpose();
  }
  return out;
}

double cosine_lr(const TrainConfig& config, long step, long total_steps) {
  const long warmup = std::min<long>(100, std::max<long>(1, total_steps / 20));
  double lr = config.learning_rate;
  if (step < warmup) lr *= static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (config.cosine_decay && total_steps > warmup) {
    const double progress =
        static_cast<double>(std::max<long>(0, step - warmup)) / static_cast<double>(total_steps - warmup);
    lr *= 0.05 + 0.95 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  }
  return lr;
}

TrainResult train_attention(const TrainConfig& config, const GridGeometry& geometry,
                            std::span<const ImageTensor> images, const EpochCallback& on_epoch) {
  const std::size_t n = images.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng split_rng(derive_seed(config.seed, "holdout-split"));
  split_rng.shuffle(order);

  std::size_t n_holdout = 0;
  if (n >= 2) {
    n_holdout = static_cast<std::size_t>(std::lround(config.holdout_fraction * static_cast<double>(n)));
    n_holdout = std::clamp<std::size_t>(n_holdout, 1, n - 1);
  }
  std::vector<std::size_t> holdout(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_holdout));
  std::vector<std::size_t> train_ids(order.begin() + static_cast<std::ptrdiff_t>(n_holdout), order.end());
  if (holdout.empty()) holdout = train_ids;

  const double alpha = config.alpha();
  constexpr int kHoldoutMasks = 4;
  std::vector<TrainingSample> holdout_samples;
  const Seed holdout_seed = derive_seed(config.seed, "holdout-masks");
  for (std::size_t h = 0; h < holdout.size(); ++h) {
    for (int r = 0; r < kHoldoutMasks; ++r) {
      holdout_samples.push_back(make_sample(images[holdout[h]], geometry.patch_size, alpha,
                                            derive_seed(holdout_seed, h * kHoldoutMasks + r)));
    }
  }

  AttentionModel model =
      AttentionModel::initialize(geometry, config.attention, derive_seed(config.seed, "init"));
  auto holdout_loss = [&] {
    std::vector<double> losses(holdout_samples.size());
    parallel_for(holdout_samples.size(), config.jobs,
                 [&](std::size_t i) { losses[i] = model.loss(holdout_samples[i]); });
    double total = 0.0;
    for (double l : losses) total += l;
    return total / static_cast<double>(losses.size());
  };

  std::vector<EpochRecord> curve;
  EpochRecord initial{0, std::nan(""), holdout_loss()};
  curve.push_back(initial);
  if (on_epoch) on_epoch(initial);
  std::vector<double> best(model.parameters().begin(), model.parameters().end());
  double best_loss = initial.holdout_loss;
  int best_epoch = 0;

  const std::size_t params = model.parameters().size();
  std::vector<double> m1(params, 0.0), m2(params, 0.0);
  const std::size_t batch = static_cast<std::size_t>(std::max(1, config.batch_size));
  const long steps_per_epoch = static_cast<long>((train_ids.size() + batch - 1) / batch);
  const long total_steps = steps_per_epoch * config.epochs;
  const Seed mask_seed = derive_seed(config.seed, "train-masks");
  long step = 0;
  std::uint64_t sample_counter = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> epoch_order = train_ids;
    Rng epoch_rng(derive_seed(derive_seed(config.seed, "epoch-order"), static_cast<std::uint64_t>(epoch)));
    epoch_rng.shuffle(epoch_order);
    double epoch_loss = 0.0;
    std::size_t epoch_samples = 0;

    for (std::size_t start = 0; start < epoch_order.size(); start += batch) {
      const std::size_t count = std::min(batch, epoch_order.size() - start);
      std::vector<TrainingSample> samples(count);
      std::vector<std::vector<double>> grads(count);
      std::vector<double> losses(count);
      const std::uint64_t first = sample_counter;
      sample_counter += count;
      parallel_for(count, config.jobs, [&](std::size_t i) {
        samples[i] = make_sample(images[epoch_order[start + i]], geometry.patch_size, alpha,
                                 derive_seed(mask_seed, first + i));
        grads[i].assign(params, 0.0);
        losses[i] = model.accumulate_gradient(samples[i], 1.0 / static_cast<double>(count), grads[i]);
      });
      // Fixed-order reduction keeps updates independent of thread count.
      std::vector<double> gradient(params, 0.0);
      for (std::size_t i = 0; i < count; ++i) {
        if (!std::isfinite(losses[i])) {
          throw Error(ErrorCode::kDivergedTraining,
                      "non-finite loss at epoch " + std::to_string(epoch));
        }
        epoch_loss += losses[i];
        for (std::size_t j = 0; j < params; ++j) gradient[j] += grads[i][j];
      }
      epoch_samples += count;

      const double lr = cosine_lr(config, step, total_steps);
      auto weights = model.mutable_parameters();
      if (config.optimizer == Optimizer::kAdam) {
        constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
        const double t = static_cast<double>(step + 1);
        const double c1 = 1.0 - std::pow(kBeta1, t);
        const double c2 = 1.0 - std::pow(kBeta2, t);
        for (std::size_t j = 0; j < params; ++j) {
          m1[j] = kBeta1 * m1[j] + (1.0 - kBeta1) * gradient[j];
          m2[j] = kBeta2 * m2[j] + (1.0 - kBeta2) * gradient[j] * gradient[j];
          weights[j] -= lr * (m1[j] / c1) / (std::sqrt(m2[j] / c2) + kEps);
        }
      } else {
        for (std::size_t j = 0; j < params; ++j) {
          m1[j] = config.momentum * m1[j] + gradient[j];
          weights[j] -= lr * m1[j];
        }
      }
      ++step;
    }

    EpochRecord record{epoch, epoch_loss / static_cast<double>(std::max<std::size_t>(1, epoch_samples)),
                       holdout_loss()};
    if (!std::isfinite(record.holdout_loss)) {
      throw Error(ErrorCode::kDivergedTraining, "non-finite held-out loss at epoch " + std::to_string(epoch));
    }
    curve.push_back(record);
    if (on_epoch) on_epoch(record);
    if (record.holdout_loss < best_loss) {
      best_loss = record.holdout_loss;
      best_epoch = epoch;
      best.assign(model.parameters().begin(), model.parameters().end());
    }
  }

  AttentionModel final_model(geometry, config.attention, std::move(best));
  return {ReconstructorModel(std::move(final_model)), std::move(curve), best_epoch};
}

}  // namespace

const char* kind_name(ReconstructorKind kind) {
  switch (kind) {
    case ReconstructorKind::kAttention: return "attention";
    case ReconstructorKind::kPca: return "pca";
    case ReconstructorKind::kPositionalMean: return "positional-mean";
  }
  return "unknown";
}

ReconstructorKind parse_kind(const std::string& name) {
  if (name == "attention") return ReconstructorKind::kAttention;
  if (name == "pca") return ReconstructorKind::kPca;
  if (name == "positional-mean") return ReconstructorKind::kPositionalMean;
  throw Error(ErrorCode::kInvalidArgument, "unknown reconstructor kind '" + name + "'");
}

ReconstructorKind ReconstructorModel::kind() const {
  switch (model_.index()) {
    case 0: return ReconstructorKind::kAttention;
    case 1: return ReconstructorKind::kPca;
    default: return ReconstructorKind::kPositionalMean;
  }
}

const GridGeometry& ReconstructorModel::geometry() const {
  return std::visit(
      [](const auto& m) -> const GridGeometry& {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, AttentionModel>) {
          return m.geometry();
        } else {
          return m.geometry;
        }
      },
      model_);
}

MaskedSample generate_training_sample(const ImageTensor& image, int patch_size, double alpha,
                                      Seed seed) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha must lie in (0, 1)");
  }
  const PatchGrid full = patchify(image, patch_size);
  const int m = full.num_patches();
  if (m < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two patches to mask");
  // round(alpha * M), kept within [1, M - 1] so there is context and a target.
  const int visible = std::clamp(static_cast<int>(std::lround(alpha * m)), 1, m - 1);
  std::vector<int> order(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<int> targets(order.begin() + visible, order.end());
  std::sort(targets.begin(), targets.end());
  return {mask_patches(full, targets), std::move(targets)};
}

TrainResult train(const TrainConfig& config, ReconstructorKind kind,
                  std::span<const ImageTensor> images, const EpochCallback& on_epoch) {
  if (config.epochs < 1) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 1");
  if (!(config.learning_rate > 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning rate must be > 0");
  if (config.k_for_masking < 2) throw Error(ErrorCode::kInvalidK, "k_for_masking must be >= 2");
  const GridGeometry geometry = common_geometry(images, config.patch_size);

  switch (kind) {
    case ReconstructorKind::kAttention:
      return train_attention(config, geometry, images, on_epoch);
    case ReconstructorKind::kPca: {
      ReconstructorModel model(fit_pca(geometry, images, config.pca_rank));
      return {std::move(model), {}, 0};
    }
    case ReconstructorKind::kPositionalMean: {
      ReconstructorModel model(fit_positional_mean(geometry, images));
      return {std::move(model), {}, 0};
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown reconstructor kind");
}

std::map<int, std::vector<double>> reconstruct_patches(const ReconstructorModel& model,
                                                       const PatchGrid& grid,
                                                       std::span<const int> targets) {
  require_same_geometry(model.geometry(), GridGeometry::of(grid), "reconstruct_patches");
  for (int t : targets) {
    if (!grid.is_masked(t)) {
      throw Error(ErrorCode::kTargetNotMasked, "patch " + std::to_string(t) + " is visible");
    }
  }
  Eigen::MatrixXd raw;
  switch (model.kind()) {
    case ReconstructorKind::kAttention:
      raw = model.as<AttentionModel>().predict(grid, targets);
      break;
    case ReconstructorKind::kPca:
      raw = pca_predict(model.as<PcaModel>(), grid, targets);
      break;
    case ReconstructorKind::kPositionalMean: {
      const auto& means = model.as<PositionalMeanModel>().means;
      raw.resize(static_cast<Eigen::Index>(targets.size()), means.cols());
      for (std::size_t t = 0; t < targets.size(); ++t) {
        raw.row(static_cast<Eigen::Index>(t)) = means.row(targets[t]);
      }
      break;
    }
  }
  std::map<int, std::vector<double>> out;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    std::vector<double> patch(static_cast<std::size_t>(raw.cols()));
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      patch[static_cast<std::size_t>(j)] = std::clamp(raw(static_cast<Eigen::Index>(t), j), 0.0, 1.0);
    }
    out.emplace(targets[t], std::move(patch));
  }
  return out;
}

double masked_mse(const ReconstructorModel& model, const MaskedSample& sample,
                  const ImageTensor& image) {
  const PatchGrid full = patchify(image, model.geometry().patch_size);
  const auto predicted = reconstruct_patches(model, sample.grid, sample.targets);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& [index, patch] : predicted) {
    auto truth = full.patch(index);
    for (std::size_t j = 0; j < patch.size(); ++j) {
      const double diff = patch[j] - truth[j];
      total += diff * diff;
    }
    count += patch.size();
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace anosups
