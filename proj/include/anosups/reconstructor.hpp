#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "anosups/attention.hpp"
#include "anosups/geometry.hpp"
#include "anosups/image.hpp"
#include "anosups/patch_grid.hpp"
#include "anosups/rng.hpp"

namespace anosups {

enum class ReconstructorKind { kAttention, kPca, kPositionalMean };

const char* kind_name(ReconstructorKind kind);
ReconstructorKind parse_kind(const std::string& name);

// Gappy PCA over whole images: a mean image plus an orthonormal basis of the
// top principal directions. Masked patches are predicted by fitting basis
// coefficients to the visible entries only.
struct PcaModel {
  GridGeometry geometry;
  int rank = 0;
  Eigen::VectorXd mean;   // M * patch_dim, patch-major
  Eigen::MatrixXd basis;  // (M * patch_dim) x rank, orthonormal columns
};

// Predicts the training-set mean patch at each position, ignoring context.
struct PositionalMeanModel {
  GridGeometry geometry;
  Eigen::MatrixXd means;  // M x patch_dim
};

using ModelVariant = std::variant<AttentionModel, PcaModel, PositionalMeanModel>;

class ReconstructorModel {
 public:
  explicit ReconstructorModel(ModelVariant model) : model_(std::move(model)) {}

  ReconstructorKind kind() const;
  const GridGeometry& geometry() const;
  const ModelVariant& variant() const { return model_; }

  template <typename T>
  const T& as() const {
    return std::get<T>(model_);
  }

 private:
  ModelVariant model_;
};

enum class Optimizer { kSgdMomentum, kAdam };

struct TrainConfig {
  int patch_size = 16;
  int k_for_masking = 2;  // visible fraction alpha = 1 - 1/K
  int epochs = 60;
  int batch_size = 8;
  double learning_rate = 1e-2;
  Optimizer optimizer = Optimizer::kAdam;
  double momentum = 0.9;
  bool cosine_decay = true;
  // Fraction of train images held out to score checkpoints (at least one).
  double holdout_fraction = 0.1;
  Seed seed = 0;
  int jobs = 1;
  AttentionConfig attention;
  int pca_rank = 16;

  double alpha() const { return 1.0 - 1.0 / k_for_masking; }
};

struct EpochRecord {
  int epoch = 0;  // 0 = before training
  double train_loss = 0.0;
  double holdout_loss = 0.0;
};

struct TrainResult {
  ReconstructorModel model;
  std::vector<EpochRecord> curve;
  int best_epoch = 0;
};

// Patch grid with round(alpha * M) patches visible, chosen uniformly at
// random; every other patch is masked and listed (ascending) as a target.
struct MaskedSample {
  PatchGrid grid;
  std::vector<int> targets;
};
MaskedSample generate_training_sample(const ImageTensor& image, int patch_size, double alpha,
                                      Seed seed);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Fits a reconstructor. For the attention kind the returned parameters are
// the checkpoint with the lowest held-out masked MSE, epoch 0 included, so
// the result is never worse than initialization on the held-out slice.
// Throws kGeometryMismatch, kDivergedTraining.
TrainResult train(const TrainConfig& config, ReconstructorKind kind,
                  std::span<const ImageTensor> images, const EpochCallback& on_epoch = {});

// Predicted patch per target, clamped to [0, 1]. Uses only visible patches,
// positions, and parameters. Throws kGeometryMismatch, kTargetNotMasked.
std::map<int, std::vector<double>> reconstruct_patches(const ReconstructorModel& model,
                                                       const PatchGrid& grid,
                                                       std::span<const int> targets);

// Mean squared error over the masked entries of a sample; used for
// held-out scoring.
double masked_mse(const ReconstructorModel& model, const MaskedSample& sample,
                  const ImageTensor& image);

}  // namespace anosups
