#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

#include "anosups/geometry.hpp"
#include "anosups/patch_grid.hpp"
#include "anosups/rng.hpp"

namespace anosups {

struct AttentionConfig {
  int embed_dim = 64;
  int heads = 4;
  int blocks = 2;
  int mlp_ratio = 2;

  friend bool operator==(const AttentionConfig&, const AttentionConfig&) = default;
};

// Named slice of the flat parameter vector. Matrices are row-major with
// `rows` = input width and `cols` = output width, so a token row t maps to
// t * W. Vectors have rows == 1.
struct ParamTensor {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

// Declared parameter order; also the on-disk order.
class ParamLayout {
 public:
  ParamLayout(const GridGeometry& geometry, const AttentionConfig& config);

  const std::vector<ParamTensor>& tensors() const { return tensors_; }
  const ParamTensor& at(const std::string& name) const;
  std::size_t total() const { return total_; }

 private:
  void add(std::string name, int rows, int cols);

  std::vector<ParamTensor> tensors_;
  std::size_t total_ = 0;
};

// One masked-reconstruction example: `input` is masked on (at least) the
// target patches and `truth` holds the true target patches, row per target.
struct TrainingSample {
  PatchGrid input;
  std::vector<int> targets;
  Eigen::MatrixXd truth;
};

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

// Masked patch reconstructor built from pre-norm transformer blocks.
//
// Every grid cell becomes a token. Visible cells embed their patch with a
// linear map; masked cells use a learned mask token, so the hidden content
// of a masked slot never enters the computation. Positional embeddings are
// added to all tokens. Attention scores carry a fixed distance penalty
// (see distance_bias) so most heads start out local. After the blocks and a final layer norm, a linear
// head maps the tokens of target cells back to P*P*C patch values.
class AttentionModel {
 public:
  AttentionModel(const GridGeometry& geometry, const AttentionConfig& config,
                 std::vector<double> parameters);

  // Random initialization (Xavier-normal linear maps, unit layer norms).
  static AttentionModel initialize(const GridGeometry& geometry, const AttentionConfig& config,
                                   Seed seed);

  const GridGeometry& geometry() const { return geometry_; }
  const AttentionConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  std::span<const double> parameters() const { return parameters_; }
  std::span<double> mutable_parameters() { return parameters_; }

  // Raw (unclamped) predictions, one row per target.
  Eigen::MatrixXd predict(const PatchGrid& grid, std::span<const int> targets) const;

  // Mean squared error over all target entries of the sample.
  double loss(const TrainingSample& sample) const;

  // Adds scale * d(loss)/d(params) into `gradient` and returns the loss.
  double accumulate_gradient(const TrainingSample& sample, double scale,
                             std::span<double> gradient) const;

 private:
  struct Cache;
  Eigen::MatrixXd forward(const PatchGrid& grid, std::span<const int> targets, Cache* cache) const;

  GridGeometry geometry_;
  AttentionConfig config_;
  ParamLayout layout_;
  // Aligned storage keeps Eigen's kernels on the same code path for every
  // model instance, so predictions do not depend on where the heap put us.
  std::vector<double, Eigen::aligned_allocator<double>> parameters_;
  std::vector<Eigen::MatrixXd> distance_bias_;
};

// Fixed additive attention bias, one M x M matrix per head:
// -slope_h * (Euclidean distance between grid cells). Slopes halve from 2
// per head and the last head is unbiased.
std::vector<Eigen::MatrixXd> distance_bias(const GridGeometry& geometry, int heads);

// Gradient of the batch loss (mean of per-sample losses) with respect to
// every parameter, in layout order.
LossAndGradient model_gradient(const AttentionModel& model, std::span<const TrainingSample> batch);

}  // namespace anosups
