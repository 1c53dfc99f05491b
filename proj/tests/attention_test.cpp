#include "anosups/attention.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "anosups/patch_grid.hpp"
#include "anosups/rng.hpp"

namespace anosups {
namespace {

// 4x4 single-channel image, P = 2: M = 4 patches of 4 values.
const GridGeometry kTiny{2, 1, 2, 2};

ImageTensor random_image(int h, int w, int c, Seed seed) {
  Rng rng(seed);
  std::vector<double> data(static_cast<std::size_t>(h) * w * c);
  for (double& v : data) v = rng.uniform();
  return ImageTensor(h, w, c, std::move(data));
}

TrainingSample sample_for(const ImageTensor& image, int patch_size, std::vector<int> targets) {
  const PatchGrid full = patchify(image, patch_size);
  TrainingSample s;
  s.input = mask_patches(full, targets);
  s.truth.resize(static_cast<Eigen::Index>(targets.size()), full.patch_dim());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    auto values = full.patch(targets[t]);
    for (int j = 0; j < full.patch_dim(); ++j) s.truth(static_cast<Eigen::Index>(t), j) = values[j];
  }
  s.targets = std::move(targets);
  return s;
}

AttentionModel perturbed_model(const AttentionConfig& config, Seed seed) {
  // Start from a random init and jitter every parameter so layer-norm gains,
  // biases and the head bias are all generic.
  AttentionModel model = AttentionModel::initialize(kTiny, config, seed);
  Rng rng(seed + 1);
  for (double& p : model.mutable_parameters()) p += rng.normal(0.0, 0.1);
  return model;
}

double batch_loss(const AttentionModel& model, const std::vector<TrainingSample>& batch) {
  double total = 0.0;
  for (const auto& s : batch) total += model.loss(s);
  return total / static_cast<double>(batch.size());
}

TEST(AttentionGradient, MatchesCentralFiniteDifferences) {
  const AttentionConfig config{8, 2, 1, 2};
  AttentionModel model = perturbed_model(config, 11);
  std::vector<TrainingSample> batch;
  batch.push_back(sample_for(random_image(4, 4, 1, 3), 2, {1, 2}));
  batch.push_back(sample_for(random_image(4, 4, 1, 4), 2, {0}));

  const LossAndGradient analytic = model_gradient(model, batch);
  EXPECT_NEAR(analytic.loss, batch_loss(model, batch), 1e-12);

  constexpr double kStep = 1e-5;
  auto params = model.mutable_parameters();
  double worst = 0.0;
  for (std::size_t j = 0; j < params.size(); ++j) {
    const double saved = params[j];
    params[j] = saved + kStep;
    const double up = batch_loss(model, batch);
    params[j] = saved - kStep;
    const double down = batch_loss(model, batch);
    params[j] = saved;
    const double numeric = (up - down) / (2.0 * kStep);
    const double a = analytic.gradient[j];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
    worst = std::max(worst, rel);
    ASSERT_LT(rel, 1e-4) << "parameter " << j << " analytic " << a << " numeric " << numeric;
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(AttentionGradient, ZeroResidualGivesZeroHeadBiasGradient) {
  const AttentionConfig config{8, 2, 1, 2};
  AttentionModel model = perturbed_model(config, 5);
  TrainingSample s = sample_for(random_image(4, 4, 1, 9), 2, {3});
  s.truth = model.predict(s.input, s.targets);
  const LossAndGradient g = model_gradient(model, std::span<const TrainingSample>(&s, 1));
  EXPECT_EQ(g.loss, 0.0);
  const auto& bias = model.layout().at("head.bias");
  for (std::size_t j = 0; j < bias.size(); ++j) EXPECT_EQ(g.gradient[bias.offset + j], 0.0);
}

TEST(AttentionGradient, DoublingResidualDoublesHeadGradient) {
  const AttentionConfig config{8, 2, 1, 2};
  AttentionModel model = perturbed_model(config, 6);
  TrainingSample s = sample_for(random_image(4, 4, 1, 10), 2, {0, 3});
  const Eigen::MatrixXd pred = model.predict(s.input, s.targets);
  TrainingSample doubled = s;
  doubled.truth = pred - 2.0 * (pred - s.truth);
  const auto g1 = model_gradient(model, std::span<const TrainingSample>(&s, 1));
  const auto g2 = model_gradient(model, std::span<const TrainingSample>(&doubled, 1));
  for (const char* name : {"head.weight", "head.bias"}) {
    const auto& t = model.layout().at(name);
    for (std::size_t j = 0; j < t.size(); ++j) {
      EXPECT_NEAR(g2.gradient[t.offset + j], 2.0 * g1.gradient[t.offset + j], 1e-12);
    }
  }
}

TEST(AttentionModelTest, MaskedContentDoesNotReachPrediction) {
  const AttentionConfig config{8, 2, 2, 2};
  AttentionModel model = perturbed_model(config, 7);
  ImageTensor a = random_image(4, 4, 1, 1);
  ImageTensor b = a;
  // Change only pixels of patch 2 (rows 2-3, cols 0-1).
  for (int y = 2; y < 4; ++y) {
    for (int x = 0; x < 2; ++x) b.at(y, x, 0) = 1.0 - a.at(y, x, 0);
  }
  const std::vector<int> targets{2};
  const Eigen::MatrixXd pa = model.predict(mask_patches(patchify(a, 2), targets), targets);
  const Eigen::MatrixXd pb = model.predict(mask_patches(patchify(b, 2), targets), targets);
  EXPECT_EQ(pa, pb);
}

TEST(AttentionModelTest, LayoutMatchesConfiguration) {
  const AttentionConfig config{8, 2, 1, 2};
  ParamLayout layout(kTiny, config);
  EXPECT_EQ(layout.at("pos_embed").rows, 4);
  EXPECT_EQ(layout.at("patch_embed.weight").rows, 4);
  EXPECT_EQ(layout.at("blocks.0.mlp.fc1.weight").cols, 16);
  EXPECT_THROW(ParamLayout(kTiny, AttentionConfig{9, 2, 1, 2}), std::exception);
}

}  // namespace
}  // namespace anosups
