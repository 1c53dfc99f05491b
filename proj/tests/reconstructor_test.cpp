#include <fstream>
#include <cmath>

#include <gtest/gtest.h>

#include "anosups/error.hpp"
#include "anosups/model_io.hpp"
#include "anosups/reconstructor.hpp"
#include "anosups/synth.hpp"
#include "test_util.hpp"

namespace anosups {
namespace {

using testing::constant_image;
using testing::random_image;

// Images mean + c_n * pattern: exactly rank one after centring.
std::vector<ImageTensor> rank_one_images(int n, int h, int w, int c) {
  const ImageTensor pattern = random_image(h, w, c, 99);
  std::vector<ImageTensor> out;
  for (int i = 0; i < n; ++i) {
    const double coef = -0.3 + 0.6 * i / std::max(1, n - 1);
    std::vector<double> data(pattern.size());
    for (std::size_t j = 0; j < data.size(); ++j) {
      data[j] = 0.5 + coef * (pattern.data()[j] - 0.5);
    }
    out.emplace_back(h, w, c, std::move(data));
  }
  return out;
}

TEST(TrainingSampleTest, HalfMaskingRatio) {
  const MaskedSample s = generate_training_sample(constant_image(224, 224, 3, 0.5), 16, 0.5, 1);
  EXPECT_EQ(s.grid.visible_indices().size(), 98u);
  EXPECT_EQ(s.targets.size(), 98u);
  EXPECT_EQ(s.grid.masked_indices(), s.targets);
}

TEST(TrainingSampleTest, SingleTargetBoundary) {
  const MaskedSample s = generate_training_sample(constant_image(224, 224, 3, 0.5), 16, 195.0 / 196.0, 1);
  EXPECT_EQ(s.targets.size(), 1u);
}

TEST(TrainingSampleTest, SeedDeterminism) {
  const ImageTensor img = random_image(64, 64, 3, 1);
  const auto a = generate_training_sample(img, 16, 0.5, 7);
  const auto b = generate_training_sample(img, 16, 0.5, 7);
  const auto c = generate_training_sample(img, 16, 0.5, 8);
  EXPECT_EQ(a.targets, b.targets);
  EXPECT_EQ(a.grid, b.grid);
  EXPECT_NE(a.targets, c.targets);
}

TEST(TrainingSampleTest, RejectsBadAlpha) {
  const ImageTensor img = constant_image(32, 32, 1, 0.5);
  EXPECT_THROW(generate_training_sample(img, 16, 0.0, 1), Error);
  EXPECT_THROW(generate_training_sample(img, 16, 1.0, 1), Error);
}

TEST(TrainTest, AttentionLearnsConstantDataset) {
  std::vector<ImageTensor> images(8, constant_image(32, 32, 1, 0.5));
  TrainConfig config;
  config.patch_size = 8;
  config.epochs = 200;
  config.batch_size = 4;
  config.attention = {16, 2, 1, 2};
  config.seed = 5;
  const TrainResult result = train(config, ReconstructorKind::kAttention, images);
  EXPECT_LT(result.curve[static_cast<std::size_t>(result.best_epoch)].holdout_loss, 1e-4);
  for (Seed s = 0; s < 5; ++s) {
    const MaskedSample sample = generate_training_sample(images[0], 8, 0.5, 100 + s);
    EXPECT_LT(masked_mse(result.model, sample, images[0]), 1e-4);
  }
}

TEST(TrainTest, AttentionHoldoutNeverWorseThanInit) {
  TextureParams tex;
  tex.height = tex.width = 32;
  tex.kind = TextureKind::kStripes;
  const auto images = build_normals(tex, 10, 3);
  TrainConfig config;
  config.patch_size = 8;
  config.epochs = 3;
  config.attention = {16, 2, 1, 2};
  std::vector<EpochRecord> seen;
  const TrainResult result =
      train(config, ReconstructorKind::kAttention, images, [&](const EpochRecord& r) { seen.push_back(r); });
  ASSERT_EQ(result.curve.size(), 4u);
  EXPECT_EQ(seen.size(), 4u);
  EXPECT_LE(result.curve[static_cast<std::size_t>(result.best_epoch)].holdout_loss, result.curve[0].holdout_loss);
}

TEST(TrainTest, DeterministicInSeedAndJobs) {
  TextureParams tex;
  tex.height = tex.width = 32;
  const auto images = build_normals(tex, 6, 3);
  TrainConfig config;
  config.patch_size = 8;
  config.epochs = 2;
  config.attention = {16, 2, 1, 2};
  config.jobs = 1;
  const TrainResult a = train(config, ReconstructorKind::kAttention, images);
  config.jobs = 3;
  const TrainResult b = train(config, ReconstructorKind::kAttention, images);
  const auto pa = a.model.as<AttentionModel>().parameters();
  const auto pb = b.model.as<AttentionModel>().parameters();
  ASSERT_EQ(pa.size(), pb.size());
  EXPECT_TRUE(std::equal(pa.begin(), pa.end(), pb.begin()));
}

TEST(TrainTest, GeometryMismatchRejected) {
  std::vector<ImageTensor> images = {constant_image(32, 32, 1, 0.5), constant_image(32, 48, 1, 0.5)};
  TrainConfig config;
  config.patch_size = 16;
  EXPECT_THROW(
      {
        try {
          train(config, ReconstructorKind::kPositionalMean, images);
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), ErrorCode::kGeometryMismatch);
          throw;
        }
      },
      Error);
}

TEST(TrainTest, InvalidConfigRejected) {
  std::vector<ImageTensor> images(2, constant_image(32, 32, 1, 0.5));
  TrainConfig config;
  config.epochs = 0;
  EXPECT_THROW(train(config, ReconstructorKind::kAttention, images), Error);
  config.epochs = 1;
  config.learning_rate = 0.0;
  EXPECT_THROW(train(config, ReconstructorKind::kAttention, images), Error);
  config.learning_rate = 1e-3;
  config.k_for_masking = 1;
  EXPECT_THROW(train(config, ReconstructorKind::kAttention, images), Error);
}

TEST(TrainTest, DivergenceIsReported) {
  TextureParams tex;
  tex.height = tex.width = 32;
  const auto images = build_normals(tex, 4, 3);
  TrainConfig config;
  config.patch_size = 8;
  config.epochs = 3;
  config.optimizer = Optimizer::kSgdMomentum;
  config.learning_rate = 1e30;
  config.attention = {16, 2, 1, 2};
  try {
    train(config, ReconstructorKind::kAttention, images);
    FAIL() << "expected DivergedTraining";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDivergedTraining);
  }
}

TEST(PcaTest, RankOneRecoveryIsExact) {
  const auto images = rank_one_images(12, 32, 32, 3);
  TrainConfig config;
  config.patch_size = 8;
  config.pca_rank = 1;
  const TrainResult result = train(config, ReconstructorKind::kPca, images);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const MaskedSample sample = generate_training_sample(images[i], 8, 0.5, i);
    const auto predicted = reconstruct_patches(result.model, sample.grid, sample.targets);
    const PatchGrid full = patchify(images[i], 8);
    double sq = 0.0;
    for (const auto& [index, values] : predicted) {
      const auto truth = full.patch(index);
      for (std::size_t j = 0; j < values.size(); ++j) sq += (values[j] - truth[j]) * (values[j] - truth[j]);
    }
    EXPECT_LE(std::sqrt(sq), 1e-8) << "image " << i;
  }
}

TEST(PcaTest, BasisIsOrthonormal) {
  TextureParams tex;
  tex.height = tex.width = 32;
  const auto images = build_normals(tex, 20, 4);
  TrainConfig config;
  config.patch_size = 8;
  config.pca_rank = 6;
  const auto model = train(config, ReconstructorKind::kPca, images).model;
  const auto& basis = model.as<PcaModel>().basis;
  const Eigen::MatrixXd gram = basis.transpose() * basis;
  EXPECT_LT((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(PositionalMeanTest, EqualsSampleMean) {
  std::vector<ImageTensor> images;
  for (Seed s = 0; s < 5; ++s) images.push_back(random_image(32, 32, 3, s));
  TrainConfig config;
  config.patch_size = 16;
  const auto model = train(config, ReconstructorKind::kPositionalMean, images).model;
  const auto& means = model.as<PositionalMeanModel>().means;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 768; j += 37) {
      double expected = 0.0;
      for (const auto& img : images) expected += patchify(img, 16).patch(i)[static_cast<std::size_t>(j)];
      expected /= 5.0;
      EXPECT_NEAR(means(i, j), expected, 1e-12);
    }
  }
}

TEST(ReconstructTest, ContractsAndClamping) {
  std::vector<ImageTensor> images = {constant_image(32, 32, 1, 1.0), constant_image(32, 32, 1, 1.0)};
  TrainConfig config;
  config.patch_size = 16;
  const auto model = train(config, ReconstructorKind::kPositionalMean, images).model;
  const PatchGrid grid = mask_patches(patchify(images[0], 16), std::vector<int>{1});
  const auto out = reconstruct_patches(model, grid, std::vector<int>{1});
  ASSERT_EQ(out.size(), 1u);
  for (double v : out.at(1)) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  try {
    reconstruct_patches(model, grid, std::vector<int>{0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTargetNotMasked);
  }
  const PatchGrid other = patchify(constant_image(32, 48, 1, 0.5), 16);
  try {
    reconstruct_patches(model, other, std::vector<int>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kGeometryMismatch);
  }
}

TEST(ReconstructTest, BlindToTargetContent) {
  TextureParams tex;
  tex.height = tex.width = 32;
  const auto images = build_normals(tex, 6, 4);
  TrainConfig config;
  config.patch_size = 8;
  config.epochs = 1;
  config.attention = {16, 2, 1, 2};
  config.pca_rank = 3;
  for (auto kind : {ReconstructorKind::kAttention, ReconstructorKind::kPca}) {
    const auto model = train(config, kind, images).model;
    // Two images that differ only inside patch 5.
    ImageTensor a = images[0];
    ImageTensor b = images[0];
    for (int y = 8; y < 16; ++y) {
      for (int x = 8; x < 16; ++x) b.at(y, x, 0) = 1.0 - b.at(y, x, 0);
    }
    const std::vector<int> targets = {5, 9};
    const auto pa = reconstruct_patches(model, mask_patches(patchify(a, 8), targets), targets);
    const auto pb = reconstruct_patches(model, mask_patches(patchify(b, 8), targets), targets);
    EXPECT_EQ(pa, pb) << kind_name(kind);
  }
}

TEST(ModelIoTest, RoundTripAllKinds) {
  const auto dir = testing::temp_dir("model_io");
  TextureParams tex;
  tex.height = tex.width = 32;
  const auto images = build_normals(tex, 6, 4);
  TrainConfig config;
  config.patch_size = 8;
  config.epochs = 1;
  config.attention = {16, 2, 1, 2};
  config.pca_rank = 3;
  for (auto kind : {ReconstructorKind::kAttention, ReconstructorKind::kPca, ReconstructorKind::kPositionalMean}) {
    const auto model = train(config, kind, images).model;
    const auto path = dir / (std::string(kind_name(kind)) + ".bin");
    save_model(path, model);
    const auto loaded = load_model(path);
    EXPECT_EQ(loaded.kind(), kind);
    EXPECT_EQ(loaded.geometry(), model.geometry());
    const MaskedSample sample = generate_training_sample(images[1], 8, 0.5, 3);
    EXPECT_EQ(reconstruct_patches(loaded, sample.grid, sample.targets),
              reconstruct_patches(model, sample.grid, sample.targets));
    EXPECT_EQ(model_header_json(loaded), model_header_json(model));
    EXPECT_EQ(model_header_json(model)["format"], "ANOSUPS1");
  }
}

TEST(ModelIoTest, RejectsBadMagic) {
  const auto dir = testing::temp_dir("model_io_bad");
  {
    std::ofstream out(dir / "bad.bin", std::ios::binary);
    out << "NOTAMODEL-------";
  }
  try {
    load_model(dir / "bad.bin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
  }
}

}  // namespace
}  // namespace anosups
