#include <algorithm>
#include <cmath>
#include <memory>

#include <gtest/gtest.h>

#include "anosups/detector.hpp"
#include "anosups/error.hpp"
#include "anosups/synth.hpp"
#include "test_util.hpp"

namespace anosups {
namespace {

using testing::constant_image;

// Paints every pixel of the listed patches with a saturated red.
ImageTensor paint_patches(ImageTensor image, int p, std::span<const int> patches) {
  const int cols = image.width() / p;
  for (int index : patches) {
    const int y0 = (index / cols) * p, x0 = (index % cols) * p;
    for (int y = y0; y < y0 + p; ++y) {
      for (int x = x0; x < x0 + p; ++x) {
        image.at(y, x, 0) = 0.95;
        image.at(y, x, 1) = 0.05;
        image.at(y, x, 2) = 0.05;
      }
    }
  }
  return image;
}

TEST(PatchErrorTest, Examples) {
  const std::vector<double> a(768, 0.5), b(768, 0.6);
  EXPECT_EQ(patch_error(a, a), 0.0);
  double oracle = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) oracle += (b[j] - a[j]) * (b[j] - a[j]);
  oracle = std::sqrt(oracle);
  EXPECT_NEAR(patch_error(a, b), oracle, 1e-12);
  EXPECT_NEAR(patch_error(a, b), 2.77128, 1e-5);
  EXPECT_EQ(patch_error(a, b), patch_error(b, a));
  const std::vector<double> c(767, 0.0);
  try {
    patch_error(a, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(ThresholdTest, StrictInequality) {
  const std::vector<double> e1 = {0.1, 5.0, 0.2};
  EXPECT_EQ(threshold_suspects(e1, 1.0), (std::vector<int>{1}));
  const std::vector<double> ties = {1.0, 1.0, 2.0};
  EXPECT_EQ(threshold_suspects(ties, 1.0), (std::vector<int>{2}));
}

TEST(ThresholdTest, MonotoneInThreshold) {
  Rng rng(4);
  std::vector<double> e1(196);
  for (double& v : e1) v = rng.uniform(0.0, 2.0);
  std::vector<int> prev = threshold_suspects(e1, 2.0);
  for (double q = 1.99; q >= 0.0; q -= 0.01) {
    const std::vector<int> s = threshold_suspects(e1, q);
    EXPECT_TRUE(std::includes(s.begin(), s.end(), prev.begin(), prev.end()));
    prev = s;
  }
}

TEST(WarnScopeTest, Ratios) {
  EXPECT_FALSE(warn_scope(10, 196).has_value());
  EXPECT_TRUE(warn_scope(120, 196).has_value());
  EXPECT_FALSE(warn_scope(98, 196).has_value());
  EXPECT_TRUE(warn_scope(70, 196, 0.3).has_value());
}

TEST(ModeTest, Names) {
  EXPECT_EQ(parse_mode("two-step"), DetectionMode::kTwoStep);
  EXPECT_EQ(parse_mode("one-step"), DetectionMode::kOneStep);
  EXPECT_STREQ(mode_name(DetectionMode::kOneStep), "one-step");
  EXPECT_THROW(parse_mode("three-step"), Error);
}

class DetectorTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    TextureParams tex;
    tex.height = tex.width = 128;
    texture_ = tex;
    TrainConfig config;
    config.patch_size = 16;
    config.pca_rank = 8;
    model_ = std::make_unique<ReconstructorModel>(
        train(config, ReconstructorKind::kPca, build_normals(tex, 60, 1)).model);
    const auto calib = build_normals(tex, 10, 2);
    std::vector<Seed> seeds;
    for (int i = 0; i < 10; ++i) seeds.push_back(50 + i);
    profile_ = CalibrationProfile::build(collect_errors(*model_, calib, 2, seeds), 0.02, 0.0, 2, 0);
  }
  static void TearDownTestSuite() { model_.reset(); }

  static ImageTensor fresh(Seed seed) { return generate_texture(texture_, seed); }

  static inline TextureParams texture_;
  static inline std::unique_ptr<ReconstructorModel> model_;
  static inline CalibrationProfile profile_;
};

TEST_F(DetectorTest, BlobPatchesAreSuspected) {
  const std::vector<int> blob = {45, 46};
  for (Seed seed = 0; seed < 20; ++seed) {
    const ImageTensor image = paint_patches(fresh(1000 + seed), 16, std::vector<int>{18, 19});
    const Step1Result r = step1_identify_suspects(*model_, image, 2, profile_.q1, seed);
    EXPECT_TRUE(std::binary_search(r.suspected.begin(), r.suspected.end(), 18));
    EXPECT_TRUE(std::binary_search(r.suspected.begin(), r.suspected.end(), 19));
  }
  // Same oracle on the 14 x 14 grid used elsewhere.
  TextureParams tex = texture_;
  tex.height = tex.width = 224;
  TrainConfig config;
  config.pca_rank = 8;
  const auto model = train(config, ReconstructorKind::kPca, build_normals(tex, 30, 3)).model;
  const std::vector<Seed> seeds = {1, 2, 3, 4, 5};
  const double q1 =
      CalibrationProfile::build(collect_errors(model, build_normals(tex, 5, 4), 2, seeds), 0.0,
                                0.0, 2, 0)
          .q1;
  const ImageTensor image = paint_patches(generate_texture(tex, 77), 16, blob);
  const Step1Result r = step1_identify_suspects(model, image, 2, q1, 5);
  EXPECT_TRUE(std::includes(r.suspected.begin(), r.suspected.end(), blob.begin(), blob.end()));
}

TEST_F(DetectorTest, NormalImagesRarelyFlagged) {
  const CalibrationProfile strict = CalibrationProfile::build(profile_.errors, 0.0, 0.0, 2, 0);
  int flagged_images = 0;
  for (Seed seed = 0; seed < 20; ++seed) {
    if (!step1_identify_suspects(*model_, fresh(2000 + seed), 2, strict.q1, seed).suspected.empty()) {
      ++flagged_images;
    }
  }
  std::printf("normal images with any suspect at q1 = max: %d / 20\n", flagged_images);
  EXPECT_LE(flagged_images, 10);
}

TEST_F(DetectorTest, StepTwoRanksAnomalyAboveNormal) {
  Rng rng(99);
  const int m = model_->geometry().num_patches();
  int wins = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const int anomaly = static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));
    int normal = anomaly;
    while (normal == anomaly) normal = static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));
    const ImageTensor image = paint_patches(fresh(3000 + t), 16, std::vector<int>{anomaly});
    std::vector<int> suspected = {std::min(normal, anomaly), std::max(normal, anomaly)};
    const Step2Result r = step2_confirm(*model_, image, suspected, 0.0);
    const double e_normal = r.e2[normal < anomaly ? 0 : 1];
    const double e_anomaly = r.e2[normal < anomaly ? 1 : 0];
    if (e_normal < e_anomaly) ++wins;
  }
  EXPECT_GE(wins, 95);
}

TEST_F(DetectorTest, StepTwoEdgeCases) {
  const ImageTensor image = fresh(5);
  const Step2Result empty = step2_confirm(*model_, image, std::vector<int>{}, profile_.q2);
  EXPECT_TRUE(empty.e2.empty());
  EXPECT_TRUE(empty.anomalies.empty());
  const int m = model_->geometry().num_patches();
  std::vector<int> all(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) all[static_cast<std::size_t>(i)] = i;
  try {
    step2_confirm(*model_, image, all, profile_.q2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAllPatchesSuspected);
  }
}

TEST_F(DetectorTest, StepTwoPurity) {
  Rng rng(12);
  const int m = model_->geometry().num_patches();
  const PatchGrid original = patchify(fresh(6), 16);
  for (int t = 0; t < 50; ++t) {
    std::vector<int> suspected;
    for (int i = 0; i < m; ++i) {
      if (rng.uniform() < 0.3) suspected.push_back(i);
    }
    if (suspected.empty() || static_cast<int>(suspected.size()) == m) continue;
    const Step2Result r = step2_confirm(*model_, fresh(6), suspected, profile_.q2);
    EXPECT_EQ(r.input.masked_indices(), suspected);
    for (int v : r.input.visible_indices()) {
      EXPECT_FALSE(std::binary_search(suspected.begin(), suspected.end(), v));
      EXPECT_TRUE(std::ranges::equal(r.input.patch(v), original.patch(v)));
    }
    EXPECT_EQ(r.e2.size(), suspected.size());
    EXPECT_TRUE(std::includes(suspected.begin(), suspected.end(), r.anomalies.begin(), r.anomalies.end()));
  }
}

TEST_F(DetectorTest, ReportInvariants) {
  const int p = 16;
  for (Seed seed = 0; seed < 10; ++seed) {
    const ImageTensor image = paint_patches(fresh(4000 + seed), p, std::vector<int>{9, 10, 17});
    for (auto mode : {DetectionMode::kTwoStep, DetectionMode::kOneStep}) {
      DetectOptions options;
      options.mode = mode;
      const DetectionReport r = detect(*model_, profile_, image, seed, options);
      EXPECT_EQ(r.suspected, threshold_suspects(r.e1, r.q1));
      EXPECT_TRUE(std::includes(r.suspected.begin(), r.suspected.end(), r.anomalies.begin(),
                                r.anomalies.end()));
      EXPECT_EQ(r.pixel_mask.area(), r.anomalies.size() * p * p);
      EXPECT_EQ(r.e1.size(), 64u);
      if (mode == DetectionMode::kOneStep) {
        EXPECT_TRUE(r.e2.empty());
        EXPECT_EQ(r.anomalies, r.suspected);
      } else {
        EXPECT_EQ(r.e2.size(), r.suspected.size());
      }
    }
  }
}

TEST_F(DetectorTest, ParallelStepOneMatchesSequential) {
  for (int k : {2, 3, 4, 8}) {
    const ImageTensor image = fresh(static_cast<Seed>(k));
    const Step1Result a = step1_identify_suspects(*model_, image, k, profile_.q1, 7, false);
    const Step1Result b = step1_identify_suspects(*model_, image, k, profile_.q1, 7, true);
    EXPECT_EQ(a.e1, b.e1);
    EXPECT_EQ(a.suspected, b.suspected);
  }
}

TEST_F(DetectorTest, Deterministic) {
  const ImageTensor image = paint_patches(fresh(8), 16, std::vector<int>{30});
  const DetectionReport a = detect(*model_, profile_, image, 42);
  const DetectionReport b = detect(*model_, profile_, image, 42);
  EXPECT_EQ(a.e1, b.e1);
  EXPECT_EQ(a.e2, b.e2);
  EXPECT_EQ(a.anomalies, b.anomalies);
  EXPECT_EQ(a.pixel_mask, b.pixel_mask);
}

TEST_F(DetectorTest, AllSuspectedReportedWhenNotAnError) {
  CalibrationProfile zero = profile_;
  zero.q1 = -1.0;
  const ImageTensor image = fresh(9);
  EXPECT_THROW(detect(*model_, zero, image, 1), Error);
  DetectOptions options;
  options.all_suspected_is_error = false;
  const DetectionReport r = detect(*model_, zero, image, 1, options);
  EXPECT_EQ(r.status, "AllPatchesSuspected");
  EXPECT_EQ(r.anomalies.size(), 64u);
  EXPECT_TRUE(r.warning.has_value());
}

TEST_F(DetectorTest, GeometryMismatch) {
  try {
    detect(*model_, profile_, constant_image(64, 128, 3, 0.5), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kGeometryMismatch);
  }
}

TEST(PositionalMeanDetectTest, ConstantShiftOracle) {
  // A reconstructor that always predicts 0.5 sees a 0.6 patch at distance
  // sqrt(768 * 0.01).
  const std::vector<ImageTensor> train_images(2, constant_image(64, 64, 3, 0.5));
  TrainConfig config;
  const auto model = train(config, ReconstructorKind::kPositionalMean, train_images).model;
  ImageTensor image = constant_image(64, 64, 3, 0.5);
  for (int y = 16; y < 32; ++y) {
    for (int x = 0; x < 16; ++x) {
      for (int c = 0; c < 3; ++c) image.at(y, x, c) = 0.6;
    }
  }
  const Step1Result r = step1_identify_suspects(model, image, 2, 1.0, 3);
  EXPECT_NEAR(r.e1[4], std::sqrt(7.68), 1e-9);
  EXPECT_EQ(r.suspected, (std::vector<int>{4}));
}

}  // namespace
}  // namespace anosups
