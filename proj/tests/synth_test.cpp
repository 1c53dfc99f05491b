#include <cmath>

#include <gtest/gtest.h>

#include "anosups/error.hpp"
#include "anosups/image.hpp"
#include "anosups/patch_grid.hpp"
#include "anosups/synth.hpp"

namespace anosups {
namespace {

double mean_of(const ImageTensor& image) {
  double sum = 0.0;
  for (double v : image.data()) sum += v;
  return sum / static_cast<double>(image.size());
}

std::size_t disk_area_by_enumeration(double cx, double cy, double r, int h, int w) {
  std::size_t n = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      if (dx * dx + dy * dy <= r * r) ++n;
    }
  }
  return n;
}

TEST(TextureTest, DeterministicWithoutJitter) {
  TextureParams tex;
  tex.jitter = 0.0;
  tex.noise = 0.0;
  tex.shading = 0.0;
  EXPECT_EQ(generate_texture(tex, 1), generate_texture(tex, 1));
  EXPECT_EQ(generate_texture(tex, 1), generate_texture(tex, 2));
  tex.jitter = 0.05;
  tex.noise = 0.02;
  EXPECT_EQ(generate_texture(tex, 3), generate_texture(tex, 3));
}

TEST(TextureTest, GridLinesDarkerByContrast) {
  TextureParams tex;
  tex.kind = TextureKind::kGrid;
  tex.jitter = 0.0;
  tex.noise = 0.0;
  tex.shading = 0.0;
  tex.contrast = 0.2;
  const ImageTensor image = generate_texture(tex, 0);
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(image.at(4, 4, c) - image.at(0, 4, c), 0.2, 1.0 / 255.0 + 1e-12);
    EXPECT_NEAR(image.at(4, 4, c) - image.at(4, 1, c), 0.2, 1.0 / 255.0 + 1e-12);
  }
}

TEST(TextureTest, QuantizedToEightBits) {
  const ImageTensor image = generate_texture(TextureParams{}, 5);
  for (double v : image.data()) {
    EXPECT_NEAR(v * 255.0, std::round(v * 255.0), 1e-9);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(TextureTest, JitterStatisticsOverSeeds) {
  for (auto kind : {TextureKind::kGrid, TextureKind::kStripes, TextureKind::kBlotch}) {
    TextureParams tex;
    tex.kind = kind;
    tex.shading = 0.0;
    tex.height = tex.width = 64;
    TextureParams flat = tex;
    flat.jitter = 0.0;
    flat.noise = 0.0;
    const double reference = mean_of(generate_texture(flat, 0));
    const ImageTensor first = generate_texture(tex, 0);
    for (Seed seed = 1; seed <= 100; ++seed) {
      const ImageTensor image = generate_texture(tex, seed);
      double mad = 0.0;
      for (std::size_t i = 0; i < image.size(); ++i) mad += std::abs(image.data()[i] - first.data()[i]);
      EXPECT_GT(mad / static_cast<double>(image.size()), 0.0);
      // Grid phase shifts move line pixels but not their count; quantization
      // and noise add a small slack.
      EXPECT_LE(std::abs(mean_of(image) - reference), tex.jitter + 0.01) << texture_name(kind);
    }
  }
}

TEST(TextureTest, Names) {
  EXPECT_EQ(parse_texture("grid"), TextureKind::kGrid);
  EXPECT_EQ(parse_texture(texture_name(TextureKind::kBlotch)), TextureKind::kBlotch);
  EXPECT_THROW(parse_texture("wood"), Error);
  EXPECT_EQ(parse_anomaly("hole"), AnomalyKind::kHole);
  EXPECT_THROW(parse_anomaly("scratch"), Error);
}

TEST(InjectTest, ZeroLengthLineRejected) {
  const ImageTensor image = generate_texture(TextureParams{}, 1);
  AnomalySpec spec;
  spec.kind = AnomalyKind::kLine;
  spec.from = spec.to = {50, 50};
  spec.thickness = 2;
  try {
    inject(image, spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOutOfBounds);
  }
}

TEST(InjectTest, OutOfBoundsRejected) {
  const ImageTensor image = generate_texture(TextureParams{}, 1);
  AnomalySpec disk;
  disk.kind = AnomalyKind::kColor;
  disk.centers = {{5, 100}};
  disk.radius = 8;
  EXPECT_THROW(inject(image, disk), Error);
  disk.centers = {{100, 100}};
  disk.radius = 0.5;
  EXPECT_THROW(inject(image, disk), Error);
}

TEST(InjectTest, ColorDiskAreaMatchesEnumeration) {
  const ImageTensor image = generate_texture(TextureParams{}, 1);
  AnomalySpec spec;
  spec.kind = AnomalyKind::kColor;
  spec.centers = {{8 * 16 + 8, 5 * 16 + 8}};
  spec.radius = 8;
  spec.fill = {0.0, 0.0, 1.0};
  const LabeledImage out = inject(image, spec);
  EXPECT_EQ(out.gt_mask.area(), disk_area_by_enumeration(136, 88, 8, 224, 224));
  EXPECT_EQ(out.gt_mask.area(), 208u);
}

TEST(InjectTest, HolesAreUnionOfDisks) {
  const ImageTensor image = generate_texture(TextureParams{}, 2);
  AnomalySpec spec;
  spec.kind = AnomalyKind::kHole;
  spec.centers = {{40, 40}, {100, 60}, {160, 180}};
  spec.radius = 6;
  const LabeledImage out = inject(image, spec);
  std::size_t expected = 0;
  for (const auto& c : spec.centers) expected += disk_area_by_enumeration(c.x, c.y, 6, 224, 224);
  EXPECT_EQ(out.gt_mask.area(), expected);
  for (int y = 0; y < 224; ++y) {
    for (int x = 0; x < 224; ++x) {
      if (out.gt_mask.at(y, x)) EXPECT_EQ(out.image.at(y, x, 0), 0.0);
    }
  }
}

TEST(InjectTest, LowContrastFillRejected) {
  TextureParams tex;
  tex.jitter = tex.noise = tex.shading = tex.contrast = 0.0;
  const ImageTensor image = generate_texture(tex, 0);
  AnomalySpec spec;
  spec.kind = AnomalyKind::kColor;
  spec.centers = {{100, 100}};
  spec.radius = 5;
  spec.fill = {0.65, 0.6, 0.5};
  try {
    inject(image, spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}

class SuiteTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SuiteConfig config;
    config.seed = 7;
    suite_ = build_suite(config);
  }
  static inline std::vector<LabeledImage> suite_;
};

TEST_F(SuiteTest, HalfAbnormalWithEvenMix) {
  ASSERT_EQ(suite_.size(), 60u);
  int abnormal = 0;
  std::array<int, 3> kinds{};
  for (const auto& item : suite_) {
    if (!item.abnormal()) continue;
    ++abnormal;
    ++kinds[static_cast<std::size_t>(item.specs[0].kind)];
  }
  EXPECT_EQ(abnormal, 30);
  EXPECT_EQ(kinds, (std::array<int, 3>{10, 10, 10}));
}

TEST_F(SuiteTest, GroundTruthIsExactlyTheChangedPixels) {
  SuiteConfig config;
  config.seed = 7;
  const Seed texture_seed = derive_seed(config.seed, "suite-texture");
  for (std::size_t i = 0; i < suite_.size(); ++i) {
    const auto& item = suite_[i];
    const ImageTensor base = generate_texture(config.texture, derive_seed(texture_seed, i));
    BinaryMask changed(base.height(), base.width());
    for (int y = 0; y < base.height(); ++y) {
      for (int x = 0; x < base.width(); ++x) {
        for (int c = 0; c < base.channels(); ++c) {
          if (base.at(y, x, c) != item.image.at(y, x, c)) changed.at(y, x) = 1;
        }
      }
    }
    EXPECT_EQ(changed, item.gt_mask) << item.name;
    if (!item.abnormal()) EXPECT_EQ(item.gt_mask.area(), 0u);
  }
}

TEST_F(SuiteTest, MultiSizeCoverage) {
  bool sub_patch = false, multi_patch = false;
  for (const auto& item : suite_) {
    if (!item.abnormal()) continue;
    const auto patches = mask_to_patches(item.gt_mask, 16);
    if (patches.size() == 1) sub_patch = true;
    if (patches.size() >= 4) multi_patch = true;
  }
  EXPECT_TRUE(sub_patch);
  EXPECT_TRUE(multi_patch);
}

TEST_F(SuiteTest, Deterministic) {
  SuiteConfig config;
  config.seed = 7;
  const auto again = build_suite(config);
  ASSERT_EQ(again.size(), suite_.size());
  for (std::size_t i = 0; i < again.size(); ++i) {
    EXPECT_EQ(again[i].name, suite_[i].name);
    EXPECT_EQ(image_hash(again[i].image), image_hash(suite_[i].image));
    EXPECT_EQ(mask_hash(again[i].gt_mask), mask_hash(suite_[i].gt_mask));
  }
  config.seed = 8;
  EXPECT_NE(image_hash(build_suite(config)[1].image), image_hash(suite_[1].image));
}

TEST(SuiteConfigTest, InvalidArguments) {
  SuiteConfig config;
  config.n_images = 0;
  EXPECT_THROW(build_suite(config), Error);
  config.n_images = 10;
  config.size_min = 0;
  EXPECT_THROW(build_suite(config), Error);
  config.size_min = 10;
  config.size_max = 5;
  EXPECT_THROW(build_suite(config), Error);
  config.size_max = 64;
  config.mix = {0, 0, 0};
  EXPECT_THROW(build_suite(config), Error);
}

}  // namespace
}  // namespace anosups
