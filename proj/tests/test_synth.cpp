// SPDX-License-Identifier: Apache-2.0
#include "wireseg/synth/scene.hpp"

#include <gtest/gtest.h>

#include <filesystem>

#include "testutil.hpp"
#include "wireseg/io/dataset.hpp"
#include "wireseg/synth/background.hpp"
#include "wireseg/synth/composite.hpp"

using namespace wireseg;
using wireseg::test::component_count_8;

namespace {
SceneParams small_scene(uint64_t seed) {
  SceneParams p;
  p.height = 96;
  p.width = 96;
  p.control_point_count = 5;
  p.wire_width_px = 2.0;
  p.wire_intensity = 40.0;
  p.background_intensity = 200.0;
  p.seed = seed;
  return p;
}
}  // namespace

TEST(Scene, DeterministicUnderFixedSeed) {
  Sample a = generate_guidewire_scene(small_scene(7));
  Sample b = generate_guidewire_scene(small_scene(7));
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(*a.mask, *b.mask);
}

TEST(Scene, RejectsTinyDimensionsAndBadParams) {
  SceneParams p = small_scene(1);
  p.height = 32;
  EXPECT_THROW(generate_guidewire_scene(p), std::invalid_argument);
  p = small_scene(1);
  p.control_point_count = 3;
  EXPECT_THROW(generate_guidewire_scene(p), std::invalid_argument);
  p = small_scene(1);
  p.background_intensity = p.wire_intensity;
  EXPECT_THROW(generate_guidewire_scene(p), std::invalid_argument);
}

TEST(Scene, StraightHorizontalStrokeMatchesCurveLength) {
  // 3 collinear control points, width 1, on 64x64: foreground pixel count
  // equals curve length +-1 (brute-force rasterization oracle).
  std::vector<Point2> control{{32.0, 10.0}, {32.0, 30.0}, {32.0, 50.0}};
  Sample s = stroke_curve(sample_spline(control), 64, 64, 1.0, 40.0, 200.0);
  const double len = polyline_length(sample_spline(control));
  const auto fg = s.mask->foreground_count();
  EXPECT_NEAR(static_cast<double>(fg), len, 1.0 + 1e-9);
  // all foreground confined to row 32
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c)
      if (s.mask->at(r, c)) EXPECT_EQ(r, 32);
}

TEST(Scene, MaskIsSingleEightConnectedComponent) {
  for (uint64_t seed : {1ull, 2ull, 3ull, 11ull, 99ull, 1234ull}) {
    Sample s = generate_guidewire_scene(small_scene(seed));
    EXPECT_GT(s.mask->foreground_count(), 0u) << "seed " << seed;
    EXPECT_EQ(component_count_8(*s.mask), 1) << "seed " << seed;
  }
}

TEST(Scene, AntiAliasingTouchesImageOnlyMaskStaysBinary) {
  Sample s = generate_guidewire_scene(small_scene(5));
  check_binary(*s.mask);
  // off-wire pixels are exactly background
  int pure_bg = 0;
  for (int r = 0; r < s.image.h; ++r)
    for (int c = 0; c < s.image.w; ++c)
      if (!s.mask->at(r, c) && s.image.at(r, c) == 200.0f) ++pure_bg;
  EXPECT_GT(pure_bg, s.image.h * s.image.w / 2);
}

TEST(Pool, IdentityCropReturnsWholeImage) {
  Image img(96, 96);
  for (size_t i = 0; i < img.px.size(); ++i) img.px[i] = static_cast<float>(i % 251);
  BackgroundPool pool = build_background_pool({img}, {96, 96}, 1, 42);
  ASSERT_EQ(pool.size(), 1u);
  EXPECT_EQ(pool.patches[0], img);
}

TEST(Pool, PatchesAreWindowsOfInputs) {
  Rng rng(9);
  std::vector<Image> imgs;
  for (int k = 0; k < 3; ++k) {
    Image img(80, 80);
    for (auto& px : img.px) px = static_cast<float>(rng.range_int(0, 255));
    imgs.push_back(std::move(img));
  }
  BackgroundPool pool = build_background_pool(imgs, {32, 32}, 10, 7);
  ASSERT_EQ(pool.size(), 10u);
  // exhaustive window match oracle
  for (const auto& patch : pool.patches) {
    bool found = false;
    for (const auto& img : imgs) {
      for (int r0 = 0; r0 + 32 <= img.h && !found; ++r0)
        for (int c0 = 0; c0 + 32 <= img.w && !found; ++c0) {
          bool match = true;
          for (int r = 0; r < 32 && match; ++r)
            for (int c = 0; c < 32 && match; ++c)
              match = patch.at(r, c) == img.at(r0 + r, c0 + c);
          found = match;
        }
      if (found) break;
    }
    EXPECT_TRUE(found);
  }
}

TEST(Pool, RejectsOversizePatchAndBadK) {
  Image img(64, 64);
  EXPECT_THROW(build_background_pool({img}, {128, 128}, 1, 0), std::invalid_argument);
  EXPECT_THROW(build_background_pool({img}, {32, 32}, 0, 0), std::invalid_argument);
}

TEST(Composite, AllZeroMaskSigmaZeroYieldsBackgroundExactly) {
  Sample src;
  src.image = Image(64, 64, 120.0f);
  src.mask = Mask(64, 64, 0);
  Image bg(64, 64);
  for (size_t i = 0; i < bg.px.size(); ++i) bg.px[i] = static_cast<float>(i % 256);
  NoiseParams noise;
  Sample out = composite(src, bg, noise, 0);
  EXPECT_EQ(out.image, bg);
  EXPECT_EQ(out.tag, DomainTag::synthesized);
}

TEST(Composite, EquationHoldsPixelwiseAtSigmaZero) {
  Sample src = generate_guidewire_scene(small_scene(3));
  Rng rng(4);
  Image bg(96, 96);
  for (auto& px : bg.px) px = static_cast<float>(rng.range_int(0, 255));
  NoiseParams noise;
  Sample out = composite(src, bg, noise, 0);
  for (int r = 0; r < 96; ++r)
    for (int c = 0; c < 96; ++c) {
      if (src.mask->at(r, c))
        EXPECT_EQ(out.image.at(r, c), src.image.at(r, c));
      else
        EXPECT_EQ(out.image.at(r, c), bg.at(r, c));
    }
  EXPECT_EQ(*out.mask, *src.mask);
}

TEST(Composite, NoiseMeanAbsoluteDeviationNearExpected) {
  // E|N(0,5)| = 5*sqrt(2/pi) ~= 3.99; wide tolerance for clamping.
  Sample src;
  src.image = Image(256, 256, 60.0f);
  src.mask = Mask(256, 256, 0);
  Image bg(256, 256, 128.0f);
  NoiseParams clean;
  Sample base = composite(src, bg, clean, 0);
  NoiseParams noisy;
  noisy.sigma = 5.0;
  Sample out = composite(src, bg, noisy, 99);
  double mad = 0.0;
  for (size_t i = 0; i < out.image.px.size(); ++i)
    mad += std::abs(out.image.px[i] - base.image.px[i]);
  mad /= static_cast<double>(out.image.px.size());
  EXPECT_GE(mad, 3.5);
  EXPECT_LE(mad, 4.5);
}

TEST(Composite, RejectsDimensionMismatch) {
  Sample src = generate_guidewire_scene(small_scene(3));
  Image bg(64, 64, 100.0f);
  NoiseParams noise;
  EXPECT_THROW(composite(src, bg, noise, 0), std::invalid_argument);
}

TEST(SynthesizeDataset, CountAndMaskPreservation) {
  std::vector<Sample> source;
  for (uint64_t s = 0; s < 4; ++s) source.push_back(generate_guidewire_scene(small_scene(s)));
  VesselBackgroundParams vp;
  std::vector<Image> bgs;
  for (uint64_t s = 0; s < 3; ++s) bgs.push_back(make_vessel_background(96, 96, vp, s));
  BackgroundPool pool = build_background_pool(bgs, {96, 96}, 5, 1);
  NoiseParams noise;
  noise.sigma = 2.0;
  auto out = synthesize_dataset(source, pool, 254, noise, 77);
  ASSERT_EQ(out.size(), 254u);
  for (size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(*out[i].mask, *source[i % source.size()].mask);
    EXPECT_EQ(out[i].tag, DomainTag::synthesized);
  }
}

TEST(SynthesizeDataset, DegeneratePoolEqualsSingleComposite) {
  Sample src = generate_guidewire_scene(small_scene(8));
  VesselBackgroundParams vp;
  BackgroundPool pool;
  pool.patches.push_back(make_vessel_background(96, 96, vp, 5));
  pool.provenance.push_back("p0");
  NoiseParams noise;
  noise.sigma = 1.5;
  noise.seed = 31;
  auto batch = synthesize_dataset({src}, pool, 1, noise, 31);
  Sample single = composite(src, pool, noise);
  EXPECT_EQ(batch[0].image, single.image);
  EXPECT_EQ(*batch[0].mask, *single.mask);
}

TEST(SynthesizeDataset, DeterministicUnderSeed) {
  Sample src = generate_guidewire_scene(small_scene(8));
  VesselBackgroundParams vp;
  std::vector<Image> bgs{make_vessel_background(96, 96, vp, 1),
                         make_vessel_background(96, 96, vp, 2)};
  BackgroundPool pool = build_background_pool(bgs, {96, 96}, 4, 3);
  NoiseParams noise;
  noise.sigma = 3.0;
  auto a = synthesize_dataset({src}, pool, 16, noise, 5);
  auto b = synthesize_dataset({src}, pool, 16, noise, 5);
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].image, b[i].image);
}

TEST(VesselBackground, DeterministicAndInRange) {
  VesselBackgroundParams vp;
  Image a = make_vessel_background(128, 128, vp, 77);
  Image b = make_vessel_background(128, 128, vp, 77);
  EXPECT_EQ(a, b);
  for (float px : a.px) {
    EXPECT_GE(px, 0.0f);
    EXPECT_LE(px, 255.0f);
  }
}

TEST(DatasetIo, RoundTripWithMasks) {
  namespace fs = std::filesystem;
  const std::string root = (fs::temp_directory_path() / "wireseg_ds_test").string();
  fs::remove_all(root);
  std::vector<Sample> samples;
  for (uint64_t s = 0; s < 3; ++s) {
    Sample smp = generate_guidewire_scene(small_scene(s));
    smp.id = "frame_" + std::to_string(s);
    samples.push_back(std::move(smp));
  }
  write_dataset(root, samples);
  IngestResult res = ingest_dataset(root);
  ASSERT_EQ(res.samples.size(), 3u);
  EXPECT_TRUE(res.errors.empty());
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(res.samples[i].id, samples[i].id);
    ASSERT_TRUE(res.samples[i].mask.has_value());
    EXPECT_EQ(*res.samples[i].mask, *samples[i].mask);
  }
  fs::remove_all(root);
}

TEST(DatasetIo, ImagesWithoutMasksLoadUnlabeled) {
  namespace fs = std::filesystem;
  const std::string root = (fs::temp_directory_path() / "wireseg_ds_nolabel").string();
  fs::remove_all(root);
  fs::create_directories(fs::path(root) / "images");
  Sample s = generate_guidewire_scene(small_scene(0));
  write_png_gray8((fs::path(root) / "images" / "a.png").string(), s.image);
  IngestResult res = ingest_dataset(root);
  ASSERT_EQ(res.samples.size(), 1u);
  EXPECT_FALSE(res.samples[0].mask.has_value());
  fs::remove_all(root);
}

TEST(DatasetIo, ShapeMismatchRecordedBatchContinues) {
  namespace fs = std::filesystem;
  const std::string root = (fs::temp_directory_path() / "wireseg_ds_mismatch").string();
  fs::remove_all(root);
  fs::create_directories(fs::path(root) / "images");
  fs::create_directories(fs::path(root) / "masks");
  Sample s = generate_guidewire_scene(small_scene(0));
  write_png_gray8((fs::path(root) / "images" / "bad.png").string(), s.image);
  write_png_mask((fs::path(root) / "masks" / "bad.png").string(), Mask(32, 32, 1));
  write_png_gray8((fs::path(root) / "images" / "good.png").string(), s.image);
  write_png_mask((fs::path(root) / "masks" / "good.png").string(), *s.mask);
  IngestResult res = ingest_dataset(root);
  ASSERT_EQ(res.samples.size(), 1u);
  EXPECT_EQ(res.samples[0].id, "good");
  ASSERT_EQ(res.errors.size(), 1u);
  fs::remove_all(root);
}
