// SPDX-License-Identifier: Apache-2.0
#include "wireseg/prompt/prompts.hpp"

#include <gtest/gtest.h>

#include <set>

#include "wireseg/core/rng.hpp"

using namespace wireseg;

namespace {
Mask two_pixel_mask() {
  Mask m(8, 8, 0);
  m.at(2, 3) = 1;
  m.at(5, 7) = 1;
  return m;
}

// brute-force min/max oracle
Box reference_box(const Mask& m) {
  Box b{m.h, m.w, -1, -1};
  for (int r = 0; r < m.h; ++r)
    for (int c = 0; c < m.w; ++c)
      if (m.at(r, c)) {
        b.row_min = std::min(b.row_min, r);
        b.row_max = std::max(b.row_max, r);
        b.col_min = std::min(b.col_min, c);
        b.col_max = std::max(b.col_max, c);
      }
  return b;
}
}  // namespace

TEST(BoxPrompt, TwoPixelWorkedCase) {
  EXPECT_EQ(box_prompt(two_pixel_mask()), (Box{2, 3, 5, 7}));
}

TEST(BoxPrompt, FullForegroundCoversWholeFrame) {
  Mask m(16, 24, 1);
  EXPECT_EQ(box_prompt(m), (Box{0, 0, 15, 23}));
}

TEST(BoxPrompt, EmptyMaskThrowsNoForeground) {
  EXPECT_THROW(box_prompt(Mask(8, 8, 0)), NoForegroundError);
}

TEST(BoxPrompt, MatchesBruteForceOracleOnRandomMasks) {
  Rng rng(21);
  for (int k = 0; k < 50; ++k) {
    Mask m(32, 32, 0);
    const int n = 1 + static_cast<int>(rng.below(40));
    for (int i = 0; i < n; ++i) m.at(rng.range_int(0, 31), rng.range_int(0, 31)) = 1;
    EXPECT_EQ(box_prompt(m), reference_box(m));
  }
}

TEST(BoxPrompt, MinimalityShrinkingAnySideExcludesForeground) {
  Rng rng(22);
  for (int k = 0; k < 20; ++k) {
    Mask m(32, 32, 0);
    for (int i = 0; i < 15; ++i) m.at(rng.range_int(2, 29), rng.range_int(2, 29)) = 1;
    const Box b = box_prompt(m);
    auto count_in = [&](int rmin, int cmin, int rmax, int cmax) {
      size_t cnt = 0;
      for (int r = 0; r < m.h; ++r)
        for (int c = 0; c < m.w; ++c)
          if (m.at(r, c) && r >= rmin && r <= rmax && c >= cmin && c <= cmax) ++cnt;
      return cnt;
    };
    const size_t all = count_in(b.row_min, b.col_min, b.row_max, b.col_max);
    EXPECT_EQ(all, m.foreground_count());
    if (b.row_min < b.row_max) {
      EXPECT_LT(count_in(b.row_min + 1, b.col_min, b.row_max, b.col_max), all);
      EXPECT_LT(count_in(b.row_min, b.col_min, b.row_max - 1, b.col_max), all);
    }
    if (b.col_min < b.col_max) {
      EXPECT_LT(count_in(b.row_min, b.col_min + 1, b.row_max, b.col_max), all);
      EXPECT_LT(count_in(b.row_min, b.col_min, b.row_max, b.col_max - 1), all);
    }
  }
}

TEST(PointPrompts, PolarityCorrectOverManySeeds) {
  Mask m(32, 32, 0);
  for (int r = 10; r < 20; ++r)
    for (int c = 8; c < 28; ++c) m.at(r, c) = 1;
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    PromptSet ps = point_prompts(m, 5, seed);
    ASSERT_EQ(ps.points.size(), 10u);
    int pos = 0, neg = 0;
    for (const auto& p : ps.points) {
      if (p.polarity == PointPolarity::positive) {
        EXPECT_EQ(m.at(p.row, p.col), 1);
        ++pos;
      } else {
        EXPECT_EQ(m.at(p.row, p.col), 0);
        ++neg;
      }
    }
    EXPECT_EQ(pos, 5);
    EXPECT_EQ(neg, 5);
  }
}

TEST(PointPrompts, NoDuplicatesWithinPolarity) {
  Mask m(16, 16, 0);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 8; ++c) m.at(r, c) = 1;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    PromptSet ps = point_prompts(m, 6, seed);
    std::set<std::pair<int, int>> pos, neg;
    for (const auto& p : ps.points)
      (p.polarity == PointPolarity::positive ? pos : neg).insert({p.row, p.col});
    EXPECT_EQ(pos.size(), 6u);
    EXPECT_EQ(neg.size(), 6u);
  }
}

TEST(PointPrompts, ZeroPointsYieldsEmptySet) {
  EXPECT_TRUE(point_prompts(two_pixel_mask(), 0, 1).points.empty());
}

TEST(PointPrompts, DeterministicUnderSeed) {
  Mask m(16, 16, 0);
  for (int c = 0; c < 16; ++c) m.at(8, c) = 1;
  PromptSet a = point_prompts(m, 4, 99);
  PromptSet b = point_prompts(m, 4, 99);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].row, b.points[i].row);
    EXPECT_EQ(a.points[i].col, b.points[i].col);
  }
}

TEST(PointPrompts, InsufficientPixelsThrow) {
  Mask m(4, 4, 0);
  m.at(0, 0) = 1;
  EXPECT_THROW(point_prompts(m, 2, 1), std::invalid_argument);
  Mask full(4, 4, 1);
  EXPECT_THROW(point_prompts(full, 2, 1), std::invalid_argument);
}

TEST(MakePrompts, BoxPlusPointComposition) {
  Mask m(32, 32, 0);
  for (int r = 5; r < 25; ++r)
    for (int c = 5; c < 25; ++c) m.at(r, c) = 1;
  PromptSet ps = make_prompts(m, PromptMode::box_point, 5, 3);
  EXPECT_EQ(ps.boxes.size(), 1u);
  EXPECT_EQ(ps.points.size(), 10u);
}

TEST(MakePrompts, NoneModeGivesEmptySet) {
  EXPECT_TRUE(make_prompts(two_pixel_mask(), PromptMode::none, 5, 3).empty());
}

TEST(MakePrompts, BoxModeOnEmptyMaskPropagatesError) {
  EXPECT_THROW(make_prompts(Mask(8, 8, 0), PromptMode::box, 0, 1), NoForegroundError);
}

TEST(PromptMode, ParseRoundTrip) {
  EXPECT_EQ(parse_prompt_mode("end2end"), PromptMode::none);
  EXPECT_EQ(parse_prompt_mode("box"), PromptMode::box);
  EXPECT_EQ(parse_prompt_mode("point"), PromptMode::point);
  EXPECT_EQ(parse_prompt_mode("box+point"), PromptMode::box_point);
  EXPECT_THROW(parse_prompt_mode("banana"), std::invalid_argument);
}
