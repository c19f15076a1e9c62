// SPDX-License-Identifier: Apache-2.0
#include "wireseg/pseudo/dbscan.hpp"

#include <gtest/gtest.h>

#include "dbscan_reference.hpp"
#include "testutil.hpp"
#include "wireseg/pseudo/labels.hpp"

using namespace wireseg;
using namespace wireseg::test;

TEST(Dbscan, SinglePointWithMinPtsOneIsItsOwnCluster) {
  ClusterParams p;
  p.eps = 2.0;
  p.min_pts = 1;
  auto labels = dbscan({{5, 5}}, p);
  ASSERT_EQ(labels.size(), 1u);
  EXPECT_EQ(labels[0], 0);
}

TEST(Dbscan, TwoWellSeparatedBlobs) {
  ClusterParams p;
  p.eps = 2.0;
  p.min_pts = 3;
  std::vector<PixelPoint> pts;
  for (int i = 0; i < 20; ++i) pts.push_back({i, 0});          // blob at x=0
  for (int i = 0; i < 20; ++i) pts.push_back({i, 100});        // blob 100 px away
  auto labels = dbscan(pts, p);
  int clusters = 0, noise = 0;
  for (int l : labels) {
    clusters = std::max(clusters, l + 1);
    noise += (l == kNoise);
  }
  EXPECT_EQ(clusters, 2);
  EXPECT_EQ(noise, 0);
  EXPECT_TRUE(same_partition(labels, dbscan_reference(pts, p)));
}

TEST(Dbscan, AllIsolatedPointsAreNoise) {
  ClusterParams p;
  p.eps = 1.0;
  p.min_pts = 2;
  std::vector<PixelPoint> pts{{0, 0}, {10, 10}, {20, 20}, {30, 30}};
  for (int l : dbscan(pts, p)) EXPECT_EQ(l, kNoise);
}

TEST(Dbscan, EmptyInputYieldsEmptyLabeling) {
  ClusterParams p;
  EXPECT_TRUE(dbscan({}, p).empty());
}

TEST(Dbscan, DuplicatePointsAllowed) {
  ClusterParams p;
  p.eps = 1.0;
  p.min_pts = 3;
  std::vector<PixelPoint> pts{{4, 4}, {4, 4}, {4, 4}};
  auto labels = dbscan(pts, p);
  for (int l : labels) EXPECT_EQ(l, 0);
}

TEST(Dbscan, MatchesQuadraticReferenceOnSeededPointSets) {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 20 + static_cast<int>(rng.below(181));  // up to 200 points
    std::vector<PixelPoint> pts;
    pts.reserve(static_cast<size_t>(n));
    // mixture of a few dense blobs and uniform scatter
    const int blobs = 1 + static_cast<int>(rng.below(4));
    for (int i = 0; i < n; ++i) {
      if (rng.uniform() < 0.7) {
        const int b = static_cast<int>(rng.below(static_cast<uint64_t>(blobs)));
        const int cy = 20 + 40 * b, cx = 30 + 25 * b;
        pts.push_back({cy + rng.range_int(-4, 4), cx + rng.range_int(-4, 4)});
      } else {
        pts.push_back({rng.range_int(0, 199), rng.range_int(0, 199)});
      }
    }
    ClusterParams p;
    p.eps = 1.5 + rng.uniform() * 3.0;
    p.min_pts = 2 + static_cast<int>(rng.below(5));
    const auto got = dbscan(pts, p);
    const auto want = dbscan_reference(pts, p);
    ASSERT_TRUE(same_partition(got, want)) << "trial " << trial;
  }
}

TEST(FilterClusters, EmptyForegroundFlagsLowConfidence) {
  RawPrediction pred;
  pred.h = 8;
  pred.w = 8;
  pred.prob.assign(64, 0.01f);
  ClusterParams p;
  p.min_cluster_size = 1;
  PseudoLabel pl = filter_clusters(pred, 0.5, p);
  EXPECT_TRUE(pl.low_confidence);
  EXPECT_TRUE(pl.mask.empty_foreground());
}

TEST(FilterClusters, SnakeSurvivesIsolatedPixelsDropped) {
  RawPrediction pred;
  pred.h = 64;
  pred.w = 64;
  pred.prob.assign(64 * 64, 0.0f);
  // 200-px snake: rows 10..14, cols 10..49
  int snake = 0;
  for (int r = 10; r < 15; ++r)
    for (int c = 10; c < 50; ++c) {
      pred.prob[static_cast<size_t>(r) * 64 + c] = 0.9f;
      ++snake;
    }
  ASSERT_EQ(snake, 200);
  // three isolated pixels far away
  pred.prob[static_cast<size_t>(60) * 64 + 2] = 0.9f;
  pred.prob[static_cast<size_t>(2) * 64 + 60] = 0.9f;
  pred.prob[static_cast<size_t>(62) * 64 + 62] = 0.9f;
  ClusterParams p;
  p.eps = 3.0;
  p.min_pts = 4;
  p.min_cluster_size = 10;
  PseudoLabel pl = filter_clusters(pred, 0.5, p);
  EXPECT_EQ(pl.mask.foreground_count(), 200u);
  ASSERT_EQ(pl.cluster_stats.size(), 1u);
  EXPECT_EQ(pl.cluster_stats[0].size, 200);
  EXPECT_EQ(pl.cluster_stats[0].bbox, (Box{10, 10, 14, 49}));
}

TEST(FilterClusters, KeepTopKRetainsLargest) {
  RawPrediction pred;
  pred.h = 64;
  pred.w = 64;
  pred.prob.assign(64 * 64, 0.0f);
  for (int r = 5; r < 10; ++r)
    for (int c = 5; c < 15; ++c) pred.prob[static_cast<size_t>(r) * 64 + c] = 0.8f;  // 50 px
  for (int r = 40; r < 42; ++r)
    for (int c = 40; c < 44; ++c) pred.prob[static_cast<size_t>(r) * 64 + c] = 0.8f;  // 8 px
  ClusterParams p;
  p.eps = 2.0;
  p.min_pts = 3;
  p.min_cluster_size = 1;
  p.keep_top_k = 1;
  PseudoLabel pl = filter_clusters(pred, 0.5, p);
  EXPECT_EQ(pl.mask.foreground_count(), 50u);
  for (int r = 40; r < 42; ++r)
    for (int c = 40; c < 44; ++c) EXPECT_EQ(pl.mask.at(r, c), 0);
}

TEST(FilterClusters, OutputForegroundIsSubsetOfThresholded) {
  Rng rng(55);
  RawPrediction pred;
  pred.h = 32;
  pred.w = 32;
  pred.prob.resize(32 * 32);
  for (auto& v : pred.prob) v = static_cast<float>(rng.uniform());
  ClusterParams p;
  p.eps = 2.0;
  p.min_pts = 3;
  p.min_cluster_size = 5;
  PseudoLabel pl = filter_clusters(pred, 0.6, p);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c)
      if (pl.mask.at(r, c)) EXPECT_GE(pred.at(r, c), 0.6f);
}

TEST(FilterClusters, DeterministicAcrossRuns) {
  Rng rng(56);
  RawPrediction pred;
  pred.h = 48;
  pred.w = 48;
  pred.prob.resize(48 * 48);
  for (auto& v : pred.prob) v = static_cast<float>(rng.uniform());
  ClusterParams p;
  PseudoLabel a = filter_clusters(pred, 0.55, p);
  PseudoLabel b = filter_clusters(pred, 0.55, p);
  EXPECT_EQ(a.mask, b.mask);
}
