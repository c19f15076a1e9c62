// SPDX-License-Identifier: Apache-2.0
#pragma once

// Coarse-stage inference on the target domain and the cleanup that turns a
// raw probability map into a pseudo-label: threshold, density clustering,
// cluster-wise filtering.

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "wireseg/core/image.hpp"
#include "wireseg/model/network.hpp"
#include "wireseg/prompt/prompts.hpp"
#include "wireseg/pseudo/dbscan.hpp"

namespace wireseg {

struct RawPrediction {
  int h = 0;
  int w = 0;
  std::vector<float> prob;  // in [0,1]

  float at(int r, int c) const { return prob[static_cast<size_t>(r) * w + c]; }
};

struct ClusterStat {
  int size = 0;
  Box bbox;
};

struct PseudoLabel {
  Mask mask;
  std::string source_frame;
  std::vector<ClusterStat> cluster_stats;
  bool low_confidence = false;
  std::string error;  // set when the frame failed and the batch continued
};

// Sigmoid of the plain-head logits.
inline RawPrediction infer_raw(const ModelState& coarse_model, const Image& image) {
  NoGradGuard ng;
  ImageEmbedding z = encode_image(coarse_model, image);
  MaskLogits logits = plain_decode(coarse_model, z);
  RawPrediction out;
  out.h = logits.grid.rows();
  out.w = logits.grid.cols();
  out.prob.resize(logits.grid.numel());
  const auto& lv = logits.grid.values();
  for (size_t i = 0; i < out.prob.size(); ++i)
    out.prob[i] = 1.0f / (1.0f + std::exp(-lv[i]));
  return out;
}

// Threshold, cluster the foreground pixels, drop NOISE and small clusters,
// optionally keep only the k largest; the output mask is the kept union.
inline PseudoLabel filter_clusters(const RawPrediction& pred, double threshold,
                                   const ClusterParams& params) {
  if (threshold <= 0.0 || threshold >= 1.0)
    throw std::invalid_argument("filter_clusters: threshold must lie in (0,1)");
  params.validate();

  PseudoLabel out;
  out.mask = Mask(pred.h, pred.w, 0);

  std::vector<PixelPoint> fg;  // row-major order pins DBSCAN tie-breaking
  for (int r = 0; r < pred.h; ++r)
    for (int c = 0; c < pred.w; ++c)
      if (pred.at(r, c) >= threshold) fg.push_back({r, c});
  if (fg.empty()) {
    out.low_confidence = true;
    return out;
  }

  const std::vector<int> labels = dbscan(fg, params);
  int nclusters = 0;
  for (int l : labels) nclusters = std::max(nclusters, l + 1);
  std::vector<int> sizes(static_cast<size_t>(nclusters), 0);
  for (int l : labels)
    if (l >= 0) ++sizes[static_cast<size_t>(l)];

  std::vector<int> kept;
  for (int cid = 0; cid < nclusters; ++cid)
    if (sizes[static_cast<size_t>(cid)] >= params.min_cluster_size) kept.push_back(cid);
  if (params.keep_top_k > 0 && static_cast<int>(kept.size()) > params.keep_top_k) {
    std::sort(kept.begin(), kept.end(), [&](int a, int b) {
      if (sizes[static_cast<size_t>(a)] != sizes[static_cast<size_t>(b)])
        return sizes[static_cast<size_t>(a)] > sizes[static_cast<size_t>(b)];
      return a < b;
    });
    kept.resize(static_cast<size_t>(params.keep_top_k));
    std::sort(kept.begin(), kept.end());
  }

  std::vector<int> keep_index(static_cast<size_t>(nclusters), -1);
  for (size_t i = 0; i < kept.size(); ++i) keep_index[static_cast<size_t>(kept[i])] = static_cast<int>(i);
  out.cluster_stats.resize(kept.size());
  for (size_t i = 0; i < kept.size(); ++i)
    out.cluster_stats[i].bbox = {pred.h, pred.w, -1, -1};

  for (size_t i = 0; i < fg.size(); ++i) {
    const int l = labels[i];
    if (l < 0 || keep_index[static_cast<size_t>(l)] < 0) continue;
    const auto& p = fg[i];
    out.mask.at(p.row, p.col) = 1;
    ClusterStat& cs = out.cluster_stats[static_cast<size_t>(keep_index[static_cast<size_t>(l)])];
    ++cs.size;
    cs.bbox.row_min = std::min(cs.bbox.row_min, p.row);
    cs.bbox.row_max = std::max(cs.bbox.row_max, p.row);
    cs.bbox.col_min = std::min(cs.bbox.col_min, p.col);
    cs.bbox.col_max = std::max(cs.bbox.col_max, p.col);
  }
  out.low_confidence = out.mask.empty_foreground();
  return out;
}

// Per-frame inference + filtering; failures are recorded per frame and the
// batch continues. Result order matches input order.
inline std::vector<PseudoLabel> generate_pseudo_labels(const ModelState& coarse_model,
                                                       const std::vector<Sample>& target_images,
                                                       double threshold,
                                                       const ClusterParams& params) {
  std::vector<PseudoLabel> out;
  out.reserve(target_images.size());
  for (const auto& s : target_images) {
    PseudoLabel pl;
    pl.source_frame = s.id;
    try {
      RawPrediction raw = infer_raw(coarse_model, s.image);
      pl = filter_clusters(raw, threshold, params);
      pl.source_frame = s.id;
    } catch (const std::exception& e) {
      pl.mask = Mask(s.image.h, s.image.w, 0);
      pl.low_confidence = true;
      pl.error = e.what();
    }
    out.push_back(std::move(pl));
  }
  return out;
}

}  // namespace wireseg
