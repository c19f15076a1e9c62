// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "wireseg/core/image.hpp"
#include "wireseg/core/rng.hpp"

namespace wireseg {

struct NoForegroundError : std::runtime_error {
  NoForegroundError() : std::runtime_error("box_prompt: mask has no foreground") {}
};

struct Box {
  int row_min = 0;
  int col_min = 0;
  int row_max = 0;
  int col_max = 0;

  bool operator==(const Box& o) const {
    return row_min == o.row_min && col_min == o.col_min && row_max == o.row_max &&
           col_max == o.col_max;
  }
};

enum class PointPolarity { positive, negative };

struct PromptPoint {
  int row = 0;
  int col = 0;
  PointPolarity polarity = PointPolarity::positive;
};

// Weak prompts derived from a (pseudo-)mask: boxes are inclusive pixel
// bounds; positive points lie on mask==1 and negative points on mask==0.
struct PromptSet {
  std::vector<Box> boxes;
  std::vector<PromptPoint> points;

  bool empty() const { return boxes.empty() && points.empty(); }
};

enum class PromptMode { none, box, point, box_point };

inline PromptMode parse_prompt_mode(const std::string& s) {
  if (s == "none" || s == "end2end") return PromptMode::none;
  if (s == "box") return PromptMode::box;
  if (s == "point") return PromptMode::point;
  if (s == "box+point" || s == "point+box") return PromptMode::box_point;
  throw std::invalid_argument("unknown prompt mode: " + s);
}

inline const char* to_string(PromptMode m) {
  switch (m) {
    case PromptMode::none: return "end2end";
    case PromptMode::box: return "box";
    case PromptMode::point: return "point";
    default: return "box+point";
  }
}

// Minimal bounding box covering every foreground pixel.
inline Box box_prompt(const Mask& mask) {
  int rmin = mask.h, rmax = -1, cmin = mask.w, cmax = -1;
  for (int r = 0; r < mask.h; ++r)
    for (int c = 0; c < mask.w; ++c)
      if (mask.at(r, c)) {
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
        cmin = std::min(cmin, c);
        cmax = std::max(cmax, c);
      }
  if (rmax < 0) throw NoForegroundError();
  return {rmin, cmin, rmax, cmax};
}

// n positive points uniform without replacement from the foreground, n
// negative from the background.
inline PromptSet point_prompts(const Mask& mask, int n, uint64_t seed) {
  if (n < 0) throw std::invalid_argument("point_prompts: n must be >= 0");
  PromptSet out;
  if (n == 0) return out;
  std::vector<size_t> fg, bg;
  for (size_t i = 0; i < mask.v.size(); ++i) (mask.v[i] ? fg : bg).push_back(i);
  if (fg.size() < static_cast<size_t>(n))
    throw std::invalid_argument("point_prompts: fewer than n foreground pixels");
  if (bg.size() < static_cast<size_t>(n))
    throw std::invalid_argument("point_prompts: fewer than n background pixels");
  Rng rng(seed);
  for (size_t pick : rng.sample_without_replacement(fg.size(), static_cast<size_t>(n))) {
    const size_t i = fg[pick];
    out.points.push_back({static_cast<int>(i / mask.w), static_cast<int>(i % mask.w),
                          PointPolarity::positive});
  }
  for (size_t pick : rng.sample_without_replacement(bg.size(), static_cast<size_t>(n))) {
    const size_t i = bg[pick];
    out.points.push_back({static_cast<int>(i / mask.w), static_cast<int>(i % mask.w),
                          PointPolarity::negative});
  }
  return out;
}

inline PromptSet make_prompts(const Mask& mask, PromptMode mode, int n, uint64_t seed) {
  PromptSet out;
  if (mode == PromptMode::none) return out;
  if (mode == PromptMode::box || mode == PromptMode::box_point) out.boxes.push_back(box_prompt(mask));
  if (mode == PromptMode::point || mode == PromptMode::box_point) {
    PromptSet pts = point_prompts(mask, n, seed);
    out.points = std::move(pts.points);
  }
  return out;
}

}  // namespace wireseg
