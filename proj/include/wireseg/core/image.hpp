// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace wireseg {

// Grayscale intensity grid, row-major, values in [0, 255]. Stored as float so
// compositing and augmentation stay exact until quantized at the PNG boundary.
struct Image {
  int h = 0;
  int w = 0;
  std::vector<float> px;

  Image() = default;
  Image(int h_, int w_, float fill = 0.0f) : h(h_), w(w_), px(static_cast<size_t>(h_) * w_, fill) {}

  float& at(int r, int c) { return px[static_cast<size_t>(r) * w + c]; }
  float at(int r, int c) const { return px[static_cast<size_t>(r) * w + c]; }
  size_t size() const { return px.size(); }
  bool same_shape(const Image& o) const { return h == o.h && w == o.w; }

  bool operator==(const Image& o) const { return h == o.h && w == o.w && px == o.px; }
};

// Binary mask, 1 = foreground.
struct Mask {
  int h = 0;
  int w = 0;
  std::vector<uint8_t> v;

  Mask() = default;
  Mask(int h_, int w_, uint8_t fill = 0) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill) {}

  uint8_t& at(int r, int c) { return v[static_cast<size_t>(r) * w + c]; }
  uint8_t at(int r, int c) const { return v[static_cast<size_t>(r) * w + c]; }
  size_t size() const { return v.size(); }
  bool same_shape(const Mask& o) const { return h == o.h && w == o.w; }

  size_t foreground_count() const {
    size_t n = 0;
    for (uint8_t x : v) n += (x != 0);
    return n;
  }
  bool empty_foreground() const { return foreground_count() == 0; }

  bool operator==(const Mask& o) const { return h == o.h && w == o.w && v == o.v; }
};

inline void check_binary(const Mask& m) {
  for (uint8_t x : m.v)
    if (x > 1) throw std::invalid_argument("mask values must be 0 or 1");
}

enum class DomainTag { source, synthesized, target };

inline const char* to_string(DomainTag t) {
  switch (t) {
    case DomainTag::source: return "source";
    case DomainTag::synthesized: return "synthesized";
    default: return "target";
  }
}

// One image with an optional ground-truth / pseudo mask.
struct Sample {
  std::string id;
  Image image;
  std::optional<Mask> mask;
  DomainTag tag = DomainTag::source;

  void validate() const {
    if (mask) {
      if (mask->h != image.h || mask->w != image.w)
        throw std::invalid_argument("sample " + id + ": mask/image shape mismatch");
      check_binary(*mask);
    }
  }
};

// Pool B of target-style background patches, all of one size.
struct BackgroundPool {
  std::vector<Image> patches;
  std::vector<std::string> provenance;  // per-patch source id

  size_t size() const { return patches.size(); }
  int patch_h() const { return patches.empty() ? 0 : patches.front().h; }
  int patch_w() const { return patches.empty() ? 0 : patches.front().w; }

  void validate() const {
    if (patches.empty()) throw std::invalid_argument("background pool must contain at least one patch");
    for (const auto& p : patches)
      if (p.h != patch_h() || p.w != patch_w())
        throw std::invalid_argument("background pool patches must share one size");
  }
};

inline float clamp255(float x) { return x < 0.0f ? 0.0f : (x > 255.0f ? 255.0f : x); }

}  // namespace wireseg
