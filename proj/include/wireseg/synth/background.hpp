// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "wireseg/core/image.hpp"
#include "wireseg/core/rng.hpp"
#include "wireseg/synth/scene.hpp"

namespace wireseg {

// Target-style procedural background: smooth low-frequency intensity field
// (bilinear-upsampled coarse noise) with a few wide dark vessel-like curves
// and fine Gaussian noise. Guidewire-free by construction.
struct VesselBackgroundParams {
  double base_lo = 150.0;
  double base_hi = 215.0;
  double texture_amplitude = 25.0;  // coarse field swing around the base level
  int coarse_cells = 6;             // coarse noise grid resolution
  int vessel_count_lo = 1;
  int vessel_count_hi = 3;
  double vessel_width_lo = 6.0;
  double vessel_width_hi = 14.0;
  double vessel_depth_lo = 25.0;  // how much darker a vessel is than its surround
  double vessel_depth_hi = 55.0;
  double noise_sigma = 3.0;
};

inline Image make_vessel_background(int height, int width, const VesselBackgroundParams& p,
                                    uint64_t seed) {
  Rng rng(seed);
  const double base = rng.uniform(p.base_lo, p.base_hi);

  // Coarse value-noise field, bilinearly upsampled.
  const int gc = std::max(2, p.coarse_cells);
  std::vector<double> coarse(static_cast<size_t>(gc) * gc);
  for (auto& v : coarse) v = rng.uniform(-1.0, 1.0);
  Image img(height, width);
  for (int r = 0; r < height; ++r) {
    const double gy = static_cast<double>(r) / (height - 1) * (gc - 1);
    const int y0 = std::min(gc - 2, static_cast<int>(gy));
    const double fy = gy - y0;
    for (int c = 0; c < width; ++c) {
      const double gx = static_cast<double>(c) / (width - 1) * (gc - 1);
      const int x0 = std::min(gc - 2, static_cast<int>(gx));
      const double fx = gx - x0;
      const double v00 = coarse[static_cast<size_t>(y0) * gc + x0];
      const double v01 = coarse[static_cast<size_t>(y0) * gc + x0 + 1];
      const double v10 = coarse[static_cast<size_t>(y0 + 1) * gc + x0];
      const double v11 = coarse[static_cast<size_t>(y0 + 1) * gc + x0 + 1];
      const double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
      img.at(r, c) = static_cast<float>(base + p.texture_amplitude * v);
    }
  }

  // Dark vessel curves with soft edges.
  const int vessels = rng.range_int(p.vessel_count_lo, p.vessel_count_hi);
  for (int v = 0; v < vessels; ++v) {
    const int ncp = rng.range_int(4, 6);
    std::vector<Point2> control(static_cast<size_t>(ncp));
    for (int i = 0; i < ncp; ++i) {
      control[static_cast<size_t>(i)] = {rng.uniform(0.0, height - 1.0),
                                         rng.uniform(0.0, width - 1.0)};
    }
    const auto polyline = sample_spline(control);
    const double radius = rng.uniform(p.vessel_width_lo, p.vessel_width_hi) * 0.5;
    const double depth = rng.uniform(p.vessel_depth_lo, p.vessel_depth_hi);
    const int pad = static_cast<int>(std::ceil(radius)) + 2;
    Image dist(height, width, std::numeric_limits<float>::infinity());
    for (size_t i = 1; i < polyline.size(); ++i) {
      const Point2& a = polyline[i - 1];
      const Point2& b = polyline[i];
      const int r0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y))) - pad);
      const int r1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y))) + pad);
      const int c0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x))) - pad);
      const int c1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x))) + pad);
      for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c) {
          const double d = detail::dist_point_segment(r, c, a, b);
          if (d < dist.at(r, c)) dist.at(r, c) = static_cast<float>(d);
        }
    }
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) {
        const double d = dist.at(r, c);
        if (d < radius + 2.0) {
          const double fade = std::clamp((radius + 2.0 - d) / 2.0, 0.0, 1.0);
          img.at(r, c) = static_cast<float>(img.at(r, c) - depth * fade);
        }
      }
  }

  if (p.noise_sigma > 0.0)
    for (auto& px : img.px) px = static_cast<float>(px + rng.normal(0.0, p.noise_sigma));
  for (auto& px : img.px) px = clamp255(px);
  return img;
}

// Crops K patches from caller-provided images at seeded-random offsets.
// Patches are value copies, independent of the inputs.
inline BackgroundPool build_background_pool(const std::vector<Image>& images,
                                            std::pair<int, int> patch_size, int K, uint64_t seed) {
  if (K <= 0) throw std::invalid_argument("build_background_pool: K must be >= 1");
  if (images.empty()) throw std::invalid_argument("build_background_pool: no images given");
  const int ph = patch_size.first, pw = patch_size.second;
  if (ph <= 0 || pw <= 0) throw std::invalid_argument("build_background_pool: bad patch size");
  for (const auto& img : images)
    if (img.h < ph || img.w < pw)
      throw std::invalid_argument("build_background_pool: image smaller than patch size");

  Rng rng(seed);
  BackgroundPool pool;
  for (int k = 0; k < K; ++k) {
    const size_t src = static_cast<size_t>(rng.below(images.size()));
    const Image& img = images[src];
    const int r0 = static_cast<int>(rng.below(static_cast<uint64_t>(img.h - ph + 1)));
    const int c0 = static_cast<int>(rng.below(static_cast<uint64_t>(img.w - pw + 1)));
    Image patch(ph, pw);
    for (int r = 0; r < ph; ++r)
      for (int c = 0; c < pw; ++c) patch.at(r, c) = img.at(r0 + r, c0 + c);
    pool.patches.push_back(std::move(patch));
    pool.provenance.push_back("img" + std::to_string(src) + "+" + std::to_string(r0) + "," +
                              std::to_string(c0));
  }
  pool.validate();
  return pool;
}

}  // namespace wireseg
