// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "wireseg/core/image.hpp"
#include "wireseg/core/rng.hpp"

namespace wireseg {

// Strong photometric perturbation. Photometric only: the supervision masks
// are reused for the perturbed branch, so pixel coordinates must never move.
struct AugmentationPolicy {
  double intensity_jitter = 0.2;  // multiplicative factor drawn from 1 +- jitter
  double blur_sigma_lo = 0.5;
  double blur_sigma_hi = 1.5;
  double noise_sigma = 4.0;
  int erase_count = 2;
  int erase_size_lo = 8;
  int erase_size_hi = 24;

  void validate() const {
    if (intensity_jitter < 0.0) throw std::invalid_argument("AugmentationPolicy: jitter must be >= 0");
    if (blur_sigma_lo > blur_sigma_hi || blur_sigma_lo < 0.0)
      throw std::invalid_argument("AugmentationPolicy: blur sigma range must be ordered and >= 0");
    if (noise_sigma < 0.0) throw std::invalid_argument("AugmentationPolicy: noise sigma must be >= 0");
    if (erase_count < 0) throw std::invalid_argument("AugmentationPolicy: erase count must be >= 0");
    if (erase_size_lo > erase_size_hi || erase_size_lo < 1)
      throw std::invalid_argument("AugmentationPolicy: erase size range must be ordered and >= 1");
  }

  bool is_identity() const {
    return intensity_jitter == 0.0 && blur_sigma_hi == 0.0 && noise_sigma == 0.0 && erase_count == 0;
  }
};

namespace detail {
// Separable Gaussian blur with reflect padding.
inline void gaussian_blur_inplace(Image& img, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> kernel(static_cast<size_t>(2 * radius + 1));
  double s = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[static_cast<size_t>(i + radius)] = static_cast<float>(v);
    s += v;
  }
  for (auto& k : kernel) k = static_cast<float>(k / s);

  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
  };
  Image tmp(img.h, img.w);
  for (int r = 0; r < img.h; ++r)
    for (int c = 0; c < img.w; ++c) {
      float acc = 0.0f;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[static_cast<size_t>(k + radius)] * img.at(r, reflect(c + k, img.w));
      tmp.at(r, c) = acc;
    }
  for (int r = 0; r < img.h; ++r)
    for (int c = 0; c < img.w; ++c) {
      float acc = 0.0f;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[static_cast<size_t>(k + radius)] * tmp.at(reflect(r + k, img.h), c);
      img.at(r, c) = acc;
    }
}
}  // namespace detail

// Applies, in order: intensity jitter, Gaussian blur, additive Gaussian
// noise, random rectangular erasing. Output is clamped to [0,255]. The
// all-zero policy is an exact identity.
inline Image strong_perturb(const Image& input, const AugmentationPolicy& policy, uint64_t seed) {
  policy.validate();
  Image img = input;
  if (policy.is_identity()) return img;
  Rng rng(seed);

  if (policy.intensity_jitter > 0.0) {
    const float f = static_cast<float>(
        rng.uniform(1.0 - policy.intensity_jitter, 1.0 + policy.intensity_jitter));
    for (auto& px : img.px) px *= f;
  }
  if (policy.blur_sigma_hi > 0.0) {
    const double sigma = rng.uniform(policy.blur_sigma_lo, policy.blur_sigma_hi);
    detail::gaussian_blur_inplace(img, sigma);
  }
  if (policy.noise_sigma > 0.0)
    for (auto& px : img.px) px = static_cast<float>(px + rng.normal(0.0, policy.noise_sigma));
  for (int e = 0; e < policy.erase_count; ++e) {
    const int eh = std::min(img.h, rng.range_int(policy.erase_size_lo, policy.erase_size_hi));
    const int ew = std::min(img.w, rng.range_int(policy.erase_size_lo, policy.erase_size_hi));
    const int r0 = rng.range_int(0, img.h - eh);
    const int c0 = rng.range_int(0, img.w - ew);
    const float fill = static_cast<float>(rng.uniform(0.0, 255.0));
    for (int r = r0; r < r0 + eh; ++r)
      for (int c = c0; c < c0 + ew; ++c) img.at(r, c) = fill;
  }
  for (auto& px : img.px) px = clamp255(px);
  return img;
}

}  // namespace wireseg
