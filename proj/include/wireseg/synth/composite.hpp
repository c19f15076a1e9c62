// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "wireseg/core/image.hpp"
#include "wireseg/core/rng.hpp"

namespace wireseg {

struct NoiseParams {
  double sigma = 0.0;  // std-dev of additive Gaussian noise, intensity units
  uint64_t seed = 0;

  void validate() const {
    if (sigma < 0.0) throw std::invalid_argument("NoiseParams: sigma must be >= 0");
  }
};

// Structure-preserving style transfer: wire pixels from the source frame,
// everything else from a target-style background patch, then additive
// Gaussian noise clamped to [0,255]. The mask is carried over unchanged.
inline Sample composite(const Sample& sample, const Image& background, const NoiseParams& noise,
                        uint64_t noise_seed) {
  if (!sample.mask) throw std::invalid_argument("composite: sample has no mask");
  if (!sample.image.same_shape(background))
    throw std::invalid_argument("composite: sample and background dimensions differ");
  noise.validate();

  Sample out;
  out.id = sample.id;
  out.tag = DomainTag::synthesized;
  out.mask = *sample.mask;
  out.image = Image(sample.image.h, sample.image.w);
  const Mask& m = *sample.mask;
  for (size_t i = 0; i < out.image.px.size(); ++i)
    out.image.px[i] = m.v[i] ? sample.image.px[i] : background.px[i];
  if (noise.sigma > 0.0) {
    Rng rng(noise_seed);
    for (auto& px : out.image.px)
      px = clamp255(static_cast<float>(px + rng.normal(0.0, noise.sigma)));
  }
  return out;
}

inline Sample composite(const Sample& sample, const BackgroundPool& pool, const NoiseParams& noise) {
  pool.validate();
  if (pool.patch_h() != sample.image.h || pool.patch_w() != sample.image.w)
    throw std::invalid_argument("composite: pool patch dimensions differ from sample");
  Rng rng(noise.seed);
  const size_t k = static_cast<size_t>(rng.below(pool.size()));
  return composite(sample, pool.patches[k], noise, rng.next_u64());
}

// Builds the synthesized set: N frames, each pairing a source sample with a
// uniformly drawn background patch. Labels are carried over unchanged.
inline std::vector<Sample> synthesize_dataset(const std::vector<Sample>& source,
                                              const BackgroundPool& pool, int N,
                                              const NoiseParams& noise, uint64_t seed) {
  if (N < 1) throw std::invalid_argument("synthesize_dataset: N must be >= 1");
  if (source.empty()) throw std::invalid_argument("synthesize_dataset: empty source set");
  pool.validate();
  Rng rng(seed);
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) {
    const Sample& src = source[static_cast<size_t>(i) % source.size()];
    const size_t k = static_cast<size_t>(rng.below(pool.size()));
    Sample s = composite(src, pool.patches[k], noise, rng.next_u64());
    char buf[16];
    std::snprintf(buf, sizeof(buf), "syn_%05d", i);
    s.id = buf;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace wireseg
