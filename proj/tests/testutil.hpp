// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "wireseg/core/image.hpp"
#include "wireseg/core/rng.hpp"
#include "wireseg/core/tensor.hpp"

namespace wireseg::test {

// Central finite differences of a scalar-valued function against the
// analytic gradient from backward(). Inputs are perturbed in place.
struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

inline GradCheckResult grad_check(const std::function<Tensor()>& fn, Tensor& leaf,
                                  double step = 1e-4) {
  leaf.zero_grad();
  Tensor loss = fn();
  loss.backward();
  std::vector<double> analytic = leaf.grads();

  GradCheckResult res;
  for (size_t i = 0; i < leaf.values().size(); ++i) {
    const double orig = leaf.values()[i];
    leaf.values()[i] = orig + step;
    const double fplus = fn().item();
    leaf.values()[i] = orig - step;
    const double fminus = fn().item();
    leaf.values()[i] = orig;
    const double numeric = (fplus - fminus) / (2.0 * step);
    const double a = analytic[i];
    const double abs_err = std::abs(a - numeric);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    res.max_abs_error = std::max(res.max_abs_error, abs_err);
    res.max_rel_error = std::max(res.max_rel_error, abs_err / denom);
  }
  return res;
}

inline Tensor random_tensor(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  Tensor t = Tensor::zeros(r, c, requires_grad);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline Tensor random_binary_tensor(int r, int c, Rng& rng, double p_fg = 0.5) {
  Tensor t = Tensor::zeros(r, c);
  for (auto& v : t.values()) v = rng.uniform() < p_fg ? 1.0 : 0.0;
  return t;
}

// 8-connected component count by flood fill (test oracle).
inline int component_count_8(const Mask& m) {
  std::vector<char> seen(m.v.size(), 0);
  int count = 0;
  std::vector<size_t> stack;
  for (size_t start = 0; start < m.v.size(); ++start) {
    if (!m.v[start] || seen[start]) continue;
    ++count;
    stack.push_back(start);
    seen[start] = 1;
    while (!stack.empty()) {
      const size_t i = stack.back();
      stack.pop_back();
      const int r = static_cast<int>(i) / m.w, c = static_cast<int>(i) % m.w;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int nr = r + dr, nc = c + dc;
          if (nr < 0 || nr >= m.h || nc < 0 || nc >= m.w) continue;
          const size_t j = static_cast<size_t>(nr) * m.w + nc;
          if (m.v[j] && !seen[j]) {
            seen[j] = 1;
            stack.push_back(j);
          }
        }
    }
  }
  return count;
}

}  // namespace wireseg::test
