// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "wireseg/model/state.hpp"

namespace wireseg {

// Adam over a ModelState's trainable (non-frozen) parameters. Moments are
// keyed by parameter index; reset() clears them (used at the phase switch).
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ModelState& st) {
    if (m_.size() != st.params().size()) {
      m_.assign(st.params().size(), {});
      v_.assign(st.params().size(), {});
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < st.params().size(); ++i) {
      Param& p = st.params()[i];
      if (p.frozen) continue;
      auto& vals = p.t.values();
      const auto& grads = p.t.grads();
      if (grads.size() != vals.size()) continue;
      auto& m = m_[i];
      auto& v = v_[i];
      if (m.size() != vals.size()) {
        m.assign(vals.size(), 0.0);
        v.assign(vals.size(), 0.0);
      }
      for (size_t j = 0; j < vals.size(); ++j) {
        const double g = grads[j];
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
        vals[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
      }
    }
  }

  void reset() {
    m_.clear();
    v_.clear();
    t_ = 0;
  }

  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace wireseg
