// SPDX-License-Identifier: Apache-2.0
#pragma once

// Training objectives for the weakly supervised self-training stage:
// dice and focal primitives, teacher-student and weak-supervision terms,
// positive-embedding pooling with its contrastive consistency loss, the
// teacher prediction-consistency term, and the weighted total.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "wireseg/core/image.hpp"
#include "wireseg/core/tensor.hpp"

namespace wireseg {

enum class EmbeddingLossForm { infonce, attraction_only };

struct LossConfig {
  double eps_dice = 1e-6;
  double focal_exponent = 2.0;
  double tau = 0.3;
  double lambda_ts = 1.0;
  double lambda_ts_prime = 1.0;
  double lambda_ws_stu = 0.5;
  double lambda_ws_stu_prime = 0.5;
  double lambda_ws_tea = 0.5;
  double lambda_ws_tea_prime = 0.5;
  double lambda_c_focal = 0.5;
  double lambda_c_dice = 0.5;
  double prob_clamp = 1e-6;
  double binarize_threshold = 0.5;
  EmbeddingLossForm embedding_loss_form = EmbeddingLossForm::infonce;

  void validate() const {
    if (tau <= 0.0) throw std::invalid_argument("LossConfig: tau must be > 0");
    if (eps_dice <= 0.0) throw std::invalid_argument("LossConfig: eps_dice must be > 0");
    if (prob_clamp <= 0.0 || prob_clamp > 0.01)
      throw std::invalid_argument("LossConfig: prob_clamp must lie in (0, 0.01]");
    if (binarize_threshold <= 0.0 || binarize_threshold >= 1.0)
      throw std::invalid_argument("LossConfig: binarize_threshold must lie in (0,1)");
  }
};

// Weights of the four-term total loss; (alpha, beta, gamma, delta).
struct LossWeights {
  double alpha = 0.0;
  double beta = 1.0;
  double gamma = 0.5;
  double delta = 1.0;

  void validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0 || delta < 0)
      throw std::invalid_argument("LossWeights: weights must be non-negative");
  }
};

namespace detail {
inline void check_loss_shapes(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}
}  // namespace detail

// Single-sample dice loss: 1 - (2*sum(x*y) + eps) / (sum(x) + sum(y) + eps).
// The target carries no gradient.
inline Tensor dice_loss(const Tensor& pred_prob, const Tensor& target, double eps) {
  detail::check_loss_shapes(pred_prob, target, "dice_loss");
  const Tensor tgt = target.detach();
  Tensor inter = sum(mul(pred_prob, tgt));
  Tensor denom = add(sum(pred_prob), sum(tgt));
  Tensor ratio = div(add_scalar(scale(inter, 2.0), static_cast<double>(eps)),
                     add_scalar(denom, static_cast<double>(eps)));
  return add_scalar(neg(ratio), 1.0);
}

// Focal loss with binary target, pixel-normalized by 1/(H*W):
//   -(1/HW) * sum[ 1(y=1) (1-p)^lam log(p) + 1(y=0) p^lam log(1-p) ]
// Probabilities are clamped to [prob_clamp, 1-prob_clamp] before the logs.
inline Tensor focal_loss(const Tensor& pred_prob, const Tensor& target, double exponent,
                         double prob_clamp) {
  detail::check_loss_shapes(pred_prob, target, "focal_loss");
  const Tensor tgt = target.detach();
  for (double y : tgt.values())
    if (y != 0.0 && y != 1.0) throw std::invalid_argument("focal_loss: target must be binary");
  const double lam = static_cast<double>(exponent);
  const double lo = static_cast<double>(prob_clamp);
  Tensor p = clamp(pred_prob, lo, 1.0 - lo);
  Tensor one_minus_p = add_scalar(neg(p), 1.0);
  Tensor pos = mul(tgt, mul(pow_scalar(one_minus_p, lam), log_t(p)));
  Tensor neg_t = mul(add_scalar(neg(tgt), 1.0), mul(pow_scalar(p, lam), log_t(one_minus_p)));
  Tensor total = sum(add(pos, neg_t));
  return scale(total, -1.0 / static_cast<double>(pred_prob.numel()));
}

// Sigmoid + binarize, detached from the graph (the Sig operator used for
// self-training targets).
inline Tensor sig_binarize(const Tensor& logits, double threshold) {
  NoGradGuard ng;
  Tensor out = Tensor::zeros(logits.rows(), logits.cols());
  const auto& lv = logits.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-lv[i]));
    ov[i] = p >= static_cast<double>(threshold) ? 1.0 : 0.0;
  }
  return out;
}

// Teacher-student loss: both student branches against the binarized clean
// teacher prediction. Teacher target carries no gradient.
inline Tensor ts_loss(const Tensor& p_stu, const Tensor& p_stu_aug, const Tensor& p_tea,
                      const LossConfig& cfg) {
  detail::check_loss_shapes(p_stu, p_stu_aug, "ts_loss");
  detail::check_loss_shapes(p_stu, p_tea, "ts_loss");
  Tensor target = sig_binarize(p_tea, cfg.binarize_threshold);
  Tensor a = dice_loss(sigmoid(p_stu), target, cfg.eps_dice);
  Tensor b = dice_loss(sigmoid(p_stu_aug), target, cfg.eps_dice);
  return add(scale(a, static_cast<double>(cfg.lambda_ts)),
             scale(b, static_cast<double>(cfg.lambda_ts_prime)));
}

// Weak-supervision loss: all four predictions against the pseudo-label.
inline Tensor ws_loss(const Tensor& p_stu, const Tensor& p_stu_aug, const Tensor& p_tea,
                      const Tensor& p_tea_aug, const Tensor& y_p, const LossConfig& cfg) {
  detail::check_loss_shapes(p_stu, y_p, "ws_loss");
  detail::check_loss_shapes(p_stu_aug, y_p, "ws_loss");
  detail::check_loss_shapes(p_tea, y_p, "ws_loss");
  detail::check_loss_shapes(p_tea_aug, y_p, "ws_loss");
  Tensor l = scale(dice_loss(sigmoid(p_stu), y_p, cfg.eps_dice), static_cast<double>(cfg.lambda_ws_stu));
  l = add(l, scale(dice_loss(sigmoid(p_stu_aug), y_p, cfg.eps_dice),
                   static_cast<double>(cfg.lambda_ws_stu_prime)));
  l = add(l, scale(dice_loss(sigmoid(p_tea), y_p, cfg.eps_dice),
                   static_cast<double>(cfg.lambda_ws_tea)));
  l = add(l, scale(dice_loss(sigmoid(p_tea_aug), y_p, cfg.eps_dice),
                   static_cast<double>(cfg.lambda_ws_tea_prime)));
  return l;
}

struct EmptyPoolError : std::runtime_error {
  EmptyPoolError() : std::runtime_error("pooled_positive_embedding: mask is empty on the embedding grid") {}
};

// Masked average of embedding vectors over foreground cells:
//   z+ = sum(y_p * z) / sum(y_p), with y_p given on the embedding grid.
// tokens: [N, D]; cell_mask: [1, N] of {0,1}.
inline Tensor pooled_positive_embedding(const Tensor& tokens, const Tensor& cell_mask) {
  if (cell_mask.rows() != 1 || cell_mask.cols() != tokens.rows())
    throw std::invalid_argument("pooled_positive_embedding: mask must be [1, N]");
  double count = 0.0;
  for (double v : cell_mask.values()) count += v;
  if (count <= 0.0) throw EmptyPoolError();
  Tensor m = cell_mask.detach();
  Tensor s = matmul(m, tokens);  // [1, D]
  return scale(s, static_cast<double>(1.0 / count));
}

// Downsamples a pixel mask to the embedding grid by max-pooling per cell
// (any foreground pixel marks the cell), returned as a [1, N] row.
inline Tensor downsample_mask_to_cells(const Mask& mask, int grid_h, int grid_w) {
  if (mask.h % grid_h != 0 || mask.w % grid_w != 0)
    throw std::invalid_argument("downsample_mask_to_cells: mask not divisible by grid");
  const int ph = mask.h / grid_h, pw = mask.w / grid_w;
  Tensor out = Tensor::zeros(1, grid_h * grid_w);
  for (int gy = 0; gy < grid_h; ++gy)
    for (int gx = 0; gx < grid_w; ++gx) {
      double v = 0.0;
      for (int r = gy * ph; r < (gy + 1) * ph && v == 0.0; ++r)
        for (int c = gx * pw; c < (gx + 1) * pw; ++c)
          if (mask.at(r, c)) {
            v = 1.0;
            break;
          }
      out.values()[static_cast<size_t>(gy) * grid_w + gx] = v;
    }
  return out;
}

// Multiplies every element of t by a [1,1] tensor (gradient flows into both).
inline Tensor scale_by_scalar_tensor(const Tensor& t, const Tensor& s) {
  if (s.numel() != 1) throw std::invalid_argument("scale_by_scalar_tensor: scale must be scalar");
  Tensor out = detail::make_result(t.rows(), t.cols(), {t, s});
  const double sv = s.values()[0];
  const auto& tv = t.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = tv[i] * sv;
  if (out.requires_grad()) {
    auto tn = t.node(), sn = s.node();
    out.node()->backfn = [tn, sn](TensorNode& self) {
      const double sv = sn->val[0];
      for (size_t i = 0; i < self.grad.size(); ++i) {
        if (tn->requires_grad) tn->grad[i] += self.grad[i] * sv;
        if (sn->requires_grad) sn->grad[0] += self.grad[i] * tn->val[i];
      }
    };
  }
  return out;
}

inline Tensor l2_normalize(const Tensor& v) {
  Tensor sq = sum(mul(v, v));
  if (sq.values()[0] <= 0.0)
    throw std::invalid_argument("embedding_consistency_loss: zero vector");
  Tensor inv = pow_scalar(sq, -0.5);
  return scale_by_scalar_tensor(v, inv);
}

// Embedding consistency between per-frame pooled student/teacher embeddings.
// Batch form is InfoNCE over in-batch negatives:
//   -(1/B) sum_i log( exp(s_i . t_i / tau) / sum_j exp(s_i . t_j / tau) )
// For B == 1 (or attraction_only form) it falls back to mean cosine distance
// 1 - s_i . t_i over the batch.
inline Tensor embedding_consistency_loss(const std::vector<Tensor>& stu_pools,
                                         const std::vector<Tensor>& tea_pools, double tau,
                                         EmbeddingLossForm form = EmbeddingLossForm::infonce) {
  if (stu_pools.size() != tea_pools.size())
    throw std::invalid_argument("embedding_consistency_loss: list length mismatch");
  if (stu_pools.empty()) throw std::invalid_argument("embedding_consistency_loss: empty batch");
  const size_t B = stu_pools.size();
  std::vector<Tensor> s_hat, t_hat;
  s_hat.reserve(B);
  t_hat.reserve(B);
  for (size_t i = 0; i < B; ++i) {
    s_hat.push_back(l2_normalize(stu_pools[i]));
    t_hat.push_back(l2_normalize(tea_pools[i]));
  }
  if (form == EmbeddingLossForm::attraction_only || B == 1) {
    Tensor acc = Tensor::scalar(0.0);
    for (size_t i = 0; i < B; ++i) {
      Tensor cosine = sum(mul(s_hat[i], t_hat[i]));
      acc = add(acc, add_scalar(neg(cosine), 1.0));
    }
    return scale(acc, 1.0 / static_cast<double>(B));
  }
  Tensor acc = Tensor::scalar(0.0);
  for (size_t i = 0; i < B; ++i) {
    std::vector<Tensor> logits_parts;
    logits_parts.reserve(B);
    for (size_t j = 0; j < B; ++j)
      logits_parts.push_back(scale(sum(mul(s_hat[i], t_hat[j])), static_cast<double>(1.0 / tau)));
    Tensor logits = concat_cols(logits_parts);  // [1, B]
    Tensor probs = softmax_rows(logits);
    Tensor pi = slice_cols(probs, static_cast<int>(i), static_cast<int>(i) + 1);
    acc = add(acc, neg(log_t(pi)));
  }
  return scale(acc, 1.0 / static_cast<double>(B));
}

// Prediction consistency of the teacher under strong perturbation: focal +
// dice of the augmented branch against the binarized clean branch.
inline Tensor pred_consistency_loss(const Tensor& p_tea, const Tensor& p_tea_aug,
                                    const LossConfig& cfg) {
  detail::check_loss_shapes(p_tea, p_tea_aug, "pred_consistency_loss");
  Tensor target = sig_binarize(p_tea, cfg.binarize_threshold);
  Tensor prob_aug = sigmoid(p_tea_aug);
  Tensor f = focal_loss(prob_aug, target, cfg.focal_exponent, cfg.prob_clamp);
  Tensor d = dice_loss(prob_aug, target, cfg.eps_dice);
  return add(scale(f, static_cast<double>(cfg.lambda_c_focal)),
             scale(d, static_cast<double>(cfg.lambda_c_dice)));
}

struct NonFiniteLossError : std::runtime_error {
  explicit NonFiniteLossError(const std::string& what) : std::runtime_error(what) {}
};

// Weighted total: alpha*L_ts + beta*L_ws + gamma*L_c_emb + delta*L_c_pred.
inline Tensor total_loss(const Tensor& l_ts, const Tensor& l_ws, const Tensor& l_emb,
                         const Tensor& l_pred, const LossWeights& w) {
  auto check = [](const Tensor& t, const char* name) {
    if (t.defined() && !std::isfinite(t.values()[0]))
      throw NonFiniteLossError(std::string("total_loss: non-finite ") + name);
  };
  check(l_ts, "L_ts");
  check(l_ws, "L_ws");
  check(l_emb, "L_c_emb");
  check(l_pred, "L_c_pred");
  Tensor acc = Tensor::scalar(0.0);
  if (l_ts.defined()) acc = add(acc, scale(l_ts, static_cast<double>(w.alpha)));
  if (l_ws.defined()) acc = add(acc, scale(l_ws, static_cast<double>(w.beta)));
  if (l_emb.defined()) acc = add(acc, scale(l_emb, static_cast<double>(w.gamma)));
  if (l_pred.defined()) acc = add(acc, scale(l_pred, static_cast<double>(w.delta)));
  return acc;
}

}  // namespace wireseg
