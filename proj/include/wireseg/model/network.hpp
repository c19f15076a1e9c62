// SPDX-License-Identifier: Apache-2.0
#pragma once

// Forward passes of the promptable segmentation network: patch-transformer
// image encoder with optional low-rank adapters, coordinate prompt encoder,
// cross-attention mask decoder, and the prompt-free plain head used by the
// coarse stage.

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "wireseg/core/image.hpp"
#include "wireseg/core/tensor.hpp"
#include "wireseg/model/state.hpp"
#include "wireseg/prompt/prompts.hpp"

namespace wireseg {

struct ImageEmbedding {
  Tensor tokens;  // [grid_h * grid_w, embed_dim], row-major cells
  int grid_h = 0;
  int grid_w = 0;
};

struct PromptEmbedding {
  Tensor tokens;  // [T, embed_dim], T >= 1 (no-prompt token when empty)
  int count = 0;
};

struct MaskLogits {
  Tensor grid;  // [H, W]
};

namespace detail {

inline std::shared_ptr<std::vector<uint32_t>> patchify_index(int H, int W, int p) {
  auto idx = std::make_shared<std::vector<uint32_t>>(static_cast<size_t>(H) * W);
  const int gw = W / p;
  size_t k = 0;
  for (int gy = 0; gy < H / p; ++gy)
    for (int gx = 0; gx < gw; ++gx)
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx)
          (*idx)[k++] = static_cast<uint32_t>((gy * p + dy) * W + gx * p + dx);
  return idx;
}

inline std::shared_ptr<std::vector<uint32_t>> depatchify_index(int H, int W, int p) {
  auto idx = std::make_shared<std::vector<uint32_t>>(static_cast<size_t>(H) * W);
  const int gw = W / p;
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      const int gy = r / p, gx = c / p, dy = r % p, dx = c % p;
      (*idx)[static_cast<size_t>(r) * W + c] =
          static_cast<uint32_t>((gy * gw + gx) * p * p + dy * p + dx);
    }
  return idx;
}

// q/k/v/o multi-head attention over row-token matrices.
inline Tensor multihead_attention(const Tensor& q_in, const Tensor& kv_in, const ModelState& st,
                                  const std::string& pre, int heads, const Tensor* lora_q_a,
                                  const Tensor* lora_q_b, const Tensor* lora_v_a,
                                  const Tensor* lora_v_b, double lora_scale, int lora_rank) {
  const int d = q_in.cols();
  const int dh = d / heads;
  Tensor q = linear(q_in, st.tensor(pre + ".wq"), st.tensor(pre + ".bq"));
  Tensor k = linear(kv_in, st.tensor(pre + ".wk"), st.tensor(pre + ".bk"));
  Tensor v = linear(kv_in, st.tensor(pre + ".wv"), st.tensor(pre + ".bv"));
  if (lora_q_a) {
    const double s = static_cast<double>(lora_scale / lora_rank);
    q = add(q, scale(matmul(matmul(q_in, *lora_q_a, false, true), *lora_q_b, false, true), s));
    v = add(v, scale(matmul(matmul(kv_in, *lora_v_a, false, true), *lora_v_b, false, true), s));
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    Tensor scores = scale(matmul(qh, kh, false, true), inv_sqrt);
    Tensor attn = softmax_rows(scores);
    head_outs.push_back(matmul(attn, vh));
  }
  Tensor cat = concat_cols(head_outs);
  return linear(cat, st.tensor(pre + ".wo"), st.tensor(pre + ".bo"));
}

inline Tensor mlp_block(const Tensor& x, const ModelState& st, const std::string& pre) {
  Tensor h = gelu(linear(x, st.tensor(pre + ".w1"), st.tensor(pre + ".b1")));
  return linear(h, st.tensor(pre + ".w2"), st.tensor(pre + ".b2"));
}

inline Tensor layernorm_named(const Tensor& x, const ModelState& st, const std::string& pre) {
  return layernorm_rows(x, st.tensor(pre + ".gamma"), st.tensor(pre + ".beta"));
}

// 2-D sinusoidal positional encoding of a normalized coordinate, length d.
// First half encodes the row, second half the column.
inline std::vector<double> sincos_position(double ny, double nx, int d) {
  std::vector<double> out(static_cast<size_t>(d), 0.0);
  const int half = d / 2;
  auto fill = [&](int offset, int n, double coord) {
    for (int i = 0; i < n; ++i) {
      const double freq = std::pow(10000.0, -2.0 * (i / 2) / n);
      const double v = coord * freq * 2.0 * M_PI;
      out[static_cast<size_t>(offset + i)] =
          static_cast<double>((i % 2 == 0) ? std::sin(v) : std::cos(v));
    }
  };
  fill(0, half, ny);
  fill(half, d - half, nx);
  return out;
}

}  // namespace detail

inline void check_image_shape(const ModelState& st, const Image& img) {
  if (img.h != st.cfg.image_h || img.w != st.cfg.image_w)
    throw std::invalid_argument("image shape does not match model config");
}

// z = f(x; encoder weights [+ adapters]). Input intensities are mapped from
// [0,255] to [-1,1] before patch projection.
inline ImageEmbedding encode_image(const ModelState& st, const Image& img) {
  check_image_shape(st, img);
  const ModelConfig& c = st.cfg;
  std::vector<double> norm(img.px.size());
  for (size_t i = 0; i < norm.size(); ++i) norm[i] = img.px[i] / 127.5 - 1.0;
  Tensor x = Tensor::from(img.h, img.w, std::move(norm));
  Tensor patches = gather(x, detail::patchify_index(c.image_h, c.image_w, c.patch_size),
                          c.tokens(), c.patch_size * c.patch_size);
  Tensor t = linear(patches, st.tensor("enc.patch.w"), st.tensor("enc.patch.b"));
  t = add(t, st.tensor("enc.pos"));
  for (int l = 0; l < c.encoder_layers; ++l) {
    const std::string pre = "enc.block" + std::to_string(l);
    Tensor h = detail::layernorm_named(t, st, pre + ".ln1");
    const Tensor *qa = nullptr, *qb = nullptr, *va = nullptr, *vb = nullptr;
    if (st.lora_attached) {
      qa = &st.at(pre + ".attn.wq.lora_a").t;
      qb = &st.at(pre + ".attn.wq.lora_b").t;
      va = &st.at(pre + ".attn.wv.lora_a").t;
      vb = &st.at(pre + ".attn.wv.lora_b").t;
    }
    Tensor attn = detail::multihead_attention(h, h, st, pre + ".attn", c.attention_heads, qa, qb,
                                              va, vb, c.lora_scale, c.lora_rank);
    t = add(t, attn);
    Tensor m = detail::mlp_block(detail::layernorm_named(t, st, pre + ".ln2"), st, pre + ".mlp");
    t = add(t, m);
  }
  t = detail::layernorm_named(t, st, "enc.ln_out");
  return {t, c.grid_h(), c.grid_w()};
}

// e = g(w; prompt-encoder weights). One token per point, two per box; an
// empty prompt set yields exactly the learned no-prompt token.
inline PromptEmbedding encode_prompts(const ModelState& st, const PromptSet& prompts) {
  if (st.cfg.decoder_kind != DecoderKind::prompt_decoder)
    throw std::logic_error("encode_prompts: model has no prompt path");
  const ModelConfig& c = st.cfg;
  auto posenc = [&](int row, int col) {
    if (row < 0 || row >= c.image_h || col < 0 || col >= c.image_w)
      throw std::invalid_argument("encode_prompts: prompt coordinate out of bounds");
    return Tensor::from(1, c.embed_dim,
                        detail::sincos_position((row + 0.5) / c.image_h, (col + 0.5) / c.image_w,
                                                c.embed_dim));
  };
  std::vector<Tensor> tokens;
  for (const Box& b : prompts.boxes) {
    if (b.row_min > b.row_max || b.col_min > b.col_max)
      throw std::invalid_argument("encode_prompts: malformed box");
    tokens.push_back(add(posenc(b.row_min, b.col_min), st.tensor("prm.box_min")));
    tokens.push_back(add(posenc(b.row_max, b.col_max), st.tensor("prm.box_max")));
  }
  for (const PromptPoint& p : prompts.points) {
    const Tensor& type = p.polarity == PointPolarity::positive ? st.tensor("prm.point_pos")
                                                               : st.tensor("prm.point_neg");
    tokens.push_back(add(posenc(p.row, p.col), type));
  }
  if (tokens.empty()) tokens.push_back(st.tensor("prm.no_prompt"));
  Tensor t = tokens.size() == 1 ? tokens.front() : concat_rows(tokens);
  return {t, static_cast<int>(tokens.size())};
}

// h(z, e): grid cells cross-attend to the prompt tokens (token pooling is
// symmetric by softmax), then an MLP and a per-cell pixel head.
inline MaskLogits decode_mask(const ModelState& st, const ImageEmbedding& z,
                              const PromptEmbedding& e) {
  if (st.cfg.decoder_kind != DecoderKind::prompt_decoder)
    throw std::logic_error("decode_mask: decoder_kind is not prompt_decoder");
  const ModelConfig& c = st.cfg;
  if (z.tokens.rows() != c.tokens() || z.tokens.cols() != c.embed_dim)
    throw std::invalid_argument("decode_mask: embedding shape mismatch");
  Tensor g = z.tokens;
  Tensor q = detail::layernorm_named(g, st, "dec.ln_q");
  Tensor kv = detail::layernorm_named(e.tokens, st, "dec.ln_kv");
  Tensor attn = detail::multihead_attention(q, kv, st, "dec.attn", c.attention_heads, nullptr,
                                            nullptr, nullptr, nullptr, 0.0, 0);
  g = add(g, mul_rowvec(attn, st.tensor("dec.ls1")));
  Tensor m = detail::mlp_block(detail::layernorm_named(g, st, "dec.ln2"), st, "dec.mlp");
  g = add(g, mul_rowvec(m, st.tensor("dec.ls2")));
  Tensor cells = linear(detail::layernorm_named(g, st, "dec.ln_out"), st.tensor("dec.head.w"),
                        st.tensor("dec.head.b"));
  Tensor flat = reshape(cells, 1, c.image_h * c.image_w);
  Tensor logits = gather(flat, detail::depatchify_index(c.image_h, c.image_w, c.patch_size),
                         c.image_h, c.image_w);
  return {logits};
}

// Prompt-free coarse head: per-cell MLP straight to pixel logits.
inline MaskLogits plain_decode(const ModelState& st, const ImageEmbedding& z) {
  if (st.cfg.decoder_kind != DecoderKind::plain_conv_head)
    throw std::logic_error("plain_decode: decoder_kind is not plain_conv_head");
  const ModelConfig& c = st.cfg;
  if (z.tokens.rows() != c.tokens() || z.tokens.cols() != c.embed_dim)
    throw std::invalid_argument("plain_decode: embedding shape mismatch");
  Tensor h = relu(linear(detail::layernorm_named(z.tokens, st, "plain.ln"), st.tensor("plain.w1"),
                         st.tensor("plain.b1")));
  Tensor cells = linear(h, st.tensor("plain.w2"), st.tensor("plain.b2"));
  Tensor flat = reshape(cells, 1, c.image_h * c.image_w);
  Tensor logits = gather(flat, detail::depatchify_index(c.image_h, c.image_w, c.patch_size),
                         c.image_h, c.image_w);
  return {logits};
}

// Sigmoid >= threshold.
inline Mask binarize(const MaskLogits& logits, double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0)
    throw std::invalid_argument("binarize: threshold must lie in (0,1)");
  Mask m(logits.grid.rows(), logits.grid.cols());
  const auto& lv = logits.grid.values();
  for (size_t i = 0; i < lv.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(lv[i])));
    m.v[i] = p >= threshold ? 1 : 0;
  }
  return m;
}

// Convenience: full forward in the model's own decoder mode.
inline MaskLogits forward_logits(const ModelState& st, const Image& img, const PromptSet& prompts) {
  ImageEmbedding z = encode_image(st, img);
  if (st.cfg.decoder_kind == DecoderKind::plain_conv_head) return plain_decode(st, z);
  return decode_mask(st, z, encode_prompts(st, prompts));
}

}  // namespace wireseg
