// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace wireseg {

enum class DecoderKind { plain_conv_head, prompt_decoder };

inline DecoderKind parse_decoder_kind(const std::string& s) {
  if (s == "plain_conv_head") return DecoderKind::plain_conv_head;
  if (s == "prompt_decoder") return DecoderKind::prompt_decoder;
  throw std::invalid_argument("unknown decoder kind: " + s);
}

inline const char* to_string(DecoderKind k) {
  return k == DecoderKind::plain_conv_head ? "plain_conv_head" : "prompt_decoder";
}

struct ModelConfig {
  int image_h = 256;
  int image_w = 256;
  int patch_size = 16;
  int embed_dim = 96;
  int encoder_layers = 6;
  int attention_heads = 4;
  DecoderKind decoder_kind = DecoderKind::prompt_decoder;
  int lora_rank = 4;
  double lora_scale = 1.0;
  double binarize_threshold = 0.5;

  int grid_h() const { return image_h / patch_size; }
  int grid_w() const { return image_w / patch_size; }
  int tokens() const { return grid_h() * grid_w(); }
  int head_dim() const { return embed_dim / attention_heads; }

  void validate() const {
    if (patch_size <= 0 || image_h % patch_size != 0 || image_w % patch_size != 0)
      throw std::invalid_argument("ModelConfig: image size must be divisible by patch size");
    if (embed_dim <= 0 || attention_heads <= 0 || embed_dim % attention_heads != 0)
      throw std::invalid_argument("ModelConfig: embed_dim must be divisible by attention_heads");
    if (encoder_layers <= 0) throw std::invalid_argument("ModelConfig: encoder_layers must be >= 1");
    if (lora_rank < 0) throw std::invalid_argument("ModelConfig: lora_rank must be >= 0");
    if (binarize_threshold <= 0.0 || binarize_threshold >= 1.0)
      throw std::invalid_argument("ModelConfig: binarize_threshold must lie in (0,1)");
  }

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace wireseg
