// SPDX-License-Identifier: Apache-2.0
#pragma once

// Named-parameter store for the segmentation models, LoRA adapter handling,
// and the single-file checkpoint archive (JSON manifest + raw float32
// payload, byte-exact round trip).

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wireseg/core/rng.hpp"
#include "wireseg/core/tensor.hpp"
#include "wireseg/model/config.hpp"

namespace wireseg {

struct Param {
  std::string name;
  Tensor t;
  bool frozen = false;
};

class ModelState {
 public:
  ModelConfig cfg;
  bool lora_attached = false;

  ModelState() = default;
  explicit ModelState(ModelConfig c) : cfg(c) { cfg.validate(); }

  Param& add(const std::string& name, int r, int c) {
    if (index_.count(name)) throw std::logic_error("duplicate parameter " + name);
    params_.push_back({name, Tensor::zeros(r, c, /*requires_grad=*/true), false});
    index_[name] = params_.size() - 1;
    return params_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Param& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter " + name);
    return params_[it->second];
  }
  const Param& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter " + name);
    return params_[it->second];
  }
  Tensor tensor(const std::string& name) const { return at(name).t; }

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  // Deep copy: fresh storage for every tensor, so two states never alias.
  ModelState clone() const {
    ModelState out(cfg);
    out.lora_attached = lora_attached;
    for (const auto& p : params_) {
      out.params_.push_back({p.name, p.t.clone_leaf(true), p.frozen});
      out.index_[p.name] = out.params_.size() - 1;
    }
    return out;
  }

  void zero_grads() {
    for (auto& p : params_) p.t.zero_grad();
  }

  void freeze_all() {
    for (auto& p : params_) p.frozen = true;
  }

  void set_frozen(const std::string& prefix, bool frozen) {
    for (auto& p : params_)
      if (p.name.rfind(prefix, 0) == 0) p.frozen = frozen;
  }

  uint64_t digest() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix_bytes = [&h](const void* data, size_t n) {
      const auto* b = static_cast<const unsigned char*>(data);
      for (size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ULL;
      }
    };
    for (const auto& p : params_) {
      mix_bytes(p.name.data(), p.name.size());
      mix_bytes(p.t.values().data(), p.t.values().size() * sizeof(double));
    }
    return h;
  }

 private:
  std::vector<Param> params_;
  std::map<std::string, size_t> index_;
};

namespace detail {
inline void init_normal(Tensor& t, Rng& rng, double std) {
  for (auto& v : t.values()) v = static_cast<double>(rng.normal(0.0, std));
}
inline void fill(Tensor& t, double v) {
  for (auto& x : t.values()) x = v;
}
}  // namespace detail

// Builds a freshly initialized model. The encoder is a pre-norm patch
// transformer; the decoder is either the prompt-conditioned cross-attention
// head or the plain prompt-free upsampling head.
inline ModelState init_model(const ModelConfig& cfg, uint64_t seed) {
  ModelState st(cfg);
  Rng rng(derive_seed(seed, 0x6d6f64656cULL));
  const int d = cfg.embed_dim;
  const int p2 = cfg.patch_size * cfg.patch_size;
  const double wstd = 0.02;

  auto add_normal = [&](const std::string& name, int r, int c, double std) {
    detail::init_normal(st.add(name, r, c).t, rng, std);
  };
  auto add_zeros = [&](const std::string& name, int r, int c) { st.add(name, r, c); };
  auto add_ln = [&](const std::string& prefix) {
    detail::fill(st.add(prefix + ".gamma", 1, d).t, 1.0);
    add_zeros(prefix + ".beta", 1, d);
  };

  add_normal("enc.patch.w", d, p2, std::sqrt(2.0 / (p2 + d)));
  add_zeros("enc.patch.b", 1, d);
  add_normal("enc.pos", cfg.tokens(), d, wstd);
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    const std::string pre = "enc.block" + std::to_string(l);
    add_ln(pre + ".ln1");
    for (const char* w : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"})
      add_normal(pre + w, d, d, std::sqrt(2.0 / (d + d)));
    for (const char* b : {".attn.bq", ".attn.bk", ".attn.bv", ".attn.bo"}) add_zeros(pre + b, 1, d);
    add_ln(pre + ".ln2");
    add_normal(pre + ".mlp.w1", 4 * d, d, std::sqrt(2.0 / (5 * d)));
    add_zeros(pre + ".mlp.b1", 1, 4 * d);
    add_normal(pre + ".mlp.w2", d, 4 * d, std::sqrt(2.0 / (5 * d)));
    add_zeros(pre + ".mlp.b2", 1, d);
  }
  add_ln("enc.ln_out");

  if (cfg.decoder_kind == DecoderKind::plain_conv_head) {
    add_ln("plain.ln");
    add_normal("plain.w1", 2 * d, d, std::sqrt(2.0 / (3 * d)));
    add_zeros("plain.b1", 1, 2 * d);
    add_normal("plain.w2", p2, 2 * d, std::sqrt(2.0 / (2 * d + p2)));
    add_zeros("plain.b2", 1, p2);
  } else {
    // Prompt encoder: learned type embeddings added to a sinusoidal
    // positional encoding of the prompt coordinate.
    add_normal("prm.point_pos", 1, d, wstd);
    add_normal("prm.point_neg", 1, d, wstd);
    add_normal("prm.box_min", 1, d, wstd);
    add_normal("prm.box_max", 1, d, wstd);
    add_normal("prm.no_prompt", 1, d, wstd);
    // Decoder: one cross-attention block (grid queries, prompt-token
    // keys/values) with layer-scaled residuals, then a per-cell pixel head.
    add_ln("dec.ln_q");
    add_ln("dec.ln_kv");
    for (const char* w : {"dec.attn.wq", "dec.attn.wk", "dec.attn.wv", "dec.attn.wo"})
      add_normal(w, d, d, std::sqrt(2.0 / (d + d)));
    for (const char* b : {"dec.attn.bq", "dec.attn.bk", "dec.attn.bv", "dec.attn.bo"})
      add_zeros(b, 1, d);
    detail::fill(st.add("dec.ls1", 1, d).t, 0.1);
    add_ln("dec.ln2");
    add_normal("dec.mlp.w1", 4 * d, d, std::sqrt(2.0 / (5 * d)));
    add_zeros("dec.mlp.b1", 1, 4 * d);
    add_normal("dec.mlp.w2", d, 4 * d, std::sqrt(2.0 / (5 * d)));
    add_zeros("dec.mlp.b2", 1, d);
    detail::fill(st.add("dec.ls2", 1, d).t, 0.1);
    add_ln("dec.ln_out");
    add_normal("dec.head.w", p2, d, std::sqrt(2.0 / (d + p2)));
    add_zeros("dec.head.b", 1, p2);
  }
  return st;
}

// Adds zero-initialized (A, B) low-rank pairs to every encoder attention
// query/value projection. The base encoder freezes; adapters and the
// decoder/prompt-encoder side stay trainable. B starts at zero so the
// adapted model is an exact identity delta at creation.
inline void attach_lora(ModelState& st, int rank, double scale, uint64_t seed) {
  if (rank < 1) throw std::invalid_argument("attach_lora: rank must be >= 1");
  if (st.lora_attached) throw std::logic_error("attach_lora: adapters already attached");
  st.cfg.lora_rank = rank;
  st.cfg.lora_scale = scale;
  Rng rng(derive_seed(seed, 0x6c6f7261ULL));
  const int d = st.cfg.embed_dim;
  for (int l = 0; l < st.cfg.encoder_layers; ++l) {
    const std::string pre = "enc.block" + std::to_string(l);
    for (const char* proj : {".attn.wq", ".attn.wv"}) {
      Param& a = st.add(pre + proj + ".lora_a", rank, d);
      detail::init_normal(a.t, rng, 1.0 / std::sqrt(static_cast<double>(d)));
      st.add(pre + proj + ".lora_b", d, rank);  // zero-initialized
    }
  }
  // Only adapters (plus decoder / prompt-encoder weights) stay trainable.
  st.set_frozen("enc.", true);
  for (auto& p : st.params())
    if (p.name.find(".lora_") != std::string::npos) p.frozen = false;
  st.lora_attached = true;
}

// Folds every adapter delta into its base projection and removes the
// adapters; base encoder weights stay frozen or not as they were.
inline void merge_lora(ModelState& st) {
  if (!st.lora_attached) throw std::logic_error("merge_lora: no adapters attached");
  const double s = st.cfg.lora_scale / st.cfg.lora_rank;
  ModelState out(st.cfg);
  out.lora_attached = false;
  for (const auto& p : st.params()) {
    if (p.name.find(".lora_") != std::string::npos) continue;
    Param& q = out.add(p.name, p.t.rows(), p.t.cols());
    q.t.values() = p.t.values();
    q.frozen = p.frozen;
  }
  for (int l = 0; l < st.cfg.encoder_layers; ++l) {
    const std::string pre = "enc.block" + std::to_string(l);
    for (const char* proj : {".attn.wq", ".attn.wv"}) {
      if (!st.has(pre + proj + ".lora_a")) continue;
      const Tensor& a = st.at(pre + proj + ".lora_a").t;  // [r, d]
      const Tensor& b = st.at(pre + proj + ".lora_b").t;  // [d, r]
      Tensor& w = out.at(pre + proj).t;                   // [d, d]
      const int d = st.cfg.embed_dim;
      const int r = st.cfg.lora_rank;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          double acc = 0.0;
          for (int k = 0; k < r; ++k)
            acc += static_cast<double>(b.value(i, k)) * a.value(k, j);
          w.values()[static_cast<size_t>(i) * d + j] += static_cast<double>(s * acc);
        }
    }
  }
  st = std::move(out);
}

// Marks every adapter pair immutable (teacher freeze after warm-up).
inline void freeze_adapters(ModelState& st) {
  if (!st.lora_attached) throw std::logic_error("freeze_adapters: no adapters attached");
  for (auto& p : st.params())
    if (p.name.find(".lora_") != std::string::npos) p.frozen = true;
}

// ---------------------------------------------------------------------------
// Checkpoint archive
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'W', 'S', 'C', 'K', 'P', 'T', '0', '1'};
inline constexpr int kCheckpointSchemaVersion = 1;

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"image_h", c.image_h},
          {"image_w", c.image_w},
          {"patch_size", c.patch_size},
          {"embed_dim", c.embed_dim},
          {"encoder_layers", c.encoder_layers},
          {"attention_heads", c.attention_heads},
          {"decoder_kind", to_string(c.decoder_kind)},
          {"lora_rank", c.lora_rank},
          {"lora_scale", c.lora_scale},
          {"binarize_threshold", c.binarize_threshold}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.image_h = j.at("image_h").get<int>();
  c.image_w = j.at("image_w").get<int>();
  c.patch_size = j.at("patch_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.encoder_layers = j.at("encoder_layers").get<int>();
  c.attention_heads = j.at("attention_heads").get<int>();
  c.decoder_kind = parse_decoder_kind(j.at("decoder_kind").get<std::string>());
  c.lora_rank = j.at("lora_rank").get<int>();
  c.lora_scale = j.at("lora_scale").get<double>();
  c.binarize_threshold = j.at("binarize_threshold").get<double>();
  return c;
}

inline void save_checkpoint(const ModelState& st, const std::string& path) {
  nlohmann::json manifest;
  manifest["schema_version"] = kCheckpointSchemaVersion;
  manifest["config"] = model_config_to_json(st.cfg);
  manifest["lora_attached"] = st.lora_attached;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : st.params())
    tensors.push_back({{"name", p.name},
                       {"rows", p.t.rows()},
                       {"cols", p.t.cols()},
                       {"frozen", p.frozen}});
  manifest["tensors"] = tensors;
  const std::string mjson = manifest.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  f.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const uint64_t mlen = mjson.size();
  f.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  f.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));
  std::vector<float> buf;
  for (const auto& p : st.params()) {
    buf.resize(p.t.values().size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(p.t.values()[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

inline ModelState load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[sizeof(kCheckpointMagic)];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a checkpoint archive: " + path);
  uint64_t mlen = 0;
  f.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  std::string mjson(mlen, '\0');
  f.read(mjson.data(), static_cast<std::streamsize>(mlen));
  if (!f) throw std::runtime_error("truncated checkpoint manifest: " + path);
  const nlohmann::json manifest = nlohmann::json::parse(mjson);
  if (manifest.at("schema_version").get<int>() != kCheckpointSchemaVersion)
    throw std::runtime_error("unsupported checkpoint schema version");

  ModelState st(model_config_from_json(manifest.at("config")));
  st.lora_attached = manifest.at("lora_attached").get<bool>();
  std::vector<float> buf;
  for (const auto& tj : manifest.at("tensors")) {
    Param& p = st.add(tj.at("name").get<std::string>(), tj.at("rows").get<int>(),
                      tj.at("cols").get<int>());
    p.frozen = tj.at("frozen").get<bool>();
    buf.resize(p.t.values().size());
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw std::runtime_error("truncated checkpoint payload: " + path);
    for (size_t i = 0; i < buf.size(); ++i) p.t.values()[i] = static_cast<double>(buf[i]);
  }
  return st;
}

inline uint64_t file_digest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for digest: " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof(buf));
    const std::streamsize n = f.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

inline std::string hex64(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace wireseg
