// SPDX-License-Identifier: Apache-2.0
#pragma once

// Declarative run configuration: one JSON file holding every hyperparameter
// of the pipeline. Loading is strict (unknown keys rejected with their path),
// defaults follow the published training recipe, and load(dump(c)) == c.

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "wireseg/aug/perturb.hpp"
#include "wireseg/loss/losses.hpp"
#include "wireseg/model/config.hpp"
#include "wireseg/pseudo/dbscan.hpp"
#include "wireseg/synth/background.hpp"
#include "wireseg/synth/composite.hpp"
#include "wireseg/train/trainer.hpp"

namespace wireseg {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                                const std::string& path) {
  if (!j.is_object()) throw ConfigError("config: " + path + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError("config: unknown key '" + path + key + "'");
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, const T& fallback,
         const std::string& path) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: bad value type at '" + path + key + "'");
  }
}

}  // namespace detail

// Per-scene sampling ranges for the procedural source generator.
struct SynthRanges {
  int height = 128;
  int width = 128;
  int control_points_lo = 5;
  int control_points_hi = 7;
  double wire_width_lo = 2.0;
  double wire_width_hi = 3.0;
  double wire_intensity_lo = 30.0;
  double wire_intensity_hi = 70.0;
  double background_intensity_lo = 190.0;
  double background_intensity_hi = 215.0;
};

struct BenchConfig {
  int n_source = 64;        // distinct procedural source scenes
  int n_synth = 254;        // synthesized set size
  int n_target_train = 200;
  int n_target_test = 50;
  int pool_size = 24;
  double pseudo_threshold = 0.5;
  int baseline_epochs = 0;  // 0 = reuse schedule.coarse_epochs
};

struct PathsConfig {
  std::string source_dir;
  std::string target_train_dir;
  std::string target_test_dir;
  std::string pool_dir;
  std::string pseudo_dir;
  std::string coarse_ckpt;
  std::string teacher_ckpt;
  std::string student_ckpt;
};

struct RunConfig {
  uint64_t seed = 42;
  ModelConfig model;
  LossConfig loss;
  LossWeights weights_warmup{0.0, 1.0, 0.5, 1.0};
  LossWeights weights_selftrain{5.0, 0.0, 1.0, 0.0};
  ScheduleConfig schedule;
  AugmentationPolicy augment;
  ClusterParams cluster;
  double cluster_threshold = 0.5;
  NoiseParams noise;
  SynthRanges synth;
  VesselBackgroundParams background;
  BenchConfig bench;
  PathsConfig paths;

  void validate() const {
    model.validate();
    loss.validate();
    weights_warmup.validate();
    weights_selftrain.validate();
    ScheduleConfig sched = schedule;
    sched.weights_warmup = weights_warmup;
    sched.weights_selftrain = weights_selftrain;
    sched.validate();
    augment.validate();
    cluster.validate();
    noise.validate();
    if (cluster_threshold <= 0.0 || cluster_threshold >= 1.0)
      throw ConfigError("config: cluster.threshold must lie in (0,1)");
    if (bench.n_source < 1 || bench.n_synth < 1 || bench.n_target_train < 1 ||
        bench.n_target_test < 1 || bench.pool_size < 1)
      throw ConfigError("config: bench counts must be >= 1");
  }

  // The schedule with the weight pairs folded in (single source of truth for
  // the trainer).
  ScheduleConfig effective_schedule() const {
    ScheduleConfig s = schedule;
    s.weights_warmup = weights_warmup;
    s.weights_selftrain = weights_selftrain;
    return s;
  }
};

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["model"] = model_config_to_json(c.model);
  j["loss"] = {{"eps_dice", c.loss.eps_dice},
               {"focal_exponent", c.loss.focal_exponent},
               {"tau", c.loss.tau},
               {"lambda_ts", c.loss.lambda_ts},
               {"lambda_ts_prime", c.loss.lambda_ts_prime},
               {"lambda_ws_stu", c.loss.lambda_ws_stu},
               {"lambda_ws_stu_prime", c.loss.lambda_ws_stu_prime},
               {"lambda_ws_tea", c.loss.lambda_ws_tea},
               {"lambda_ws_tea_prime", c.loss.lambda_ws_tea_prime},
               {"lambda_c_focal", c.loss.lambda_c_focal},
               {"lambda_c_dice", c.loss.lambda_c_dice},
               {"prob_clamp", c.loss.prob_clamp},
               {"embedding_loss_form",
                c.loss.embedding_loss_form == EmbeddingLossForm::infonce ? "infonce"
                                                                         : "attraction_only"}};
  j["weights_warmup"] = detail::weights_json(c.weights_warmup);
  j["weights_selftrain"] = detail::weights_json(c.weights_selftrain);
  j["schedule"] = {{"warmup_epochs", c.schedule.warmup_epochs},
                   {"total_epochs", c.schedule.total_epochs},
                   {"coarse_epochs", c.schedule.coarse_epochs},
                   {"learning_rate", c.schedule.learning_rate},
                   {"batch_size_train", c.schedule.batch_size_train},
                   {"batch_size_eval", c.schedule.batch_size_eval},
                   {"fine_sample_count", c.schedule.fine_sample_count},
                   {"teacher_prompt_mode", c.schedule.teacher_prompt_mode},
                   {"point_prompt_n", c.schedule.point_prompt_n},
                   {"eval_every", c.schedule.eval_every}};
  j["augment"] = {{"intensity_jitter", c.augment.intensity_jitter},
                  {"blur_sigma_lo", c.augment.blur_sigma_lo},
                  {"blur_sigma_hi", c.augment.blur_sigma_hi},
                  {"noise_sigma", c.augment.noise_sigma},
                  {"erase_count", c.augment.erase_count},
                  {"erase_size_lo", c.augment.erase_size_lo},
                  {"erase_size_hi", c.augment.erase_size_hi}};
  j["cluster"] = {{"eps", c.cluster.eps},
                  {"min_pts", c.cluster.min_pts},
                  {"min_cluster_size", c.cluster.min_cluster_size},
                  {"keep_top_k", c.cluster.keep_top_k},
                  {"threshold", c.cluster_threshold}};
  j["noise"] = {{"sigma", c.noise.sigma}};
  j["synth"] = {{"height", c.synth.height},
                {"width", c.synth.width},
                {"control_points_lo", c.synth.control_points_lo},
                {"control_points_hi", c.synth.control_points_hi},
                {"wire_width_lo", c.synth.wire_width_lo},
                {"wire_width_hi", c.synth.wire_width_hi},
                {"wire_intensity_lo", c.synth.wire_intensity_lo},
                {"wire_intensity_hi", c.synth.wire_intensity_hi},
                {"background_intensity_lo", c.synth.background_intensity_lo},
                {"background_intensity_hi", c.synth.background_intensity_hi}};
  j["background"] = {{"base_lo", c.background.base_lo},
                     {"base_hi", c.background.base_hi},
                     {"texture_amplitude", c.background.texture_amplitude},
                     {"coarse_cells", c.background.coarse_cells},
                     {"vessel_count_lo", c.background.vessel_count_lo},
                     {"vessel_count_hi", c.background.vessel_count_hi},
                     {"vessel_width_lo", c.background.vessel_width_lo},
                     {"vessel_width_hi", c.background.vessel_width_hi},
                     {"vessel_depth_lo", c.background.vessel_depth_lo},
                     {"vessel_depth_hi", c.background.vessel_depth_hi},
                     {"noise_sigma", c.background.noise_sigma}};
  j["bench"] = {{"n_source", c.bench.n_source},
                {"n_synth", c.bench.n_synth},
                {"n_target_train", c.bench.n_target_train},
                {"n_target_test", c.bench.n_target_test},
                {"pool_size", c.bench.pool_size},
                {"pseudo_threshold", c.bench.pseudo_threshold},
                {"baseline_epochs", c.bench.baseline_epochs}};
  j["paths"] = {{"source_dir", c.paths.source_dir},
                {"target_train_dir", c.paths.target_train_dir},
                {"target_test_dir", c.paths.target_test_dir},
                {"pool_dir", c.paths.pool_dir},
                {"pseudo_dir", c.paths.pseudo_dir},
                {"coarse_ckpt", c.paths.coarse_ckpt},
                {"teacher_ckpt", c.paths.teacher_ckpt},
                {"student_ckpt", c.paths.student_ckpt}};
  return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using detail::get_or;
  using detail::reject_unknown_keys;
  RunConfig c;
  reject_unknown_keys(j, {"seed", "model", "loss", "weights_warmup", "weights_selftrain",
                          "schedule", "augment", "cluster", "noise", "synth", "background",
                          "bench", "paths"},
                      "");
  c.seed = get_or<uint64_t>(j, "seed", c.seed, "");

  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown_keys(m,
                        {"image_h", "image_w", "patch_size", "embed_dim", "encoder_layers",
                         "attention_heads", "decoder_kind", "lora_rank", "lora_scale",
                         "binarize_threshold"},
                        "model.");
    c.model.image_h = get_or<int>(m, "image_h", c.model.image_h, "model.");
    c.model.image_w = get_or<int>(m, "image_w", c.model.image_w, "model.");
    c.model.patch_size = get_or<int>(m, "patch_size", c.model.patch_size, "model.");
    c.model.embed_dim = get_or<int>(m, "embed_dim", c.model.embed_dim, "model.");
    c.model.encoder_layers = get_or<int>(m, "encoder_layers", c.model.encoder_layers, "model.");
    c.model.attention_heads =
        get_or<int>(m, "attention_heads", c.model.attention_heads, "model.");
    c.model.decoder_kind = parse_decoder_kind(
        get_or<std::string>(m, "decoder_kind", to_string(c.model.decoder_kind), "model."));
    c.model.lora_rank = get_or<int>(m, "lora_rank", c.model.lora_rank, "model.");
    c.model.lora_scale = get_or<double>(m, "lora_scale", c.model.lora_scale, "model.");
    c.model.binarize_threshold =
        get_or<double>(m, "binarize_threshold", c.model.binarize_threshold, "model.");
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    reject_unknown_keys(l,
                        {"eps_dice", "focal_exponent", "tau", "lambda_ts", "lambda_ts_prime",
                         "lambda_ws_stu", "lambda_ws_stu_prime", "lambda_ws_tea",
                         "lambda_ws_tea_prime", "lambda_c_focal", "lambda_c_dice", "prob_clamp",
                         "embedding_loss_form"},
                        "loss.");
    c.loss.eps_dice = get_or<double>(l, "eps_dice", c.loss.eps_dice, "loss.");
    c.loss.focal_exponent = get_or<double>(l, "focal_exponent", c.loss.focal_exponent, "loss.");
    c.loss.tau = get_or<double>(l, "tau", c.loss.tau, "loss.");
    c.loss.lambda_ts = get_or<double>(l, "lambda_ts", c.loss.lambda_ts, "loss.");
    c.loss.lambda_ts_prime = get_or<double>(l, "lambda_ts_prime", c.loss.lambda_ts_prime, "loss.");
    c.loss.lambda_ws_stu = get_or<double>(l, "lambda_ws_stu", c.loss.lambda_ws_stu, "loss.");
    c.loss.lambda_ws_stu_prime =
        get_or<double>(l, "lambda_ws_stu_prime", c.loss.lambda_ws_stu_prime, "loss.");
    c.loss.lambda_ws_tea = get_or<double>(l, "lambda_ws_tea", c.loss.lambda_ws_tea, "loss.");
    c.loss.lambda_ws_tea_prime =
        get_or<double>(l, "lambda_ws_tea_prime", c.loss.lambda_ws_tea_prime, "loss.");
    c.loss.lambda_c_focal = get_or<double>(l, "lambda_c_focal", c.loss.lambda_c_focal, "loss.");
    c.loss.lambda_c_dice = get_or<double>(l, "lambda_c_dice", c.loss.lambda_c_dice, "loss.");
    c.loss.prob_clamp = get_or<double>(l, "prob_clamp", c.loss.prob_clamp, "loss.");
    const std::string form =
        get_or<std::string>(l, "embedding_loss_form",
                            c.loss.embedding_loss_form == EmbeddingLossForm::infonce
                                ? "infonce"
                                : "attraction_only",
                            "loss.");
    if (form == "infonce")
      c.loss.embedding_loss_form = EmbeddingLossForm::infonce;
    else if (form == "attraction_only")
      c.loss.embedding_loss_form = EmbeddingLossForm::attraction_only;
    else
      throw ConfigError("config: loss.embedding_loss_form must be infonce|attraction_only");
  }
  auto read_weights = [&](const char* key, LossWeights& w) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    reject_unknown_keys(v, {"alpha", "beta", "gamma", "delta"}, std::string(key) + ".");
    w.alpha = get_or<double>(v, "alpha", w.alpha, key);
    w.beta = get_or<double>(v, "beta", w.beta, key);
    w.gamma = get_or<double>(v, "gamma", w.gamma, key);
    w.delta = get_or<double>(v, "delta", w.delta, key);
  };
  read_weights("weights_warmup", c.weights_warmup);
  read_weights("weights_selftrain", c.weights_selftrain);
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    reject_unknown_keys(s,
                        {"warmup_epochs", "total_epochs", "coarse_epochs", "learning_rate",
                         "batch_size_train", "batch_size_eval", "fine_sample_count",
                         "teacher_prompt_mode", "point_prompt_n", "eval_every"},
                        "schedule.");
    c.schedule.warmup_epochs = get_or<int>(s, "warmup_epochs", c.schedule.warmup_epochs, "schedule.");
    c.schedule.total_epochs = get_or<int>(s, "total_epochs", c.schedule.total_epochs, "schedule.");
    c.schedule.coarse_epochs = get_or<int>(s, "coarse_epochs", c.schedule.coarse_epochs, "schedule.");
    c.schedule.learning_rate =
        get_or<double>(s, "learning_rate", c.schedule.learning_rate, "schedule.");
    c.schedule.batch_size_train =
        get_or<int>(s, "batch_size_train", c.schedule.batch_size_train, "schedule.");
    c.schedule.batch_size_eval =
        get_or<int>(s, "batch_size_eval", c.schedule.batch_size_eval, "schedule.");
    c.schedule.fine_sample_count =
        get_or<int>(s, "fine_sample_count", c.schedule.fine_sample_count, "schedule.");
    c.schedule.teacher_prompt_mode =
        get_or<std::string>(s, "teacher_prompt_mode", c.schedule.teacher_prompt_mode, "schedule.");
    c.schedule.point_prompt_n = get_or<int>(s, "point_prompt_n", c.schedule.point_prompt_n, "schedule.");
    c.schedule.eval_every = get_or<int>(s, "eval_every", c.schedule.eval_every, "schedule.");
  }
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    reject_unknown_keys(a,
                        {"intensity_jitter", "blur_sigma_lo", "blur_sigma_hi", "noise_sigma",
                         "erase_count", "erase_size_lo", "erase_size_hi"},
                        "augment.");
    c.augment.intensity_jitter =
        get_or<double>(a, "intensity_jitter", c.augment.intensity_jitter, "augment.");
    c.augment.blur_sigma_lo = get_or<double>(a, "blur_sigma_lo", c.augment.blur_sigma_lo, "augment.");
    c.augment.blur_sigma_hi = get_or<double>(a, "blur_sigma_hi", c.augment.blur_sigma_hi, "augment.");
    c.augment.noise_sigma = get_or<double>(a, "noise_sigma", c.augment.noise_sigma, "augment.");
    c.augment.erase_count = get_or<int>(a, "erase_count", c.augment.erase_count, "augment.");
    c.augment.erase_size_lo = get_or<int>(a, "erase_size_lo", c.augment.erase_size_lo, "augment.");
    c.augment.erase_size_hi = get_or<int>(a, "erase_size_hi", c.augment.erase_size_hi, "augment.");
  }
  if (j.contains("cluster")) {
    const auto& cl = j.at("cluster");
    reject_unknown_keys(cl, {"eps", "min_pts", "min_cluster_size", "keep_top_k", "threshold"},
                        "cluster.");
    c.cluster.eps = get_or<double>(cl, "eps", c.cluster.eps, "cluster.");
    c.cluster.min_pts = get_or<int>(cl, "min_pts", c.cluster.min_pts, "cluster.");
    c.cluster.min_cluster_size =
        get_or<int>(cl, "min_cluster_size", c.cluster.min_cluster_size, "cluster.");
    c.cluster.keep_top_k = get_or<int>(cl, "keep_top_k", c.cluster.keep_top_k, "cluster.");
    c.cluster_threshold = get_or<double>(cl, "threshold", c.cluster_threshold, "cluster.");
  }
  if (j.contains("noise")) {
    reject_unknown_keys(j.at("noise"), {"sigma"}, "noise.");
    c.noise.sigma = get_or<double>(j.at("noise"), "sigma", c.noise.sigma, "noise.");
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    reject_unknown_keys(s,
                        {"height", "width", "control_points_lo", "control_points_hi",
                         "wire_width_lo", "wire_width_hi", "wire_intensity_lo", "wire_intensity_hi",
                         "background_intensity_lo", "background_intensity_hi"},
                        "synth.");
    c.synth.height = get_or<int>(s, "height", c.synth.height, "synth.");
    c.synth.width = get_or<int>(s, "width", c.synth.width, "synth.");
    c.synth.control_points_lo = get_or<int>(s, "control_points_lo", c.synth.control_points_lo, "synth.");
    c.synth.control_points_hi = get_or<int>(s, "control_points_hi", c.synth.control_points_hi, "synth.");
    c.synth.wire_width_lo = get_or<double>(s, "wire_width_lo", c.synth.wire_width_lo, "synth.");
    c.synth.wire_width_hi = get_or<double>(s, "wire_width_hi", c.synth.wire_width_hi, "synth.");
    c.synth.wire_intensity_lo =
        get_or<double>(s, "wire_intensity_lo", c.synth.wire_intensity_lo, "synth.");
    c.synth.wire_intensity_hi =
        get_or<double>(s, "wire_intensity_hi", c.synth.wire_intensity_hi, "synth.");
    c.synth.background_intensity_lo =
        get_or<double>(s, "background_intensity_lo", c.synth.background_intensity_lo, "synth.");
    c.synth.background_intensity_hi =
        get_or<double>(s, "background_intensity_hi", c.synth.background_intensity_hi, "synth.");
  }
  if (j.contains("background")) {
    const auto& b = j.at("background");
    reject_unknown_keys(b,
                        {"base_lo", "base_hi", "texture_amplitude", "coarse_cells",
                         "vessel_count_lo", "vessel_count_hi", "vessel_width_lo",
                         "vessel_width_hi", "vessel_depth_lo", "vessel_depth_hi", "noise_sigma"},
                        "background.");
    c.background.base_lo = get_or<double>(b, "base_lo", c.background.base_lo, "background.");
    c.background.base_hi = get_or<double>(b, "base_hi", c.background.base_hi, "background.");
    c.background.texture_amplitude =
        get_or<double>(b, "texture_amplitude", c.background.texture_amplitude, "background.");
    c.background.coarse_cells = get_or<int>(b, "coarse_cells", c.background.coarse_cells, "background.");
    c.background.vessel_count_lo =
        get_or<int>(b, "vessel_count_lo", c.background.vessel_count_lo, "background.");
    c.background.vessel_count_hi =
        get_or<int>(b, "vessel_count_hi", c.background.vessel_count_hi, "background.");
    c.background.vessel_width_lo =
        get_or<double>(b, "vessel_width_lo", c.background.vessel_width_lo, "background.");
    c.background.vessel_width_hi =
        get_or<double>(b, "vessel_width_hi", c.background.vessel_width_hi, "background.");
    c.background.vessel_depth_lo =
        get_or<double>(b, "vessel_depth_lo", c.background.vessel_depth_lo, "background.");
    c.background.vessel_depth_hi =
        get_or<double>(b, "vessel_depth_hi", c.background.vessel_depth_hi, "background.");
    c.background.noise_sigma = get_or<double>(b, "noise_sigma", c.background.noise_sigma, "background.");
  }
  if (j.contains("bench")) {
    const auto& b = j.at("bench");
    reject_unknown_keys(b,
                        {"n_source", "n_synth", "n_target_train", "n_target_test", "pool_size",
                         "pseudo_threshold", "baseline_epochs"},
                        "bench.");
    c.bench.n_source = get_or<int>(b, "n_source", c.bench.n_source, "bench.");
    c.bench.n_synth = get_or<int>(b, "n_synth", c.bench.n_synth, "bench.");
    c.bench.n_target_train = get_or<int>(b, "n_target_train", c.bench.n_target_train, "bench.");
    c.bench.n_target_test = get_or<int>(b, "n_target_test", c.bench.n_target_test, "bench.");
    c.bench.pool_size = get_or<int>(b, "pool_size", c.bench.pool_size, "bench.");
    c.bench.pseudo_threshold =
        get_or<double>(b, "pseudo_threshold", c.bench.pseudo_threshold, "bench.");
    c.bench.baseline_epochs = get_or<int>(b, "baseline_epochs", c.bench.baseline_epochs, "bench.");
  }
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    reject_unknown_keys(p,
                        {"source_dir", "target_train_dir", "target_test_dir", "pool_dir",
                         "pseudo_dir", "coarse_ckpt", "teacher_ckpt", "student_ckpt"},
                        "paths.");
    c.paths.source_dir = get_or<std::string>(p, "source_dir", c.paths.source_dir, "paths.");
    c.paths.target_train_dir =
        get_or<std::string>(p, "target_train_dir", c.paths.target_train_dir, "paths.");
    c.paths.target_test_dir =
        get_or<std::string>(p, "target_test_dir", c.paths.target_test_dir, "paths.");
    c.paths.pool_dir = get_or<std::string>(p, "pool_dir", c.paths.pool_dir, "paths.");
    c.paths.pseudo_dir = get_or<std::string>(p, "pseudo_dir", c.paths.pseudo_dir, "paths.");
    c.paths.coarse_ckpt = get_or<std::string>(p, "coarse_ckpt", c.paths.coarse_ckpt, "paths.");
    c.paths.teacher_ckpt = get_or<std::string>(p, "teacher_ckpt", c.paths.teacher_ckpt, "paths.");
    c.paths.student_ckpt = get_or<std::string>(p, "student_ckpt", c.paths.student_ckpt, "paths.");
  }
  c.validate();
  return c;
}

// Empty or whitespace-only files mean "all defaults".
inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config file not found: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  std::string text = ss.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    RunConfig c;
    c.validate();
    return c;
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

inline void dump_config(const RunConfig& c, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("cannot write config: " + path);
  f << run_config_to_json(c).dump(2) << "\n";
}

}  // namespace wireseg
