// SPDX-License-Identifier: Apache-2.0
#pragma once

// Pipeline stages behind the CLI subcommands. The bench command calls these
// same functions with the same seed derivations, so a composed run writes
// byte-identical artifacts to stage-by-stage runs.

#include <filesystem>
#include <string>
#include <vector>

#include "wireseg/config/run_config.hpp"
#include "wireseg/io/dataset.hpp"
#include "wireseg/model/network.hpp"
#include "wireseg/pseudo/labels.hpp"
#include "wireseg/train/trainer.hpp"

namespace wireseg {

namespace fs = std::filesystem;

namespace stage_seed {
inline constexpr uint64_t synth = 0x73796e7468ULL;
inline constexpr uint64_t target_train = 0x74747261696eULL;
inline constexpr uint64_t target_test = 0x7474657374ULL;
inline constexpr uint64_t pool = 0x706f6f6cULL;
inline constexpr uint64_t composite = 0x636f6d70ULL;
inline constexpr uint64_t coarse = 0x636f6172ULL;
inline constexpr uint64_t fine = 0x66696e65ULL;
inline constexpr uint64_t direct = 0x64697265ULL;
inline constexpr uint64_t pseudo_only = 0x70736f6eULL;
inline constexpr uint64_t eval = 0x6576616cULL;
}  // namespace stage_seed

inline SceneParams sample_scene_params(const SynthRanges& r, Rng& rng, uint64_t scene_seed) {
  SceneParams p;
  p.height = r.height;
  p.width = r.width;
  p.control_point_count = rng.range_int(r.control_points_lo, r.control_points_hi);
  p.wire_width_px = rng.uniform(r.wire_width_lo, r.wire_width_hi);
  p.wire_intensity = rng.uniform(r.wire_intensity_lo, r.wire_intensity_hi);
  p.background_intensity = rng.uniform(r.background_intensity_lo, r.background_intensity_hi);
  p.seed = scene_seed;
  return p;
}

// Procedural source scenes (flat backgrounds), written in dataset layout.
inline std::vector<Sample> stage_synth(const RunConfig& cfg, const std::string& out_dir) {
  std::vector<Sample> samples;
  Rng rng(derive_seed(cfg.seed, stage_seed::synth));
  for (int i = 0; i < cfg.bench.n_source; ++i) {
    SceneParams p = sample_scene_params(cfg.synth, rng, rng.next_u64());
    Sample s = generate_guidewire_scene(p);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "src_%05d", i);
    s.id = buf;
    samples.push_back(std::move(s));
  }
  write_dataset(out_dir, samples);
  return samples;
}

// Target-style frames: independently sampled wires composited onto
// vessel-textured noisy backgrounds, with ground truth kept for evaluation.
inline std::vector<Sample> make_target_frames(const RunConfig& cfg, int count, uint64_t tag,
                                              const char* prefix) {
  std::vector<Sample> out;
  Rng rng(derive_seed(cfg.seed, tag));
  for (int i = 0; i < count; ++i) {
    SceneParams p = sample_scene_params(cfg.synth, rng, rng.next_u64());
    Sample wire = generate_guidewire_scene(p);
    Image bg = make_vessel_background(p.height, p.width, cfg.background, rng.next_u64());
    Sample frame = composite(wire, bg, cfg.noise, rng.next_u64());
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%s_%05d", prefix, i);
    frame.id = buf;
    frame.tag = DomainTag::target;
    out.push_back(std::move(frame));
  }
  return out;
}

inline std::vector<Sample> stage_target(const RunConfig& cfg, const std::string& train_dir,
                                        const std::string& test_dir,
                                        std::vector<Sample>* test_out = nullptr) {
  std::vector<Sample> train =
      make_target_frames(cfg, cfg.bench.n_target_train, stage_seed::target_train, "tgt");
  write_dataset(train_dir, train);
  std::vector<Sample> test =
      make_target_frames(cfg, cfg.bench.n_target_test, stage_seed::target_test, "tst");
  write_dataset(test_dir, test);
  if (test_out) *test_out = std::move(test);
  return train;
}

// Background pool: cropped from caller images when given, otherwise from
// procedurally generated guidewire-free vessel backgrounds.
inline BackgroundPool stage_pool(const RunConfig& cfg, const std::string& out_dir,
                                 const std::vector<Image>* from_images = nullptr) {
  const uint64_t seed = derive_seed(cfg.seed, stage_seed::pool);
  BackgroundPool pool;
  if (from_images) {
    pool = build_background_pool(*from_images, {cfg.synth.height, cfg.synth.width},
                                 cfg.bench.pool_size, seed);
  } else {
    Rng rng(seed);
    std::vector<Image> bgs;
    for (int i = 0; i < cfg.bench.pool_size; ++i)
      bgs.push_back(
          make_vessel_background(cfg.synth.height, cfg.synth.width, cfg.background, rng.next_u64()));
    pool = build_background_pool(bgs, {cfg.synth.height, cfg.synth.width}, cfg.bench.pool_size,
                                 rng.next_u64());
  }
  write_pool(out_dir, pool);
  return pool;
}

inline std::vector<Sample> stage_composite(const RunConfig& cfg,
                                           const std::vector<Sample>& source,
                                           const BackgroundPool& pool,
                                           const std::string& out_dir) {
  std::vector<Sample> synth = synthesize_dataset(source, pool, cfg.bench.n_synth, cfg.noise,
                                                 derive_seed(cfg.seed, stage_seed::composite));
  write_dataset(out_dir, synth);
  return synth;
}

inline void write_loss_csv(const RunManifest& manifest, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "epoch,phase,total,ts,ws,emb,pred,train_dice,teacher_iou,student_iou\n";
  for (const auto& e : manifest.json().at("epochs")) {
    f << e.value("epoch", -1) << "," << e.value("phase", "");
    if (e.contains("losses")) {
      const auto& l = e.at("losses");
      f << "," << l.value("total", 0.0) << "," << l.value("ts", 0.0) << "," << l.value("ws", 0.0)
        << "," << l.value("emb", 0.0) << "," << l.value("pred", 0.0) << ",";
    } else {
      f << ",,,,," << e.value("train_dice_loss", 0.0);
    }
    if (e.contains("eval"))
      f << "," << e.at("eval").at("teacher").value("iou", 0.0) << ","
        << e.at("eval").at("student").value("iou", 0.0);
    else
      f << ",,";
    f << "\n";
  }
}

inline ModelState stage_train_coarse(const RunConfig& cfg, const std::vector<Sample>& synth,
                                     const std::string& out_dir) {
  fs::create_directories(out_dir);
  RunManifest manifest;
  manifest.set_config(run_config_to_json(cfg));
  ModelState coarse;
  try {
    coarse = train_coarse(cfg.model, cfg.effective_schedule(), synth,
                          derive_seed(cfg.seed, stage_seed::coarse), manifest);
  } catch (...) {
    manifest.save((fs::path(out_dir) / "manifest.json").string());
    throw;
  }
  const std::string ckpt = (fs::path(out_dir) / "coarse.ckpt").string();
  save_checkpoint(coarse, ckpt);
  manifest.add_checkpoint("coarse", hex64(file_digest(ckpt)));
  manifest.save((fs::path(out_dir) / "manifest.json").string());
  write_loss_csv(manifest, (fs::path(out_dir) / "loss.csv").string());
  return coarse;
}

inline nlohmann::json pseudo_manifest_json(const std::vector<PseudoLabel>& labels) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& pl : labels) {
    nlohmann::json clusters = nlohmann::json::array();
    for (const auto& cs : pl.cluster_stats)
      clusters.push_back({{"size", cs.size},
                          {"bbox", {cs.bbox.row_min, cs.bbox.col_min, cs.bbox.row_max,
                                    cs.bbox.col_max}}});
    nlohmann::json rec{{"frame", pl.source_frame},
                       {"low_confidence", pl.low_confidence},
                       {"clusters", clusters}};
    if (!pl.error.empty()) rec["error"] = pl.error;
    frames.push_back(std::move(rec));
  }
  return {{"schema_version", 1}, {"frames", frames}};
}

inline std::vector<PseudoLabel> stage_pseudo(const RunConfig& cfg, const ModelState& coarse,
                                             const std::vector<Sample>& target,
                                             const std::string& out_dir) {
  std::vector<PseudoLabel> labels =
      generate_pseudo_labels(coarse, target, cfg.cluster_threshold, cfg.cluster);
  const fs::path dir = fs::path(out_dir) / "pseudo_masks";
  fs::create_directories(dir);
  for (size_t i = 0; i < labels.size(); ++i)
    write_png_mask((dir / (target[i].id + ".png")).string(), labels[i].mask);
  std::ofstream f((fs::path(out_dir) / "pseudo_manifest.json").string(), std::ios::trunc);
  f << pseudo_manifest_json(labels).dump(2) << "\n";
  return labels;
}

struct FineArtifacts {
  ModelState student;
  ModelState teacher;
  nlohmann::json manifest;
};

inline FineArtifacts stage_train_fine(const RunConfig& cfg, const ModelState& coarse,
                                      const std::vector<Sample>& target,
                                      const std::vector<Mask>& pseudo_masks,
                                      const std::vector<Sample>& eval_set,
                                      const std::string& out_dir) {
  fs::create_directories(out_dir);
  RunManifest manifest;
  manifest.set_config(run_config_to_json(cfg));
  const uint64_t seed = derive_seed(cfg.seed, stage_seed::fine);
  ModelState fine_init = fine_init_from_coarse(coarse, seed);
  FineResult result;
  try {
    result = train_fine(fine_init, target, pseudo_masks, cfg.effective_schedule(), cfg.loss,
                        cfg.augment, seed, manifest, eval_set.empty() ? nullptr : &eval_set);
  } catch (...) {
    manifest.save((fs::path(out_dir) / "manifest.json").string());
    throw;
  }
  const std::string tckpt = (fs::path(out_dir) / "teacher.ckpt").string();
  const std::string sckpt = (fs::path(out_dir) / "student.ckpt").string();
  save_checkpoint(result.teacher, tckpt);
  save_checkpoint(result.student, sckpt);
  manifest.add_checkpoint("teacher", hex64(file_digest(tckpt)));
  manifest.add_checkpoint("student", hex64(file_digest(sckpt)));
  manifest.save((fs::path(out_dir) / "manifest.json").string());
  write_loss_csv(manifest, (fs::path(out_dir) / "loss.csv").string());
  return {std::move(result.student), std::move(result.teacher), manifest.json()};
}

inline EvalReport stage_eval(const RunConfig& cfg, const ModelState& st,
                             const std::vector<Sample>& data, PromptMode mode,
                             const std::string& out_prefix) {
  EvalReport rep = evaluate_checkpoint(st, data, mode, cfg.schedule.point_prompt_n,
                                       derive_seed(cfg.seed, stage_seed::eval));
  if (!out_prefix.empty()) write_report(rep, out_prefix + ".json", out_prefix + ".csv");
  return rep;
}

inline void stage_infer(const RunConfig& cfg, const ModelState& st,
                        const std::vector<Sample>& data, const std::string& out_dir) {
  const fs::path dir = fs::path(out_dir) / "pred_masks";
  fs::create_directories(dir);
  NoGradGuard ng;
  for (const auto& s : data) {
    MaskLogits logits = forward_logits(st, s.image, {});
    write_png_mask((dir / (s.id + ".png")).string(), binarize(logits, st.cfg.binarize_threshold));
  }
}

// Loads pseudo masks back in frame order (stage subcommands round-trip
// through the filesystem; the bench passes them in memory, which is
// equivalent because masks serialize losslessly).
inline std::vector<Mask> load_pseudo_masks(const std::string& pseudo_dir,
                                           const std::vector<Sample>& target) {
  std::vector<Mask> out;
  out.reserve(target.size());
  for (const auto& s : target) {
    const fs::path p = fs::path(pseudo_dir) / "pseudo_masks" / (s.id + ".png");
    if (!fs::exists(p)) throw std::runtime_error("missing pseudo mask: " + p.string());
    Mask m = read_png_mask(p.string());
    if (m.h != s.image.h || m.w != s.image.w)
      throw std::runtime_error("pseudo mask shape mismatch: " + p.string());
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace wireseg
