// SPDX-License-Identifier: Apache-2.0
#pragma once

// Training orchestration: the coarse stage (adapters + plain head on the
// synthesized set), the fine stage (warm-up then teacher-frozen self-training
// of the uncorrelated pair), the end-to-end baselines, and checkpoint
// evaluation under the four prompt modes.

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wireseg/aug/perturb.hpp"
#include "wireseg/eval/metrics.hpp"
#include "wireseg/loss/losses.hpp"
#include "wireseg/model/network.hpp"
#include "wireseg/model/state.hpp"
#include "wireseg/train/adam.hpp"
#include "wireseg/train/manifest.hpp"

namespace wireseg {

struct ScheduleConfig {
  int warmup_epochs = 3;
  int total_epochs = 12;
  int coarse_epochs = 10;
  LossWeights weights_warmup{0.0, 1.0, 0.5, 1.0};
  LossWeights weights_selftrain{5.0, 0.0, 1.0, 0.0};
  double learning_rate = 1e-4;
  int batch_size_train = 2;
  int batch_size_eval = 16;
  int fine_sample_count = 112;  // 0 = use every usable frame
  std::string teacher_prompt_mode = "box";
  int point_prompt_n = 5;
  int eval_every = 1;

  void validate() const {
    if (warmup_epochs < 0 || warmup_epochs >= total_epochs)
      throw std::invalid_argument("ScheduleConfig: warmup_epochs must be < total_epochs");
    if (coarse_epochs < 1) throw std::invalid_argument("ScheduleConfig: coarse_epochs must be >= 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("ScheduleConfig: learning_rate must be > 0");
    if (batch_size_train < 1 || batch_size_eval < 1)
      throw std::invalid_argument("ScheduleConfig: batch sizes must be >= 1");
    if (point_prompt_n < 0) throw std::invalid_argument("ScheduleConfig: point_prompt_n must be >= 0");
    weights_warmup.validate();
    weights_selftrain.validate();
    parse_prompt_mode(teacher_prompt_mode);
  }
};

namespace detail {

inline Tensor mask_tensor(const Mask& m) {
  Tensor t = Tensor::zeros(m.h, m.w);
  for (size_t i = 0; i < m.v.size(); ++i) t.values()[i] = m.v[i] ? 1.0 : 0.0;
  return t;
}

inline Tensor mean_of(const std::vector<Tensor>& parts) {
  if (parts.empty()) return Tensor();
  Tensor acc = parts.front();
  for (size_t i = 1; i < parts.size(); ++i) acc = add(acc, parts[i]);
  return scale(acc, 1.0 / static_cast<double>(parts.size()));
}

inline nlohmann::json weights_json(const LossWeights& w) {
  return {{"alpha", w.alpha}, {"beta", w.beta}, {"gamma", w.gamma}, {"delta", w.delta}};
}

inline double finite_or_throw(double v, const char* where) {
  if (!std::isfinite(v)) throw NonFiniteLossError(std::string("non-finite loss in ") + where);
  return v;
}

}  // namespace detail

// Runs the model on a labeled dataset under one prompt mode (prompts derived
// from ground truth, matching the prompted-evaluation protocol) and reports
// the four metrics per frame plus both aggregations.
inline EvalReport evaluate_checkpoint(const ModelState& st, const std::vector<Sample>& dataset,
                                      PromptMode prompt_mode, int point_n, uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("evaluate_checkpoint: empty dataset");
  std::vector<Mask> preds, gts;
  std::vector<std::string> ids;
  NoGradGuard ng;
  for (size_t i = 0; i < dataset.size(); ++i) {
    const Sample& s = dataset[i];
    if (!s.mask) throw std::invalid_argument("evaluate_checkpoint: sample without mask: " + s.id);
    PromptSet prompts;
    if (st.cfg.decoder_kind == DecoderKind::prompt_decoder && prompt_mode != PromptMode::none &&
        !s.mask->empty_foreground())
      prompts = make_prompts(*s.mask, prompt_mode, point_n, derive_seed(seed, i));
    MaskLogits logits = forward_logits(st, s.image, prompts);
    preds.push_back(binarize(logits, st.cfg.binarize_threshold));
    gts.push_back(*s.mask);
    ids.push_back(s.id);
  }
  return evaluate_dataset(preds, gts, Aggregation::mean_per_frame, &ids);
}

// Dice-supervised training of a single model on labeled samples; shared by
// the coarse stage and both end-to-end baselines.
inline void train_supervised(ModelState& st, const std::vector<Sample>& data,
                             const ScheduleConfig& sched, int epochs, uint64_t seed,
                             RunManifest& manifest, const std::string& phase_name) {
  if (data.empty()) throw std::invalid_argument("train_supervised: empty dataset");
  for (const auto& s : data)
    if (!s.mask) throw std::invalid_argument("train_supervised: sample without mask: " + s.id);
  Adam opt(sched.learning_rate);
  std::vector<size_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, 0x73687566ULL + static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int steps = 0;
    for (size_t b = 0; b < order.size(); b += static_cast<size_t>(sched.batch_size_train)) {
      std::vector<Tensor> frame_losses;
      for (size_t k = b; k < std::min(order.size(), b + sched.batch_size_train); ++k) {
        const Sample& s = data[order[k]];
        MaskLogits logits = forward_logits(st, s.image, {});
        frame_losses.push_back(
            dice_loss(sigmoid(logits.grid), detail::mask_tensor(*s.mask), 1e-6));
      }
      Tensor loss = detail::mean_of(frame_losses);
      const double v = loss.item();
      if (!std::isfinite(v)) {
        manifest.set_abort({{"phase", phase_name}, {"epoch", epoch}, {"message", "NaN loss"}});
        throw TrainingAbortError("NaN loss during " + phase_name + " at epoch " +
                                 std::to_string(epoch));
      }
      st.zero_grads();
      loss.backward();
      opt.step(st);
      epoch_loss += v;
      ++steps;
    }
    manifest.add_epoch({{"phase", phase_name},
                        {"epoch", epoch},
                        {"train_dice_loss", epoch_loss / std::max(1, steps)}});
  }
}

// Coarse stage: fresh plain-head model, adapters attached, trained with dice
// on the synthesized set. Returns the coarse model.
inline ModelState train_coarse(const ModelConfig& model_cfg, const ScheduleConfig& sched,
                               const std::vector<Sample>& d_s_syn, uint64_t seed,
                               RunManifest& manifest) {
  sched.validate();
  ModelConfig cfg = model_cfg;
  cfg.decoder_kind = DecoderKind::plain_conv_head;
  ModelState st = init_model(cfg, derive_seed(seed, 0x636f61727365ULL));
  if (cfg.lora_rank > 0) attach_lora(st, cfg.lora_rank, cfg.lora_scale, derive_seed(seed, 0x636cULL));
  train_supervised(st, d_s_syn, sched, sched.coarse_epochs, derive_seed(seed, 0x6374ULL), manifest,
                   "coarse");
  return st;
}

struct FineResult {
  ModelState student;
  ModelState teacher;
};

// Builds the fine-stage initial state: the coarse encoder (adapters folded
// in) under a fresh prompt decoder, with new adapters attached.
inline ModelState fine_init_from_coarse(const ModelState& coarse, uint64_t seed) {
  ModelState merged = coarse.clone();
  if (merged.lora_attached) merge_lora(merged);
  ModelConfig cfg = coarse.cfg;
  cfg.decoder_kind = DecoderKind::prompt_decoder;
  ModelState st = init_model(cfg, derive_seed(seed, 0x66696e65ULL));
  for (auto& p : st.params()) {
    if (p.name.rfind("enc.", 0) == 0 && merged.has(p.name))
      p.t.values() = merged.at(p.name).t.values();
  }
  if (cfg.lora_rank > 0)
    attach_lora(st, cfg.lora_rank, cfg.lora_scale, derive_seed(seed, 0x666cULL));
  return st;
}

// Fine stage. Warm-up epochs train both networks against the pseudo-labels
// (teacher prompted, student prompt-free); at the switch the teacher is
// frozen whole and self-training supervises the student from the teacher's
// binarized predictions plus the embedding-consistency pull.
inline FineResult train_fine(const ModelState& fine_init, const std::vector<Sample>& target,
                             const std::vector<Mask>& pseudo_labels, const ScheduleConfig& sched,
                             const LossConfig& loss_cfg, const AugmentationPolicy& policy,
                             uint64_t seed, RunManifest& manifest,
                             const std::vector<Sample>* eval_set = nullptr) {
  sched.validate();
  loss_cfg.validate();
  if (target.size() != pseudo_labels.size())
    throw std::invalid_argument("train_fine: pseudo-labels must align 1:1 with target images");

  // Frames with empty pseudo-labels cannot be prompted or pooled; skip them.
  std::vector<size_t> usable;
  for (size_t i = 0; i < target.size(); ++i)
    if (!pseudo_labels[i].empty_foreground()) usable.push_back(i);
  if (usable.empty()) throw std::invalid_argument("train_fine: no usable frames (all pseudo-labels empty)");
  if (sched.fine_sample_count > 0 && usable.size() > static_cast<size_t>(sched.fine_sample_count))
    usable.resize(static_cast<size_t>(sched.fine_sample_count));

  ModelState teacher = fine_init.clone();
  ModelState student = fine_init.clone();
  Adam opt_tea(sched.learning_rate);
  Adam opt_stu(sched.learning_rate);
  const PromptMode tea_mode = parse_prompt_mode(sched.teacher_prompt_mode);
  const int gh = teacher.cfg.grid_h(), gw = teacher.cfg.grid_w();

  manifest.add_event({{"type", "fine_start"},
                      {"usable_frames", usable.size()},
                      {"weights", detail::weights_json(sched.weights_warmup)}});

  for (int epoch = 0; epoch < sched.total_epochs; ++epoch) {
    const bool warmup = epoch < sched.warmup_epochs;
    if (epoch == sched.warmup_epochs) {
      freeze_adapters(teacher);
      teacher.freeze_all();
      opt_stu.reset();  // the objective changes discontinuously at the switch
      manifest.add_event({{"type", "phase_switch"},
                          {"epoch", epoch},
                          {"teacher_frozen", true},
                          {"weights", detail::weights_json(sched.weights_selftrain)}});
    }
    const LossWeights& w = warmup ? sched.weights_warmup : sched.weights_selftrain;

    std::vector<size_t> order = usable;
    Rng shuffle_rng(derive_seed(seed, 0x66736866ULL + static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double ep_total = 0.0, ep_ts = 0.0, ep_ws = 0.0, ep_emb = 0.0, ep_pred = 0.0;
    double teacher_adapter_grad_l1 = 0.0;
    int steps = 0;

    for (size_t b = 0; b < order.size(); b += static_cast<size_t>(sched.batch_size_train)) {
      std::vector<Tensor> ts_parts, ws_parts, pred_parts, stu_pools, tea_pools;
      for (size_t k = b; k < std::min(order.size(), b + sched.batch_size_train); ++k) {
        const size_t idx = order[k];
        const Sample& s = target[idx];
        const Mask& y_p = pseudo_labels[idx];
        const uint64_t frame_seed =
            derive_seed(seed, (static_cast<uint64_t>(epoch) << 24) ^ idx);
        const Image x_aug = strong_perturb(s.image, policy, frame_seed);
        // weak prompts are resampled per epoch under the run seed
        const PromptSet prompts =
            make_prompts(y_p, tea_mode, sched.point_prompt_n, derive_seed(frame_seed, 0x70ULL));

        const bool need_stu_aug = w.alpha > 0.0 || w.beta > 0.0;
        const bool need_tea_aug = w.beta > 0.0 || w.delta > 0.0;

        Tensor p_stu, p_stu_aug, p_tea, p_tea_aug, z_stu_tok, z_tea_tok;
        {
          ImageEmbedding z_stu = encode_image(student, s.image);
          z_stu_tok = z_stu.tokens;
          p_stu = decode_mask(student, z_stu, encode_prompts(student, {})).grid;
          if (need_stu_aug)
            p_stu_aug = forward_logits(student, x_aug, {}).grid;
        }
        if (warmup) {
          ImageEmbedding z_tea = encode_image(teacher, s.image);
          z_tea_tok = z_tea.tokens;
          p_tea = decode_mask(teacher, z_tea, encode_prompts(teacher, prompts)).grid;
          if (need_tea_aug)
            p_tea_aug = decode_mask(teacher, encode_image(teacher, x_aug),
                                    encode_prompts(teacher, prompts))
                            .grid;
        } else {
          NoGradGuard ng;
          ImageEmbedding z_tea = encode_image(teacher, s.image);
          z_tea_tok = z_tea.tokens;
          p_tea = decode_mask(teacher, z_tea, encode_prompts(teacher, prompts)).grid;
          if (need_tea_aug)
            p_tea_aug = decode_mask(teacher, encode_image(teacher, x_aug),
                                    encode_prompts(teacher, prompts))
                            .grid;
        }

        if (w.alpha > 0.0) ts_parts.push_back(ts_loss(p_stu, p_stu_aug, p_tea, loss_cfg));
        if (w.beta > 0.0)
          ws_parts.push_back(ws_loss(p_stu, p_stu_aug, p_tea, p_tea_aug,
                                     detail::mask_tensor(y_p), loss_cfg));
        if (w.delta > 0.0) pred_parts.push_back(pred_consistency_loss(p_tea, p_tea_aug, loss_cfg));
        if (w.gamma > 0.0) {
          Tensor cell_mask = downsample_mask_to_cells(y_p, gh, gw);
          try {
            stu_pools.push_back(pooled_positive_embedding(z_stu_tok, cell_mask));
            tea_pools.push_back(pooled_positive_embedding(z_tea_tok, cell_mask));
          } catch (const EmptyPoolError&) {
            // frame skipped for the gamma term
          }
        }
      }

      Tensor l_ts = detail::mean_of(ts_parts);
      Tensor l_ws = detail::mean_of(ws_parts);
      Tensor l_pred = detail::mean_of(pred_parts);
      Tensor l_emb;
      if (w.gamma > 0.0 && !stu_pools.empty())
        l_emb = embedding_consistency_loss(stu_pools, tea_pools, loss_cfg.tau,
                                           loss_cfg.embedding_loss_form);
      Tensor total;
      try {
        total = total_loss(l_ts, l_ws, l_emb, l_pred, w);
      } catch (const NonFiniteLossError& e) {
        manifest.set_abort({{"phase", warmup ? "warmup" : "selftrain"},
                            {"epoch", epoch},
                            {"message", e.what()}});
        throw TrainingAbortError(e.what());
      }

      teacher.zero_grads();
      student.zero_grads();
      total.backward();
      for (const auto& p : teacher.params())
        if (p.name.find(".lora_") != std::string::npos)
          for (double g : p.t.grads()) teacher_adapter_grad_l1 += std::abs(g);
      if (warmup) opt_tea.step(teacher);
      opt_stu.step(student);

      ep_total += total.item();
      ep_ts += l_ts.defined() ? l_ts.item() : 0.0;
      ep_ws += l_ws.defined() ? l_ws.item() : 0.0;
      ep_emb += l_emb.defined() ? l_emb.item() : 0.0;
      ep_pred += l_pred.defined() ? l_pred.item() : 0.0;
      ++steps;
    }

    nlohmann::json erec{{"phase", warmup ? "warmup" : "selftrain"},
                        {"epoch", epoch},
                        {"weights", detail::weights_json(w)},
                        {"losses",
                         {{"total", ep_total / steps},
                          {"ts", ep_ts / steps},
                          {"ws", ep_ws / steps},
                          {"emb", ep_emb / steps},
                          {"pred", ep_pred / steps}}},
                        {"teacher_digest", hex64(teacher.digest())},
                        {"teacher_adapter_grad_l1", teacher_adapter_grad_l1}};
    if (eval_set && sched.eval_every > 0 &&
        ((epoch + 1) % sched.eval_every == 0 || epoch + 1 == sched.total_epochs ||
         epoch + 1 == sched.warmup_epochs)) {
      EvalReport tea_rep = evaluate_checkpoint(teacher, *eval_set, tea_mode, sched.point_prompt_n,
                                               derive_seed(seed, 0xe0ULL + epoch));
      EvalReport stu_rep = evaluate_checkpoint(student, *eval_set, PromptMode::none,
                                               sched.point_prompt_n, derive_seed(seed, 0xe1ULL + epoch));
      erec["eval"] = {{"teacher", metric_values_to_json(tea_rep.headline())},
                      {"student", metric_values_to_json(stu_rep.headline())}};
    }
    manifest.add_epoch(erec);
  }
  return {std::move(student), std::move(teacher)};
}

// Direct Transfer baseline: the same promptable architecture trained
// end-to-end on raw (non-composited) source frames, evaluated on the target.
inline ModelState train_end2end_baseline(const ModelConfig& model_cfg, const ScheduleConfig& sched,
                                         const std::vector<Sample>& train_data, int epochs,
                                         uint64_t seed, RunManifest& manifest,
                                         const std::string& phase_name) {
  sched.validate();
  ModelConfig cfg = model_cfg;
  cfg.decoder_kind = DecoderKind::prompt_decoder;
  ModelState st = init_model(cfg, derive_seed(seed, 0x62617365ULL));
  if (cfg.lora_rank > 0) attach_lora(st, cfg.lora_rank, cfg.lora_scale, derive_seed(seed, 0x626cULL));
  train_supervised(st, train_data, sched, epochs, derive_seed(seed, 0x6274ULL), manifest,
                   phase_name);
  return st;
}

}  // namespace wireseg
