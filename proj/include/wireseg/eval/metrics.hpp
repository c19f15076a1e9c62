// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wireseg/core/image.hpp"

namespace wireseg {

struct ConfusionCounts {
  uint64_t tp = 0;
  uint64_t fp = 0;
  uint64_t fn = 0;
  uint64_t tn = 0;

  uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

inline ConfusionCounts confusion(const Mask& pred, const Mask& gt) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("confusion: shape mismatch");
  check_binary(pred);
  check_binary(gt);
  ConfusionCounts c;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    const bool p = pred.v[i] != 0, g = gt.v[i] != 0;
    if (p && g)
      ++c.tp;
    else if (p && !g)
      ++c.fp;
    else if (!p && g)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

struct MetricValues {
  double iou = 0.0;
  double f1 = 0.0;
  double acc = 0.0;
  double sen = 0.0;
};

// IoU, F1, pixel accuracy, sensitivity. IoU/F1/Sen are defined as 1 when
// their denominators vanish (both masks empty).
inline MetricValues metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw std::invalid_argument("metrics: empty counts");
  MetricValues m;
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp),
               fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
  m.iou = (tp + fp + fn) > 0 ? tp / (tp + fp + fn) : 1.0;
  m.f1 = (2 * tp + fp + fn) > 0 ? 2 * tp / (2 * tp + fp + fn) : 1.0;
  m.acc = (tp + tn) / (tp + fp + fn + tn);
  m.sen = (tp + fn) > 0 ? tp / (tp + fn) : 1.0;
  return m;
}

enum class Aggregation { mean_per_frame, micro };

struct FrameMetrics {
  std::string id;
  ConfusionCounts counts;
  MetricValues values;
};

struct EvalReport {
  MetricValues macro;  // mean of per-frame metrics
  MetricValues micro;  // metrics of summed counts
  Aggregation primary = Aggregation::mean_per_frame;
  std::vector<FrameMetrics> frames;

  const MetricValues& headline() const {
    return primary == Aggregation::mean_per_frame ? macro : micro;
  }
};

inline EvalReport evaluate_dataset(const std::vector<Mask>& pred_masks,
                                   const std::vector<Mask>& gt_masks,
                                   Aggregation aggregation = Aggregation::mean_per_frame,
                                   const std::vector<std::string>* ids = nullptr) {
  if (pred_masks.size() != gt_masks.size())
    throw std::invalid_argument("evaluate_dataset: list length mismatch");
  if (pred_masks.empty()) throw std::invalid_argument("evaluate_dataset: empty input");
  EvalReport rep;
  rep.primary = aggregation;
  ConfusionCounts totals;
  for (size_t i = 0; i < pred_masks.size(); ++i) {
    FrameMetrics fm;
    fm.id = ids ? (*ids)[i] : "frame_" + std::to_string(i);
    fm.counts = confusion(pred_masks[i], gt_masks[i]);
    fm.values = metrics(fm.counts);
    totals += fm.counts;
    rep.macro.iou += fm.values.iou;
    rep.macro.f1 += fm.values.f1;
    rep.macro.acc += fm.values.acc;
    rep.macro.sen += fm.values.sen;
    rep.frames.push_back(std::move(fm));
  }
  const double n = static_cast<double>(rep.frames.size());
  rep.macro.iou /= n;
  rep.macro.f1 /= n;
  rep.macro.acc /= n;
  rep.macro.sen /= n;
  rep.micro = metrics(totals);
  return rep;
}

inline nlohmann::json metric_values_to_json(const MetricValues& m) {
  return {{"iou", m.iou}, {"f1", m.f1}, {"acc", m.acc}, {"sen", m.sen}};
}

// Report JSON plus a CSV of per-frame rows (percentages with two decimals).
inline void write_report(const EvalReport& rep, const std::string& json_path,
                         const std::string& csv_path) {
  nlohmann::json j;
  j["aggregation"] = rep.primary == Aggregation::mean_per_frame ? "mean_per_frame" : "micro";
  j["mean_per_frame"] = metric_values_to_json(rep.macro);
  j["micro"] = metric_values_to_json(rep.micro);
  j["frame_count"] = rep.frames.size();
  std::ofstream jf(json_path, std::ios::trunc);
  if (!jf) throw std::runtime_error("cannot write " + json_path);
  jf << j.dump(2) << "\n";

  std::ofstream cf(csv_path, std::ios::trunc);
  if (!cf) throw std::runtime_error("cannot write " + csv_path);
  cf << "frame,tp,fp,fn,tn,iou_pct,f1_pct,acc_pct,sen_pct\n";
  char row[256];
  for (const auto& fm : rep.frames) {
    std::snprintf(row, sizeof(row), "%s,%llu,%llu,%llu,%llu,%.2f,%.2f,%.2f,%.2f\n",
                  fm.id.c_str(), static_cast<unsigned long long>(fm.counts.tp),
                  static_cast<unsigned long long>(fm.counts.fp),
                  static_cast<unsigned long long>(fm.counts.fn),
                  static_cast<unsigned long long>(fm.counts.tn), 100.0 * fm.values.iou,
                  100.0 * fm.values.f1, 100.0 * fm.values.acc, 100.0 * fm.values.sen);
    cf << row;
  }
}

}  // namespace wireseg
