#include "cilbench/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

#include "cilbench/error.hpp"

namespace cilbench {

namespace {

constexpr int kRecallGridPoints = 101;

// Indices of `dets` by descending confidence, ties by ascending index.
std::vector<std::size_t> confidence_order(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&dets](std::size_t a, std::size_t b) {
                     return dets[a].confidence > dets[b].confidence;
                   });
  return order;
}

bool in_unit_interval(double v) { return v > 0.0 && v < 1.0; }

}  // namespace

void InferenceConfig::validate() const {
  if (!in_unit_interval(conf_threshold) || !in_unit_interval(nms_iou) ||
      !in_unit_interval(match_iou)) {
    throw ConfigError("inference thresholds must lie in (0,1)");
  }
  if (max_detections == 0) throw ConfigError("max_detections must be >= 1");
}

MatchResult greedy_match(std::span<const Detection> dets,
                         std::span<const GroundTruthInstance> gts,
                         double iou_threshold, bool class_aware) {
  MatchResult result;
  std::vector<bool> gt_taken(gts.size(), false);
  std::vector<bool> det_taken(dets.size(), false);

  for (std::size_t d : confidence_order(dets)) {
    double best_iou = 0.0;
    std::size_t best = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_taken[g]) continue;
      if (class_aware && gts[g].class_id != dets[d].class_id) continue;
      const double v = iou(dets[d].bbox, gts[g].bbox);
      if (v >= iou_threshold && (best == gts.size() || v > best_iou)) {
        best = g;
        best_iou = v;
      }
    }
    if (best != gts.size()) {
      gt_taken[best] = true;
      det_taken[d] = true;
      result.pairs.push_back({d, best, best_iou});
    }
  }
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (!det_taken[d]) result.unmatched_detections.push_back(d);
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (!gt_taken[g]) result.unmatched_gts.push_back(g);
  }
  return result;
}

double image_recall(std::span<const Detection> dets,
                    std::span<const GroundTruthInstance> gts,
                    double iou_threshold, bool class_aware) {
  if (gts.empty()) return 1.0;
  const MatchResult m = greedy_match(dets, gts, iou_threshold, class_aware);
  return static_cast<double>(m.pairs.size()) / static_cast<double>(gts.size());
}

std::vector<Detection> nms(std::span<const Detection> dets,
                           double iou_threshold) {
  std::vector<Detection> kept;
  for (std::size_t d : confidence_order(dets)) {
    const Detection& cand = dets[d];
    const bool suppressed =
        std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
          return k.class_id == cand.class_id &&
                 iou(k.bbox, cand.bbox) > iou_threshold;
        });
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

std::vector<Detection> postprocess(std::span<const Detection> dets,
                                   const InferenceConfig& cfg) {
  std::vector<Detection> confident;
  confident.reserve(dets.size());
  for (const Detection& d : dets) {
    if (d.confidence >= cfg.conf_threshold) confident.push_back(d);
  }
  std::vector<Detection> out = nms(confident, cfg.nms_iou);
  if (out.size() > cfg.max_detections) {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(cfg.max_detections),
              out.end());
  }
  return out;
}

std::optional<double> average_precision(std::span<const ImageDetections> dets,
                                        std::span<const ImageGroundTruth> gts,
                                        ClassId class_id,
                                        double iou_threshold) {
  if (dets.size() != gts.size()) {
    throw std::invalid_argument("detections and gts cover different images");
  }

  struct Scored {
    double confidence;
    std::size_t image;
    std::size_t rank;
    bool tp;
  };
  std::vector<Scored> pooled;
  std::size_t positives = 0;

  for (std::size_t img = 0; img < gts.size(); ++img) {
    ImageDetections class_dets;
    ImageGroundTruth class_gts;
    for (const auto& d : dets[img]) {
      if (d.class_id == class_id) class_dets.push_back(d);
    }
    for (const auto& g : gts[img]) {
      if (g.class_id == class_id) class_gts.push_back(g);
    }
    positives += class_gts.size();

    const MatchResult m = greedy_match(class_dets, class_gts, iou_threshold);
    std::vector<bool> tp(class_dets.size(), false);
    for (const auto& p : m.pairs) tp[p.detection] = true;
    const auto order = confidence_order(class_dets);
    for (std::size_t r = 0; r < order.size(); ++r) {
      pooled.push_back(
          {class_dets[order[r]].confidence, img, r, tp[order[r]]});
    }
  }
  if (positives == 0) return std::nullopt;

  std::sort(pooled.begin(), pooled.end(),
            [](const Scored& a, const Scored& b) {
              if (a.confidence != b.confidence) {
                return a.confidence > b.confidence;
              }
              if (a.image != b.image) return a.image < b.image;
              return a.rank < b.rank;
            });

  std::vector<double> recall(pooled.size());
  std::vector<double> precision(pooled.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < pooled.size(); ++k) {
    if (pooled[k].tp) ++tp;
    recall[k] = static_cast<double>(tp) / static_cast<double>(positives);
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  // Precision envelope: running max from the right.
  for (std::size_t k = precision.size(); k-- > 1;) {
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  }

  double sum = 0.0;
  for (int g = 0; g < kRecallGridPoints; ++g) {
    const double r = static_cast<double>(g) / 100.0;
    auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it == recall.end()) break;
    sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / kRecallGridPoints;
}

std::array<double, 10> coco_iou_thresholds() {
  std::array<double, 10> t{};
  for (int k = 0; k < 10; ++k) t[k] = static_cast<double>(50 + 5 * k) / 100.0;
  return t;
}

std::optional<double> map_50_95(std::span<const ImageDetections> dets,
                                std::span<const ImageGroundTruth> gts,
                                std::span<const ClassId> classes) {
  double sum = 0.0;
  std::size_t evaluated = 0;
  for (ClassId c : classes) {
    double class_sum = 0.0;
    bool has_gt = true;
    for (double thr : coco_iou_thresholds()) {
      const auto ap = average_precision(dets, gts, c, thr);
      if (!ap) {
        has_gt = false;
        break;
      }
      class_sum += *ap;
    }
    if (!has_gt) continue;
    sum += class_sum / 10.0;
    ++evaluated;
  }
  if (evaluated == 0) return std::nullopt;
  return sum / static_cast<double>(evaluated);
}

EvalMatrix::EvalMatrix(std::size_t tasks)
    : tasks_(tasks), values_(tasks * (tasks + 1) / 2) {
  if (tasks == 0) throw std::invalid_argument("EvalMatrix needs >= 1 task");
}

std::size_t EvalMatrix::offset(std::size_t after_task,
                               std::size_t on_task) const {
  if (after_task >= tasks_ || on_task > after_task) {
    throw std::out_of_range("EvalMatrix entry (" + std::to_string(after_task) +
                            ", " + std::to_string(on_task) +
                            ") is outside the lower triangle");
  }
  return after_task * (after_task + 1) / 2 + on_task;
}

void EvalMatrix::set(std::size_t after_task, std::size_t on_task,
                     double value) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw std::invalid_argument("EvalMatrix entries must lie in [0,1]");
  }
  values_[offset(after_task, on_task)] = value;
}

std::optional<double> EvalMatrix::at(std::size_t after_task,
                                     std::size_t on_task) const {
  return values_[offset(after_task, on_task)];
}

bool EvalMatrix::row_complete(std::size_t after_task) const {
  for (std::size_t i = 0; i <= after_task; ++i) {
    if (!at(after_task, i)) return false;
  }
  return true;
}

std::size_t EvalMatrix::completed_rows() const {
  std::size_t rows = 0;
  while (rows < tasks_ && row_complete(rows)) ++rows;
  return rows;
}

double acc(const EvalMatrix& r) {
  const std::size_t last = r.tasks() - 1;
  if (!r.row_complete(last)) {
    throw Error("ACC needs a complete final row");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i <= last; ++i) sum += *r.at(last, i);
  return sum / static_cast<double>(r.tasks());
}

double bwt(const EvalMatrix& r) {
  if (r.tasks() < 2) throw Error("BWT is undefined for a single task");
  const std::size_t last = r.tasks() - 1;
  double sum = 0.0;
  for (std::size_t i = 0; i < last; ++i) {
    const auto final_score = r.at(last, i);
    const auto just_learned = r.at(i, i);
    if (!final_score || !just_learned) {
      throw Error("BWT needs the diagonal and the final row");
    }
    sum += *final_score - *just_learned;
  }
  return sum / static_cast<double>(last);
}

}  // namespace cilbench
