#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cilbench/types.hpp"

namespace cilbench {

// Post-processing and matching thresholds applied by the harness to every
// backend's raw predictions.
struct InferenceConfig {
  double conf_threshold = 0.25;
  double nms_iou = 0.7;
  double match_iou = 0.5;
  // Recall@0.5 matching only pairs same-class boxes when set.
  bool class_aware = true;
  std::size_t max_detections = 100;

  void validate() const;
};

struct MatchedPair {
  std::size_t detection;
  std::size_t gt;
  double iou;
};

struct MatchResult {
  std::vector<MatchedPair> pairs;  // in matching order
  std::vector<std::size_t> unmatched_detections;
  std::vector<std::size_t> unmatched_gts;
};

// Detections are visited by descending confidence (ties: lower index first);
// each takes the still-unmatched gt with the highest IoU >= iou_threshold
// (ties: lower gt index).
MatchResult greedy_match(std::span<const Detection> dets,
                         std::span<const GroundTruthInstance> gts,
                         double iou_threshold, bool class_aware = true);

// Fraction of gts matched. 1.0 for an image without gts.
double image_recall(std::span<const Detection> dets,
                    std::span<const GroundTruthInstance> gts,
                    double iou_threshold, bool class_aware = true);

// Per-class greedy suppression. A box is dropped when its IoU with an
// already kept same-class box is strictly above iou_threshold. Output is
// sorted by descending confidence, ties by input order.
std::vector<Detection> nms(std::span<const Detection> dets,
                           double iou_threshold);

// Confidence filter (inclusive), NMS, then the per-image detection cap.
std::vector<Detection> postprocess(std::span<const Detection> dets,
                                   const InferenceConfig& cfg);

using ImageDetections = std::vector<Detection>;
using ImageGroundTruth = std::vector<GroundTruthInstance>;

// 101-point interpolated AP for one class at one IoU threshold, pooling
// detections over images. Detections must already be post-processed.
// Returns nullopt when the class has no gt instance in any image.
//
// Pooled ordering is descending confidence, ties broken by image position
// and then by rank inside the image.
std::optional<double> average_precision(
    std::span<const ImageDetections> dets,
    std::span<const ImageGroundTruth> gts, ClassId class_id,
    double iou_threshold);

// The ten IoU thresholds 0.50, 0.55, ..., 0.95.
std::array<double, 10> coco_iou_thresholds();

// Mean AP over the ten thresholds and over the listed classes that have gt.
// nullopt signals "no evaluable classes".
std::optional<double> map_50_95(std::span<const ImageDetections> dets,
                                std::span<const ImageGroundTruth> gts,
                                std::span<const ClassId> classes);

// Lower-triangular T x T matrix; entry (j, i) is the score on task i's test
// split after training task j, defined only for i <= j.
class EvalMatrix {
 public:
  explicit EvalMatrix(std::size_t tasks);

  std::size_t tasks() const { return tasks_; }

  void set(std::size_t after_task, std::size_t on_task, double value);
  std::optional<double> at(std::size_t after_task, std::size_t on_task) const;

  bool row_complete(std::size_t after_task) const;
  // Number of leading rows that are fully populated.
  std::size_t completed_rows() const;
  bool complete() const { return completed_rows() == tasks_; }

  friend bool operator==(const EvalMatrix&, const EvalMatrix&) = default;

 private:
  std::size_t offset(std::size_t after_task, std::size_t on_task) const;

  std::size_t tasks_;
  std::vector<std::optional<double>> values_;
};

// Mean of the final row. Throws cilbench::Error when the final row is
// incomplete.
double acc(const EvalMatrix& r);

// Mean over i < T-1 of R[T-1][i] - R[i][i]. Throws cilbench::Error for
// T < 2 or missing entries.
double bwt(const EvalMatrix& r);

}  // namespace cilbench
