#pragma once

// Detection metrics (AP, center distance) and CLEAR-MOT tracking metrics.
//
// Frames are identified by an integer key; boxes are image fractions.

#include <span>
#include <string>
#include <vector>

#include "stereoloc/box.hpp"

namespace stereoloc::metrics {

struct ScoredBox {
  int frame = 0;
  Box box;
  double confidence = 0.0;
};

struct FrameBox {
  int frame = 0;
  Box box;
};

struct TrackedBox {
  int frame = 0;
  int id = 0;
  Box box;
};

// AP at IoU 0.50, 0.55, ..., 0.95.
std::vector<double> coco_thresholds();

struct ApResult {
  std::vector<double> thresholds;
  std::vector<double> ap;  // one per threshold
  double mean = 0.0;
};

// All-point interpolated average precision. Predictions are ranked by
// confidence (ties: frame, then input position); each takes the unmatched
// ground truth of its frame with the highest IoU >= threshold. Throws
// std::invalid_argument when there is no ground truth.
double average_precision(std::span<const ScoredBox> preds, std::span<const FrameBox> gts, double iou_threshold);
ApResult average_precision(std::span<const ScoredBox> preds, std::span<const FrameBox> gts,
                           std::span<const double> thresholds);

struct CenterDistance {
  double cd_x = 0.0;
  double cd_y = 0.0;
};

// Mean normalised |dx|, |dy| between each ground truth center and the
// nearest (Euclidean) predicted center in the same frame. Throws when there
// is no ground truth or a frame with ground truth has no prediction.
CenterDistance center_distance(std::span<const ScoredBox> preds, std::span<const FrameBox> gts,
                               double frame_width = 1.0, double frame_height = 1.0);

struct MotResult {
  double mota = 1.0;
  int id_switches = 0;
  int fragments = 0;
  int false_positives = 0;
  int false_negatives = 0;
  int matches = 0;
  int total_gt = 0;
};

// CLEAR-MOT with greedy IoU association. Correspondences from the previous
// frame are kept while their IoU stays >= threshold; remaining pairs are
// matched greedily by descending IoU. An identity switch is a ground truth
// matched to a hypothesis other than its last matched one; a fragment is a
// ground truth that was matched at its previous appearance and is unmatched
// now. MOTA = 1 - (FP + FN + IDSW) / total_gt (1 when both sides are empty).
MotResult clear_mot(std::span<const TrackedBox> hypotheses, std::span<const TrackedBox> ground_truth,
                    double iou_threshold = 0.5);

struct EvalReport {
  double ap_avg = 0.0;
  double ap_50 = 0.0;
  double ap_75 = 0.0;
  double cd_x = 0.0;
  double cd_y = 0.0;
  bool has_tracking = false;
  MotResult mot;
};

// Human-readable report followed by a `key=value` summary block.
std::string format_report(const EvalReport& report, const std::string& title);
std::string format_summary(const EvalReport& report);

}  // namespace stereoloc::metrics
