#pragma once

#include <span>
#include <vector>

#include "stereoloc/box.hpp"
#include "stereoloc/grid.hpp"

namespace stereoloc {

struct Detection {
  Box box;
  double confidence = 0.0;
  int class_id = 0;
  int frame_index = 0;
  // Position in the decode order (row, col, anchor); used for tie-breaks.
  int index = 0;
};

namespace postprocess {

inline constexpr double kConfidenceThreshold = 0.5;
inline constexpr double kNmsIouThreshold = 0.45;

// Decodes one [S,S,A*(5+K)] grid (channels-last, row-major) into S*S*A
// detections in (row, col, anchor) order. Confidence is
// sigmoid(to) * max softmax class probability; boxes are clipped to the image.
std::vector<Detection> decode_grid(std::span<const double> grid, const AnchorSet& anchors = default_anchors(),
                                   std::size_t grid_size = kGridSize, int frame_index = 0);

// Boxes with confidence strictly above `threshold`; if none qualifies, the
// single highest-confidence box (earliest on ties). Throws on empty input.
std::vector<Detection> select_detections(std::span<const Detection> dets, double threshold = kConfidenceThreshold);

// Greedy per-class suppression. Candidates are visited by confidence, then
// by input position; a candidate is dropped when its IoU with an already kept
// box of the same class exceeds `iou_threshold`. Output is in visit order.
std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold = kNmsIouThreshold);

// Highest-confidence `k` boxes after NMS; the proposal set for tracking.
std::vector<Detection> top_proposals(std::span<const Detection> dets, std::size_t k,
                                     double iou_threshold = kNmsIouThreshold);

}  // namespace postprocess
}  // namespace stereoloc
