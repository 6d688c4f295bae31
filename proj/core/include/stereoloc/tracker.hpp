#pragma once

// Tracking by IoU: links per-frame proposals into tubes, drops tubes whose
// first two boxes are not both confident, then smooths each tube
// exponentially.
//
// Per frame, in order:
//   1. every active tube (creation order) takes the highest-confidence unused
//      proposal whose IoU with its last box exceeds iou_gate; a tube with no
//      such proposal ends;
//   2. every unused proposal with confidence > init_confidence that does not
//      overlap (IoU > iou_gate) the current box of an active tube starts a
//      new tube.
// All thresholds are strict.

#include <span>
#include <vector>

#include "stereoloc/postprocess.hpp"

namespace stereoloc::tracker {

struct TrackerConfig {
  double init_confidence = 0.7;   // tau1
  double iou_gate = 0.4;          // tau2
  double keep_confidence = 0.4;   // tau3
  std::size_t top_k = 5;
  double smoothing_alpha = 0.5;
};

// Throws std::invalid_argument for thresholds outside [0,1], top_k == 0 or
// alpha outside (0,1].
void validate(const TrackerConfig& cfg);

struct Tube {
  int id = 0;
  int start_frame = 0;
  std::vector<Detection> boxes;      // smoothed
  std::vector<Detection> raw_boxes;  // as proposed
};

// `frames[t]` holds the proposals of consecutive frame t, sorted by
// confidence (at most top_k are considered). Frame indices of the returned
// boxes are those of the proposals. Saved tubes are numbered from 0 in
// creation order.
std::vector<Tube> track(std::span<const std::vector<Detection>> frames, const TrackerConfig& cfg = {});

// s_0 = b_0, s_t = alpha * b_t + (1 - alpha) * s_{t-1}, per coordinate.
std::vector<Detection> smooth(std::span<const Detection> raw, double alpha);

}  // namespace stereoloc::tracker
