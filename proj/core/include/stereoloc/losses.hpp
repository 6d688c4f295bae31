#pragma once

#include <span>
#include <vector>

#include "stereoloc/grid.hpp"
#include "stereoloc/tensor.hpp"

namespace stereoloc::losses {

struct DetectionLossWeights {
  double coord = 1.0;
  double obj = 5.0;
  double noobj = 1.0;
  double cls = 1.0;
  // Non-responsible anchors whose best IoU against any target reaches this
  // value are exempt from the no-object penalty.
  double ignore_iou = 0.6;
  // When false the IoU objectness target is treated as a constant, so the
  // objectness term does not move the box coordinates.
  bool iou_gradient = true;
};

// Detection loss over a [S,S,A*(5+K)] grid. Each target is owned by the
// anchor returned by assign(); when two targets claim the same anchor the
// earlier one wins. The objectness target of a responsible anchor is the IoU
// between its decoded box and the target; by default the loss is
// differentiated through that IoU as well.
ad::Tensor detection_loss(const ad::Tensor& grid, std::span<const GroundTruthBox> targets,
                          const AnchorSet& anchors = default_anchors(), const DetectionLossWeights& weights = {});

// Batched form: grid [N,S,S,A*(5+K)], one target list per sample; returns
// the sum of the per-sample losses.
ad::Tensor detection_loss_batch(const ad::Tensor& grid, std::span<const std::vector<GroundTruthBox>> targets,
                                const AnchorSet& anchors = default_anchors(),
                                const DetectionLossWeights& weights = {});

// Anchors that own a target, in target order. A target whose anchor is
// already owned by an earlier target is dropped.
struct Responsibility {
  CellAssignment cell;
  std::size_t target = 0;
};
std::vector<Responsibility> responsibilities(std::span<const GroundTruthBox> targets, const AnchorSet& anchors,
                                             std::size_t grid_size);

enum class AlignmentSign {
  // max(0, margin - d(s_i, v_i) + d(s_i, v_j)), the ranking loss as written.
  kAsWritten,
  // max(0, margin + d(s_i, v_i) - d(s_i, v_j)), the usual triplet direction.
  kConventional,
};

inline constexpr double kDefaultMargin = 0.2;

// Ranking loss between student features [N,D] and constant teacher features
// (N*D values, row-major), summed over all ordered pairs i != j with the L2
// distance. Requires N >= 2.
ad::Tensor alignment_loss(const ad::Tensor& student, std::span<const double> teacher, double margin = kDefaultMargin,
                          AlignmentSign sign = AlignmentSign::kAsWritten);

// det + align with unit weights; an undefined `align` means the alignment
// term is disabled and the result is `det` itself.
ad::Tensor total_loss(const ad::Tensor& det, const ad::Tensor& align);

}  // namespace stereoloc::losses
