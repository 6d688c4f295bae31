#include "stereoloc/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace stereoloc {

const AnchorSet& default_anchors() {
  static const AnchorSet anchors{{1.0, 1.2}, {2.0, 2.2}, {3.3, 3.5}, {5.5, 4.5}, {9.0, 7.0}};
  return anchors;
}

void validate(const GroundTruthBox& gt, std::size_t classes) {
  const bool ok = gt.cx >= 0.0 && gt.cx <= 1.0 && gt.cy >= 0.0 && gt.cy <= 1.0 && gt.w > 0.0 && gt.w <= 1.0 &&
                  gt.h > 0.0 && gt.h <= 1.0 && gt.class_id >= 0 && static_cast<std::size_t>(gt.class_id) < classes;
  if (!ok)
    throw std::invalid_argument("ground-truth box out of range: cx=" + std::to_string(gt.cx) +
                                " cy=" + std::to_string(gt.cy) + " w=" + std::to_string(gt.w) +
                                " h=" + std::to_string(gt.h) + " class=" + std::to_string(gt.class_id));
}

CellAssignment assign(const GroundTruthBox& gt, const AnchorSet& anchors, std::size_t grid_size) {
  if (anchors.empty()) throw std::invalid_argument("assign: empty anchor set");
  const double s = static_cast<double>(grid_size);
  CellAssignment cell;
  cell.col = std::min(static_cast<std::size_t>(gt.cx * s), grid_size - 1);
  cell.row = std::min(static_cast<std::size_t>(gt.cy * s), grid_size - 1);
  const double gw = gt.w * s, gh = gt.h * s;
  double best = -1.0;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const double inter = std::min(gw, anchors[a].w) * std::min(gh, anchors[a].h);
    const double shape_iou = inter / (gw * gh + anchors[a].w * anchors[a].h - inter);
    if (shape_iou > best) {
      best = shape_iou;
      cell.anchor = a;
    }
  }
  return cell;
}

EncodedBox encode(const Box& box, const CellAssignment& cell, const AnchorSet& anchors, std::size_t grid_size) {
  const double s = static_cast<double>(grid_size);
  const auto& anchor = anchors.at(cell.anchor);
  return {box.cx * s - static_cast<double>(cell.col), box.cy * s - static_cast<double>(cell.row),
          std::log(box.w * s / anchor.w), std::log(box.h * s / anchor.h)};
}

Box decode(double tx, double ty, double tw, double th, const CellAssignment& cell, const AnchorSet& anchors,
           std::size_t grid_size) {
  const double s = static_cast<double>(grid_size);
  const auto& anchor = anchors.at(cell.anchor);
  return {(sigmoid(tx) + static_cast<double>(cell.col)) / s, (sigmoid(ty) + static_cast<double>(cell.row)) / s,
          anchor.w * std::exp(tw) / s, anchor.h * std::exp(th) / s};
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace stereoloc
