#include "stereoloc/box.hpp"

#include <algorithm>

namespace stereoloc {

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  const double inter = iw > 0.0 && ih > 0.0 ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

Box clip_to_unit(const Box& b) {
  const double x1 = std::clamp(b.x1(), 0.0, 1.0);
  const double x2 = std::clamp(b.x2(), 0.0, 1.0);
  const double y1 = std::clamp(b.y1(), 0.0, 1.0);
  const double y2 = std::clamp(b.y2(), 0.0, 1.0);
  return Box::from_corners(x1, y1, x2, y2);
}

}  // namespace stereoloc
