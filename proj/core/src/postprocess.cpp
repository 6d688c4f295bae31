#include "stereoloc/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace stereoloc::postprocess {

std::vector<Detection> decode_grid(std::span<const double> grid, const AnchorSet& anchors, std::size_t grid_size,
                                   int frame_index) {
  if (anchors.empty() || grid.size() % (grid_size * grid_size * anchors.size()) != 0)
    throw std::invalid_argument("decode_grid: grid of " + std::to_string(grid.size()) + " values does not fit " +
                                std::to_string(grid_size) + "x" + std::to_string(grid_size) + "x" +
                                std::to_string(anchors.size()) + " anchors");
  const std::size_t stride = grid.size() / (grid_size * grid_size * anchors.size());
  if (stride <= kBoxFields) throw std::invalid_argument("decode_grid: no class channels");
  const GridLayout layout{grid_size, anchors.size(), stride - kBoxFields};

  std::vector<Detection> out;
  out.reserve(grid_size * grid_size * anchors.size());
  for (std::size_t row = 0; row < grid_size; ++row)
    for (std::size_t col = 0; col < grid_size; ++col)
      for (std::size_t a = 0; a < anchors.size(); ++a) {
        const double* t = grid.data() + layout.offset(row, col, a);
        const double* logits = t + kBoxFields;
        const auto best = std::max_element(logits, logits + layout.classes);
        double z = 0.0;
        for (std::size_t k = 0; k < layout.classes; ++k) z += std::exp(logits[k] - *best);
        Detection d;
        d.box = clip_to_unit(decode(t[0], t[1], t[2], t[3], {row, col, a}, anchors, grid_size));
        d.confidence = sigmoid(t[4]) / z;
        d.class_id = static_cast<int>(best - logits);
        d.frame_index = frame_index;
        d.index = static_cast<int>(out.size());
        out.push_back(d);
      }
  return out;
}

std::vector<Detection> select_detections(std::span<const Detection> dets, double threshold) {
  if (dets.empty()) throw std::invalid_argument("select_detections: empty detection list");
  std::vector<Detection> kept;
  for (const auto& d : dets)
    if (d.confidence > threshold) kept.push_back(d);
  if (kept.empty()) {
    auto best = dets.begin();
    for (auto it = dets.begin(); it != dets.end(); ++it)
      if (it->confidence > best->confidence) best = it;
    kept.push_back(*best);
  }
  return kept;
}

std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });
  std::vector<Detection> kept;
  for (std::size_t idx : order) {
    const auto& cand = dets[idx];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.class_id == cand.class_id && iou(k.box, cand.box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

std::vector<Detection> top_proposals(std::span<const Detection> dets, std::size_t k, double iou_threshold) {
  auto kept = nms(dets, iou_threshold);
  if (kept.size() > k) kept.resize(k);
  return kept;
}

}  // namespace stereoloc::postprocess
