#include "stereoloc/tracker.hpp"

#include <algorithm>
#include <stdexcept>

namespace stereoloc::tracker {

void validate(const TrackerConfig& cfg) {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(cfg.init_confidence) || !unit(cfg.iou_gate) || !unit(cfg.keep_confidence))
    throw std::invalid_argument("tracker: thresholds must lie in [0,1]");
  if (cfg.top_k < 1) throw std::invalid_argument("tracker: top_k must be >= 1");
  if (!(cfg.smoothing_alpha > 0.0 && cfg.smoothing_alpha <= 1.0))
    throw std::invalid_argument("tracker: smoothing_alpha must lie in (0,1]");
}

std::vector<Detection> smooth(std::span<const Detection> raw, double alpha) {
  std::vector<Detection> out(raw.begin(), raw.end());
  for (std::size_t t = 1; t < out.size(); ++t) {
    const Box& prev = out[t - 1].box;
    Box& cur = out[t].box;
    cur.cx = alpha * cur.cx + (1.0 - alpha) * prev.cx;
    cur.cy = alpha * cur.cy + (1.0 - alpha) * prev.cy;
    cur.w = alpha * cur.w + (1.0 - alpha) * prev.w;
    cur.h = alpha * cur.h + (1.0 - alpha) * prev.h;
  }
  return out;
}

std::vector<Tube> track(std::span<const std::vector<Detection>> frames, const TrackerConfig& cfg) {
  validate(cfg);
  struct Active {
    int created;
    std::vector<Detection> raw;
  };
  int created = 0;
  std::vector<Active> active;
  std::vector<Active> finished;

  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& all = frames[t];
    const std::size_t n = std::min(all.size(), cfg.top_k);
    std::vector<bool> used(n, false);

    std::vector<Active> still;
    for (auto& tube : active) {
      const Box& last = tube.raw.back().box;
      int pick = -1;
      for (std::size_t i = 0; i < n; ++i) {
        if (used[i] || !(iou(last, all[i].box) > cfg.iou_gate)) continue;
        if (pick < 0 || all[i].confidence > all[static_cast<std::size_t>(pick)].confidence) pick = static_cast<int>(i);
      }
      if (pick < 0) {
        finished.push_back(std::move(tube));
        continue;
      }
      used[static_cast<std::size_t>(pick)] = true;
      tube.raw.push_back(all[static_cast<std::size_t>(pick)]);
      still.push_back(std::move(tube));
    }
    active = std::move(still);

    for (std::size_t i = 0; i < n; ++i) {
      if (used[i] || !(all[i].confidence > cfg.init_confidence)) continue;
      const bool covered = std::any_of(active.begin(), active.end(), [&](const Active& tube) {
        return iou(tube.raw.back().box, all[i].box) > cfg.iou_gate;
      });
      if (covered) continue;
      used[i] = true;
      active.push_back({created++, {all[i]}});
    }
  }
  for (auto& tube : active) finished.push_back(std::move(tube));

  std::sort(finished.begin(), finished.end(), [](const Active& a, const Active& b) { return a.created < b.created; });

  std::vector<Tube> saved;
  for (auto& tube : finished) {
    if (tube.raw.size() < 2) continue;
    if (!(tube.raw[0].confidence > cfg.keep_confidence && tube.raw[1].confidence > cfg.keep_confidence)) continue;
    Tube out;
    out.id = static_cast<int>(saved.size());
    out.start_frame = tube.raw.front().frame_index;
    out.boxes = smooth(tube.raw, cfg.smoothing_alpha);
    out.raw_boxes = std::move(tube.raw);
    saved.push_back(std::move(out));
  }
  return saved;
}

}  // namespace stereoloc::tracker
