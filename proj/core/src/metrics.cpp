#include "stereoloc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace stereoloc::metrics {

std::vector<double> coco_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

double average_precision(std::span<const ScoredBox> preds, std::span<const FrameBox> gts, double iou_threshold) {
  if (gts.empty()) throw std::invalid_argument("average_precision: no ground-truth boxes");

  std::map<int, std::vector<std::size_t>> gt_by_frame;
  for (std::size_t i = 0; i < gts.size(); ++i) gt_by_frame[gts[i].frame].push_back(i);

  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (preds[a].confidence != preds[b].confidence) return preds[a].confidence > preds[b].confidence;
    if (preds[a].frame != preds[b].frame) return preds[a].frame < preds[b].frame;
    return a < b;
  });

  std::vector<bool> matched(gts.size(), false);
  std::vector<double> precision, recall;
  precision.reserve(order.size());
  recall.reserve(order.size());
  std::size_t tp = 0, fp = 0;
  for (std::size_t idx : order) {
    const auto& p = preds[idx];
    int best = -1;
    double best_iou = iou_threshold;
    if (auto it = gt_by_frame.find(p.frame); it != gt_by_frame.end())
      for (std::size_t g : it->second) {
        if (matched[g]) continue;
        const double o = iou(p.box, gts[g].box);
        if (o >= best_iou && (best < 0 || o > best_iou)) {
          best = static_cast<int>(g);
          best_iou = o;
        }
      }
    if (best >= 0) {
      matched[static_cast<std::size_t>(best)] = true;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
  }

  // Area under the monotone precision envelope.
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

ApResult average_precision(std::span<const ScoredBox> preds, std::span<const FrameBox> gts,
                           std::span<const double> thresholds) {
  ApResult r;
  r.thresholds.assign(thresholds.begin(), thresholds.end());
  for (double t : thresholds) r.ap.push_back(average_precision(preds, gts, t));
  r.mean = r.ap.empty() ? 0.0 : std::accumulate(r.ap.begin(), r.ap.end(), 0.0) / static_cast<double>(r.ap.size());
  return r;
}

CenterDistance center_distance(std::span<const ScoredBox> preds, std::span<const FrameBox> gts, double frame_width,
                               double frame_height) {
  if (gts.empty()) throw std::invalid_argument("center_distance: no ground-truth boxes");
  std::map<int, std::vector<const ScoredBox*>> by_frame;
  for (const auto& p : preds) by_frame[p.frame].push_back(&p);
  double sx = 0.0, sy = 0.0;
  for (const auto& g : gts) {
    auto it = by_frame.find(g.frame);
    if (it == by_frame.end())
      throw std::invalid_argument("center_distance: frame " + std::to_string(g.frame) + " has no prediction");
    const ScoredBox* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto* p : it->second) {
      const double dx = (p->box.cx - g.box.cx) * frame_width;
      const double dy = (p->box.cy - g.box.cy) * frame_height;
      const double d = std::hypot(dx, dy);
      if (d < best_d) {
        best_d = d;
        best = p;
      }
    }
    sx += std::abs(best->box.cx - g.box.cx);
    sy += std::abs(best->box.cy - g.box.cy);
  }
  const double k = static_cast<double>(gts.size());
  return {sx / k, sy / k};
}

MotResult clear_mot(std::span<const TrackedBox> hypotheses, std::span<const TrackedBox> ground_truth,
                    double iou_threshold) {
  std::map<int, std::vector<const TrackedBox*>> hyp_by_frame, gt_by_frame;
  std::set<int> frames;
  for (const auto& h : hypotheses) {
    hyp_by_frame[h.frame].push_back(&h);
    frames.insert(h.frame);
  }
  for (const auto& g : ground_truth) {
    gt_by_frame[g.frame].push_back(&g);
    frames.insert(g.frame);
  }

  MotResult r;
  std::map<int, int> last_match;      // gt id -> hypothesis id of its last match
  std::map<int, int> prev_pairs;      // gt id -> hypothesis id in the previous frame
  std::map<int, bool> tracked_before;  // gt id -> matched at its previous appearance
  for (int f : frames) {
    const auto& hs = hyp_by_frame[f];
    const auto& gs = gt_by_frame[f];
    r.total_gt += static_cast<int>(gs.size());
    std::vector<bool> h_used(hs.size(), false), g_used(gs.size(), false);
    std::map<int, int> pairs;

    for (std::size_t gi = 0; gi < gs.size(); ++gi) {
      auto it = prev_pairs.find(gs[gi]->id);
      if (it == prev_pairs.end()) continue;
      for (std::size_t hi = 0; hi < hs.size(); ++hi)
        if (!h_used[hi] && hs[hi]->id == it->second && iou(gs[gi]->box, hs[hi]->box) >= iou_threshold) {
          h_used[hi] = g_used[gi] = true;
          pairs[gs[gi]->id] = hs[hi]->id;
          break;
        }
    }

    struct Cand {
      double iou;
      std::size_t g, h;
    };
    std::vector<Cand> cands;
    for (std::size_t gi = 0; gi < gs.size(); ++gi)
      for (std::size_t hi = 0; hi < hs.size(); ++hi) {
        if (g_used[gi] || h_used[hi]) continue;
        const double o = iou(gs[gi]->box, hs[hi]->box);
        if (o >= iou_threshold) cands.push_back({o, gi, hi});
      }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.iou > b.iou; });
    for (const auto& c : cands) {
      if (g_used[c.g] || h_used[c.h]) continue;
      g_used[c.g] = h_used[c.h] = true;
      pairs[gs[c.g]->id] = hs[c.h]->id;
    }

    for (std::size_t gi = 0; gi < gs.size(); ++gi) {
      const int gid = gs[gi]->id;
      const bool was_tracked = tracked_before.count(gid) && tracked_before[gid];
      if (g_used[gi]) {
        ++r.matches;
        const int hid = pairs[gid];
        if (auto it = last_match.find(gid); it != last_match.end() && it->second != hid) ++r.id_switches;
        last_match[gid] = hid;
      } else {
        ++r.false_negatives;
        if (was_tracked) ++r.fragments;
      }
      tracked_before[gid] = g_used[gi];
    }
    for (bool used : h_used)
      if (!used) ++r.false_positives;
    prev_pairs = std::move(pairs);
  }
  if (r.total_gt > 0)
    r.mota = 1.0 - static_cast<double>(r.false_positives + r.false_negatives + r.id_switches) / r.total_gt;
  else
    r.mota = r.false_positives == 0 ? 1.0 : -static_cast<double>(r.false_positives);
  return r;
}

std::string format_summary(const EvalReport& report) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "ap_avg=" << report.ap_avg << '\n'
     << "ap_50=" << report.ap_50 << '\n'
     << "ap_75=" << report.ap_75 << '\n'
     << "cd_x=" << report.cd_x << '\n'
     << "cd_y=" << report.cd_y << '\n';
  if (report.has_tracking) {
    os << "mota=" << report.mot.mota << '\n'
       << "id_switches=" << report.mot.id_switches << '\n'
       << "fragments=" << report.mot.fragments << '\n'
       << "false_positives=" << report.mot.false_positives << '\n'
       << "false_negatives=" << report.mot.false_negatives << '\n';
  }
  return os.str();
}

std::string format_report(const EvalReport& report, const std::string& title) {
  char buf[512];
  std::ostringstream os;
  os << "== " << title << " ==\n";
  std::snprintf(buf, sizeof buf, "  AP@Ave %6.2f   AP@0.5 %6.2f   AP@0.75 %6.2f\n", 100 * report.ap_avg,
                100 * report.ap_50, 100 * report.ap_75);
  os << buf;
  std::snprintf(buf, sizeof buf, "  CD_x %6.2f%%   CD_y %6.2f%%\n", 100 * report.cd_x, 100 * report.cd_y);
  os << buf;
  if (report.has_tracking) {
    std::snprintf(buf, sizeof buf, "  MOTA %6.1f%%   ID Sw. %d   Frag. %d   FP %d   FN %d\n", 100 * report.mot.mota,
                  report.mot.id_switches, report.mot.fragments, report.mot.false_positives,
                  report.mot.false_negatives);
    os << buf;
  }
  os << "-- summary --\n" << format_summary(report);
  return os.str();
}

}  // namespace stereoloc::metrics
