#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oracle {

std::vector<double> conv2d(const std::vector<double>& x, std::size_t n, std::size_t ci, std::size_t h, std::size_t w,
                           const std::vector<double>& k, std::size_t co, std::size_t ks, const std::vector<double>& bias,
                           int stride, int pad, std::size_t& oh, std::size_t& ow) {
  oh = (h + 2 * pad - ks) / stride + 1;
  ow = (w + 2 * pad - ks) / stride + 1;
  std::vector<double> y(n * co * oh * ow, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t u = 0; u < ks; ++u)
              for (std::size_t v = 0; v < ks; ++v) {
                const long r = static_cast<long>(i * stride + u) - pad;
                const long q = static_cast<long>(j * stride + v) - pad;
                if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(w)) continue;
                acc += x[((b * ci + c) * h + r) * w + q] * k[((o * ci + c) * ks + u) * ks + v];
              }
          y[((b * co + o) * oh + i) * ow + j] = acc;
        }
  return y;
}

std::vector<double> conv2d_transpose(const std::vector<double>& x, std::size_t n, std::size_t ci, std::size_t h,
                                     std::size_t w, const std::vector<double>& k, std::size_t co, std::size_t ks,
                                     const std::vector<double>& bias, int stride, int pad, std::size_t& oh,
                                     std::size_t& ow) {
  oh = (h - 1) * stride + ks - 2 * pad;
  ow = (w - 1) * stride + ks - 2 * pad;
  std::vector<double> y(n * co * oh * ow, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t p = 0; p < oh * ow; ++p) y[(b * co + o) * oh * ow + p] = bias.empty() ? 0.0 : bias[o];
    for (std::size_t c = 0; c < ci; ++c)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
          for (std::size_t o = 0; o < co; ++o)
            for (std::size_t u = 0; u < ks; ++u)
              for (std::size_t v = 0; v < ks; ++v) {
                const long r = static_cast<long>(i * stride + u) - pad;
                const long q = static_cast<long>(j * stride + v) - pad;
                if (r < 0 || q < 0 || r >= static_cast<long>(oh) || q >= static_cast<long>(ow)) continue;
                y[((b * co + o) * oh + r) * ow + q] += x[((b * ci + c) * h + i) * w + j] * k[((c * co + o) * ks + u) * ks + v];
              }
  }
  return y;
}

double box_iou(const Box& a, const Box& b) {
  const double ax1 = a.cx - a.w / 2, ax2 = a.cx + a.w / 2, ay1 = a.cy - a.h / 2, ay2 = a.cy + a.h / 2;
  const double bx1 = b.cx - b.w / 2, bx2 = b.cx + b.w / 2, by1 = b.cy - b.h / 2, by2 = b.cy + b.h / 2;
  const double iw = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
  const double ih = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double threshold) {
  std::vector<std::size_t> rank(dets.size());
  std::iota(rank.begin(), rank.end(), 0);
  // Insertion sort keeps the oracle free of comparator subtleties.
  for (std::size_t i = 1; i < rank.size(); ++i)
    for (std::size_t j = i; j > 0; --j) {
      const auto& a = dets[rank[j - 1]];
      const auto& b = dets[rank[j]];
      if (b.confidence > a.confidence || (b.confidence == a.confidence && rank[j] < rank[j - 1]))
        std::swap(rank[j - 1], rank[j]);
      else
        break;
    }
  std::vector<bool> alive(dets.size(), false);
  std::vector<Detection> out;
  for (std::size_t pos = 0; pos < rank.size(); ++pos) {
    const auto& d = dets[rank[pos]];
    bool keep = true;
    for (std::size_t before = 0; before < pos; ++before) {
      const auto& e = dets[rank[before]];
      if (alive[rank[before]] && e.class_id == d.class_id && box_iou(e.box, d.box) > threshold) keep = false;
    }
    alive[rank[pos]] = keep;
    if (keep) out.push_back(d);
  }
  return out;
}

double average_precision(const std::vector<stereoloc::metrics::ScoredBox>& preds,
                         const std::vector<stereoloc::metrics::FrameBox>& gts, double threshold) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (preds[a].confidence != preds[b].confidence) return preds[a].confidence > preds[b].confidence;
    return preds[a].frame < preds[b].frame;
  });
  std::vector<bool> used(gts.size(), false);
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (std::size_t i : order) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].frame != preds[i].frame) continue;
      const double o = box_iou(preds[i].box, gts[g].box);
      if (o >= threshold && o > best_iou) {
        best_iou = o;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = true;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
  }
  // Area under the precision envelope, one rectangle per recall step.
  double ap = 0.0;
  double previous_recall = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    if (recall[i] <= previous_recall) continue;
    double envelope = 0.0;
    for (std::size_t j = i; j < precision.size(); ++j) envelope = std::max(envelope, precision[j]);
    ap += (recall[i] - previous_recall) * envelope;
    previous_recall = recall[i];
  }
  return ap;
}

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

double detection_loss(const std::vector<double>& grid, std::size_t s, const stereoloc::AnchorSet& anchors,
                      const std::vector<stereoloc::GroundTruthBox>& targets) {
  const std::size_t na = anchors.size();
  const std::size_t stride = 25;
  // Responsible (cell, anchor) per target; a later target losing the slot
  // to an earlier one is dropped.
  std::vector<long> owner(s * s * na, -1);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto& g = targets[t];
    const std::size_t col = std::min(static_cast<std::size_t>(g.cx * s), s - 1);
    const std::size_t row = std::min(static_cast<std::size_t>(g.cy * s), s - 1);
    std::size_t best_a = 0;
    double best = -1.0;
    for (std::size_t a = 0; a < na; ++a) {
      const double gw = g.w * s, gh = g.h * s;
      const double inter = std::min(gw, anchors[a].w) * std::min(gh, anchors[a].h);
      const double shape_iou = inter / (gw * gh + anchors[a].w * anchors[a].h - inter);
      if (shape_iou > best) {
        best = shape_iou;
        best_a = a;
      }
    }
    auto& slot = owner[(row * s + col) * na + best_a];
    if (slot < 0) slot = static_cast<long>(t);
  }

  double coord = 0.0, obj = 0.0, noobj = 0.0, cls = 0.0;
  for (std::size_t row = 0; row < s; ++row)
    for (std::size_t col = 0; col < s; ++col)
      for (std::size_t a = 0; a < na; ++a) {
        const double* t = &grid[((row * s + col) * na + a) * stride];
        const Box pred{(sig(t[0]) + col) / s, (sig(t[1]) + row) / s, anchors[a].w * std::exp(t[2]) / s,
                       anchors[a].h * std::exp(t[3]) / s};
        const double so = sig(t[4]);
        const long o = owner[(row * s + col) * na + a];
        if (o < 0) {
          double best = 0.0;
          for (const auto& g : targets) best = std::max(best, box_iou(pred, g.box()));
          if (best < 0.6) noobj += so * so;
          continue;
        }
        const auto& g = targets[static_cast<std::size_t>(o)];
        const double ex = sig(t[0]) - (g.cx * s - col);
        const double ey = sig(t[1]) - (g.cy * s - row);
        const double ew = t[2] - std::log(g.w * s / anchors[a].w);
        const double eh = t[3] - std::log(g.h * s / anchors[a].h);
        coord += ex * ex + ey * ey + ew * ew + eh * eh;
        const double eo = so - box_iou(pred, g.box());
        obj += eo * eo;
        double z = 0.0;
        for (int k = 0; k < 20; ++k) z += std::exp(t[5 + k]);
        cls += -std::log(std::exp(t[5 + g.class_id]) / z);
      }
  return 1.0 * coord + 5.0 * obj + 1.0 * noobj + 1.0 * cls;
}

double alignment_loss(const std::vector<std::vector<double>>& student, const std::vector<std::vector<double>>& teacher,
                      double margin, double sign) {
  auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(acc);
  };
  double loss = 0.0;
  for (std::size_t i = 0; i < student.size(); ++i)
    for (std::size_t j = 0; j < student.size(); ++j)
      if (i != j)
        loss += std::max(0.0, margin - sign * dist(student[i], teacher[i]) + sign * dist(student[i], teacher[j]));
  return loss;
}

double max_fd_error(const std::function<stereoloc::ad::Tensor()>& loss, std::vector<stereoloc::ad::Tensor> leaves,
                    double h, std::size_t max_per_leaf, std::uint64_t seed, double floor) {
  for (auto& l : leaves) l.zero_grad();
  loss().backward();
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (auto& leaf : leaves) {
    auto values = leaf.mutable_values();
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (max_per_leaf > 0 && idx.size() > max_per_leaf) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_per_leaf);
    }
    const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
    for (std::size_t k : idx) {
      const double saved = values[k];
      values[k] = saved + h;
      const double up = loss().item();
      values[k] = saved - h;
      const double down = loss().item();
      values[k] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double scale = std::max({std::abs(fd), std::abs(analytic[k]), floor});
      worst = std::max(worst, std::abs(fd - analytic[k]) / scale);
    }
  }
  return worst;
}

stereoloc::ad::Tensor random_tensor(const stereoloc::ad::Shape& shape, std::mt19937_64& rng, double scale,
                                    bool requires_grad) {
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<double> v(stereoloc::ad::numel(shape));
  for (auto& e : v) e = nd(rng);
  return stereoloc::ad::Tensor(shape, std::move(v), requires_grad);
}

}  // namespace oracle
