#include "stereoloc/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace stereoloc::losses {

namespace {

struct IouWithGrad {
  double value = 0.0;
  // d IoU / d (cx, cy, w, h) of the predicted box.
  std::array<double, 4> grad{};
};

IouWithGrad iou_with_grad(const Box& p, const Box& g) {
  IouWithGrad out;
  const double iw = std::min(p.x2(), g.x2()) - std::max(p.x1(), g.x1());
  const double ih = std::min(p.y2(), g.y2()) - std::max(p.y1(), g.y1());
  if (iw <= 0.0 || ih <= 0.0) return out;
  const double inter = iw * ih;
  const double uni = p.area() + g.area() - inter;
  if (!(uni > 0.0)) return out;
  out.value = inter / uni;

  // Subgradients of the overlap extents w.r.t. the predicted edges.
  const double diw_dx2 = p.x2() < g.x2() ? 1.0 : 0.0;
  const double diw_dx1 = p.x1() > g.x1() ? -1.0 : 0.0;
  const double dih_dy2 = p.y2() < g.y2() ? 1.0 : 0.0;
  const double dih_dy1 = p.y1() > g.y1() ? -1.0 : 0.0;
  const double diw_dcx = diw_dx2 + diw_dx1;
  const double diw_dw = 0.5 * (diw_dx2 - diw_dx1);
  const double dih_dcy = dih_dy2 + dih_dy1;
  const double dih_dh = 0.5 * (dih_dy2 - dih_dy1);

  const std::array<double, 4> d_inter{ih * diw_dcx, iw * dih_dcy, ih * diw_dw, iw * dih_dh};
  const std::array<double, 4> d_area{0.0, 0.0, p.h, p.w};
  for (int k = 0; k < 4; ++k)
    out.grad[k] = (d_inter[k] * (uni + inter) - inter * d_area[k]) / (uni * uni);
  return out;
}

double sample_loss(const double* g, double* dg, std::span<const GroundTruthBox> targets, const AnchorSet& anchors,
                   const GridLayout& layout, const DetectionLossWeights& wts) {
  const std::size_t s = layout.size;
  const double sd = static_cast<double>(s);
  auto resp = responsibilities(targets, anchors, s);
  std::vector<int> owner(s * s * layout.anchors, -1);
  for (const auto& r : resp) owner[(r.cell.row * s + r.cell.col) * layout.anchors + r.cell.anchor] = static_cast<int>(r.target);

  double loss = 0.0;
  std::vector<double> probs(layout.classes);
  for (std::size_t row = 0; row < s; ++row)
    for (std::size_t col = 0; col < s; ++col)
      for (std::size_t a = 0; a < layout.anchors; ++a) {
        const std::size_t off = layout.offset(row, col, a);
        const double* t = g + off;
        double* dt = dg + off;
        const CellAssignment cell{row, col, a};
        const Box pred = decode(t[0], t[1], t[2], t[3], cell, anchors, s);
        const double sx = sigmoid(t[0]), sy = sigmoid(t[1]), so = sigmoid(t[4]);
        const int owner_idx = owner[(row * s + col) * layout.anchors + a];

        if (owner_idx < 0) {
          double best = 0.0;
          for (const auto& gt : targets) best = std::max(best, iou(pred, gt.box()));
          if (best < wts.ignore_iou) {
            loss += wts.noobj * so * so;
            dt[4] += 2.0 * wts.noobj * so * so * (1.0 - so);
          }
          continue;
        }

        const auto& gt = targets[static_cast<std::size_t>(owner_idx)];
        const EncodedBox enc = encode(gt.box(), cell, anchors, s);

        // Coordinates.
        const double ex = sx - enc.x, ey = sy - enc.y, ew = t[2] - enc.tw, eh = t[3] - enc.th;
        loss += wts.coord * (ex * ex + ey * ey + ew * ew + eh * eh);
        dt[0] += 2.0 * wts.coord * ex * sx * (1.0 - sx);
        dt[1] += 2.0 * wts.coord * ey * sy * (1.0 - sy);
        dt[2] += 2.0 * wts.coord * ew;
        dt[3] += 2.0 * wts.coord * eh;

        // Objectness regressed onto the IoU of the decoded box.
        const auto overlap = iou_with_grad(pred, gt.box());
        const double eo = so - overlap.value;
        loss += wts.obj * eo * eo;
        dt[4] += 2.0 * wts.obj * eo * so * (1.0 - so);
        const double c = wts.iou_gradient ? -2.0 * wts.obj * eo : 0.0;
        dt[0] += c * overlap.grad[0] * sx * (1.0 - sx) / sd;
        dt[1] += c * overlap.grad[1] * sy * (1.0 - sy) / sd;
        dt[2] += c * overlap.grad[2] * pred.w;
        dt[3] += c * overlap.grad[3] * pred.h;

        // Class cross-entropy.
        const double* logits = t + kBoxFields;
        const double peak = *std::max_element(logits, logits + layout.classes);
        double z = 0.0;
        for (std::size_t k = 0; k < layout.classes; ++k) {
          probs[k] = std::exp(logits[k] - peak);
          z += probs[k];
        }
        const auto cls = static_cast<std::size_t>(gt.class_id);
        loss += wts.cls * (std::log(z) + peak - logits[cls]);
        for (std::size_t k = 0; k < layout.classes; ++k)
          dt[kBoxFields + k] += wts.cls * (probs[k] / z - (k == cls ? 1.0 : 0.0));
      }
  return loss;
}

GridLayout layout_for(const ad::Tensor& grid, std::size_t first_axis, const AnchorSet& anchors) {
  const std::size_t s = grid.dim(first_axis);
  if (grid.dim(first_axis + 1) != s) throw std::invalid_argument("detection_loss: grid must be square");
  const std::size_t channels = grid.dim(first_axis + 2);
  if (anchors.empty() || channels % anchors.size() != 0 || channels / anchors.size() <= kBoxFields)
    throw std::invalid_argument("detection_loss: " + std::to_string(channels) + " channels incompatible with " +
                                std::to_string(anchors.size()) + " anchors");
  return {s, anchors.size(), channels / anchors.size() - kBoxFields};
}

}  // namespace

std::vector<Responsibility> responsibilities(std::span<const GroundTruthBox> targets, const AnchorSet& anchors,
                                             std::size_t grid_size) {
  std::vector<Responsibility> out;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto cell = assign(targets[i], anchors, grid_size);
    const bool taken = std::any_of(out.begin(), out.end(), [&](const Responsibility& r) { return r.cell == cell; });
    if (!taken) out.push_back({cell, i});
  }
  return out;
}

ad::Tensor detection_loss(const ad::Tensor& grid, std::span<const GroundTruthBox> targets, const AnchorSet& anchors,
                          const DetectionLossWeights& weights) {
  if (grid.rank() != 3) throw std::invalid_argument("detection_loss: grid must be [S,S,C], got " + ad::to_string(grid.shape()));
  const auto layout = layout_for(grid, 0, anchors);
  for (const auto& t : targets) validate(t, layout.classes);

  std::vector<double> dgrid(grid.size(), 0.0);
  const double loss = sample_loss(grid.values().data(), dgrid.data(), targets, anchors, layout, weights);
  return ad::make_result({1}, {loss}, {grid},
                         [dgrid = std::move(dgrid)](std::span<const double> gy, std::span<std::vector<double>*> grads) {
                           auto& gx = *grads[0];
                           for (std::size_t i = 0; i < dgrid.size(); ++i) gx[i] += gy[0] * dgrid[i];
                         });
}

ad::Tensor detection_loss_batch(const ad::Tensor& grid, std::span<const std::vector<GroundTruthBox>> targets,
                                const AnchorSet& anchors, const DetectionLossWeights& weights) {
  if (grid.rank() != 4)
    throw std::invalid_argument("detection_loss_batch: grid must be [N,S,S,C], got " + ad::to_string(grid.shape()));
  if (targets.size() != grid.dim(0))
    throw std::invalid_argument("detection_loss_batch: one target list per sample required");
  const auto layout = layout_for(grid, 1, anchors);
  for (const auto& list : targets)
    for (const auto& t : list) validate(t, layout.classes);

  const std::size_t per = layout.cell_values();
  std::vector<double> dgrid(grid.size(), 0.0);
  double loss = 0.0;
  for (std::size_t n = 0; n < grid.dim(0); ++n)
    loss += sample_loss(grid.values().data() + n * per, dgrid.data() + n * per, targets[n], anchors, layout, weights);
  return ad::make_result({1}, {loss}, {grid},
                         [dgrid = std::move(dgrid)](std::span<const double> gy, std::span<std::vector<double>*> grads) {
                           auto& gx = *grads[0];
                           for (std::size_t i = 0; i < dgrid.size(); ++i) gx[i] += gy[0] * dgrid[i];
                         });
}

ad::Tensor alignment_loss(const ad::Tensor& student, std::span<const double> teacher, double margin,
                          AlignmentSign sign) {
  if (student.rank() != 2) throw std::invalid_argument("alignment_loss: student features must be [N,D]");
  const std::size_t n = student.dim(0), d = student.dim(1);
  if (n < 2) throw std::invalid_argument("alignment_loss: need at least 2 samples, got " + std::to_string(n));
  if (teacher.size() != n * d)
    throw std::invalid_argument("alignment_loss: teacher features have " + std::to_string(teacher.size()) +
                                " values, expected " + std::to_string(n * d));
  auto s = student.values();

  // dist[i*n+j] = ||s_i - v_j||
  std::vector<double> dist(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = s[i * d + k] - teacher[j * d + k];
        acc += diff * diff;
      }
      dist[i * n + j] = std::sqrt(acc);
    }

  const double paired_sign = sign == AlignmentSign::kAsWritten ? -1.0 : 1.0;
  double loss = 0.0;
  // coef[i*n+j]: d loss / d dist(i, j)
  std::vector<double> coef(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double term = margin + paired_sign * dist[i * n + i] - paired_sign * dist[i * n + j];
      if (term > 0.0) {
        loss += term;
        coef[i * n + i] += paired_sign;
        coef[i * n + j] -= paired_sign;
      }
    }

  std::vector<double> ds(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double c = coef[i * n + j];
      if (c == 0.0 || dist[i * n + j] == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k)
        ds[i * d + k] += c * (s[i * d + k] - teacher[j * d + k]) / dist[i * n + j];
    }
  return ad::make_result({1}, {loss}, {student},
                         [ds = std::move(ds)](std::span<const double> gy, std::span<std::vector<double>*> grads) {
                           auto& gx = *grads[0];
                           for (std::size_t i = 0; i < ds.size(); ++i) gx[i] += gy[0] * ds[i];
                         });
}

ad::Tensor total_loss(const ad::Tensor& det, const ad::Tensor& align) {
  if (!align.defined()) return det;
  return ad::add(det, align);
}

}  // namespace stereoloc::losses
