#pragma once

// Detection grid layout and the anchor box coder shared by the detection
// loss and the decoder.
//
// A grid is [S,S,A*(5+K)] channels-last. For anchor a at cell (row, col) the
// channels a*(5+K) + {0..4} hold (tx, ty, tw, th, to) and the following K
// channels hold class logits. A prediction decodes as
//   cx = (sigmoid(tx) + col) / S      cy = (sigmoid(ty) + row) / S
//   w  = anchor_w * exp(tw) / S       h  = anchor_h * exp(th) / S

#include <cstddef>
#include <vector>

#include "stereoloc/box.hpp"

namespace stereoloc {

inline constexpr std::size_t kGridSize = 13;
inline constexpr std::size_t kNumAnchors = 5;
inline constexpr std::size_t kNumClasses = 20;
inline constexpr std::size_t kBoxFields = 5;
inline constexpr std::size_t kGridChannels = kNumAnchors * (kBoxFields + kNumClasses);
// "car" in the Pascal VOC class ordering.
inline constexpr int kCarClass = 6;

static_assert(kGridChannels == 125);

// Prior extents in grid-cell units.
struct Anchor {
  double w = 1.0;
  double h = 1.0;
};

using AnchorSet = std::vector<Anchor>;

const AnchorSet& default_anchors();

struct GridLayout {
  std::size_t size = kGridSize;
  std::size_t anchors = kNumAnchors;
  std::size_t classes = kNumClasses;

  std::size_t stride() const { return kBoxFields + classes; }
  std::size_t channels() const { return anchors * stride(); }
  std::size_t cell_values() const { return size * size * channels(); }
  std::size_t offset(std::size_t row, std::size_t col, std::size_t anchor) const {
    return (row * size + col) * channels() + anchor * stride();
  }
};

struct GroundTruthBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  int class_id = kCarClass;

  Box box() const { return {cx, cy, w, h}; }
};

// Throws std::invalid_argument unless 0<=cx,cy<=1, 0<w,h<=1 and the class
// index is within [0, classes).
void validate(const GroundTruthBox& gt, std::size_t classes = kNumClasses);

struct CellAssignment {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t anchor = 0;
  friend bool operator==(const CellAssignment&, const CellAssignment&) = default;
};

// Cell containing the box center; anchor with the highest shape IoU against
// the box extent (ties resolved to the lowest index).
CellAssignment assign(const GroundTruthBox& gt, const AnchorSet& anchors, std::size_t grid_size);

// Regression targets for a responsible anchor: the in-cell offsets that
// sigmoid(tx), sigmoid(ty) should reach and the raw tw, th.
struct EncodedBox {
  double x = 0.0;
  double y = 0.0;
  double tw = 0.0;
  double th = 0.0;
};

EncodedBox encode(const Box& box, const CellAssignment& cell, const AnchorSet& anchors, std::size_t grid_size);

// Decodes raw logits at a cell without clipping.
Box decode(double tx, double ty, double tw, double th, const CellAssignment& cell, const AnchorSet& anchors,
           std::size_t grid_size);

double sigmoid(double x);
double logit(double p);

}  // namespace stereoloc
