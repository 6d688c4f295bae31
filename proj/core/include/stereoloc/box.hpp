#pragma once

namespace stereoloc {

// Axis-aligned box in image fractions, center form.
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x1() const { return cx - 0.5 * w; }
  double x2() const { return cx + 0.5 * w; }
  double y1() const { return cy - 0.5 * h; }
  double y2() const { return cy + 0.5 * h; }
  double area() const { return w * h; }

  static Box from_corners(double x1, double y1, double x2, double y2) {
    return {0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1};
  }
  friend bool operator==(const Box&, const Box&) = default;
};

// Intersection over union; 0 when the union is degenerate.
double iou(const Box& a, const Box& b);

// Intersection with the unit square.
Box clip_to_unit(const Box& b);

}  // namespace stereoloc
