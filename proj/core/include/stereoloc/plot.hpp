#pragma once

// Box overlays rendered to binary PPM images.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "stereoloc/box.hpp"

namespace stereoloc::plot {

using Color = std::array<std::uint8_t, 3>;

inline constexpr Color kGroundTruth{40, 200, 60};
inline constexpr Color kDetection{230, 50, 40};

// Distinct color per tube id.
Color tube_color(int id);

class Image {
 public:
  Image(int width, int height, Color background = {24, 24, 28});

  int width() const { return width_; }
  int height() const { return height_; }
  Color at(int x, int y) const;
  void set(int x, int y, Color c);

  // Outline of a box given in image fractions; pixels outside are skipped.
  void draw_box(const Box& box, Color c, int thickness = 2);
  // Filled square marker at a point given in image fractions.
  void draw_point(double fx, double fy, Color c, int radius = 2);

  void write_ppm(const std::filesystem::path& path) const;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> rgb_;
};

}  // namespace stereoloc::plot
