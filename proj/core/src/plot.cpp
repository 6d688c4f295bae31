#include "stereoloc/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace stereoloc::plot {

Color tube_color(int id) {
  static constexpr std::array<Color, 8> palette{{{66, 135, 245},
                                                 {245, 197, 66},
                                                 {186, 85, 211},
                                                 {0, 206, 209},
                                                 {255, 140, 0},
                                                 {255, 105, 180},
                                                 {154, 205, 50},
                                                 {220, 220, 220}}};
  return palette[static_cast<std::size_t>(((id % 8) + 8) % 8)];
}

Image::Image(int width, int height, Color background) : width_(width), height_(height) {
  if (width < 1 || height < 1) throw std::invalid_argument("plot: image size must be positive");
  rgb_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < rgb_.size(); i += 3) std::copy(background.begin(), background.end(), rgb_.begin() + i);
}

Color Image::at(int x, int y) const {
  const auto i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {rgb_[i], rgb_[i + 1], rgb_[i + 2]};
}

void Image::set(int x, int y, Color c) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  const auto i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  rgb_[i] = c[0];
  rgb_[i + 1] = c[1];
  rgb_[i + 2] = c[2];
}

void Image::draw_box(const Box& box, Color c, int thickness) {
  const int x1 = static_cast<int>(std::lround(box.x1() * width_));
  const int x2 = static_cast<int>(std::lround(box.x2() * width_)) - 1;
  const int y1 = static_cast<int>(std::lround(box.y1() * height_));
  const int y2 = static_cast<int>(std::lround(box.y2() * height_)) - 1;
  for (int t = 0; t < thickness; ++t) {
    for (int x = x1; x <= x2; ++x) {
      set(x, y1 + t, c);
      set(x, y2 - t, c);
    }
    for (int y = y1; y <= y2; ++y) {
      set(x1 + t, y, c);
      set(x2 - t, y, c);
    }
  }
}

void Image::draw_point(double fx, double fy, Color c, int radius) {
  const int cx = static_cast<int>(std::lround(fx * width_));
  const int cy = static_cast<int>(std::lround(fy * height_));
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) set(cx + dx, cy + dy, c);
}

void Image::write_ppm(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  const std::string header = "P6\n" + std::to_string(width_) + " " + std::to_string(height_) + "\n255\n";
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(rgb_.data()), static_cast<std::streamsize>(rgb_.size()));
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace stereoloc::plot
