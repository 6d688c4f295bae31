#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "stereoloc/dsp.hpp"

using namespace stereoloc;
using namespace stereoloc::dsp;

namespace {

StereoWaveform random_clip(std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  StereoWaveform w;
  w.left.resize(kClipSamples);
  w.right.resize(kClipSamples);
  for (std::size_t i = 0; i < kClipSamples; ++i) {
    w.left[i] = nd(rng);
    w.right[i] = 0.5 * nd(rng);
  }
  return w;
}

// Band whose triangle responds most to `hz`, from the HTK mel formula.
std::size_t band_for(double hz) {
  auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto inv = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  const double top = mel(24000.0);
  std::size_t best = 0;
  double best_w = -1.0;
  for (std::size_t m = 0; m < 80; ++m) {
    const double lo = inv(top * m / 81.0), c = inv(top * (m + 1) / 81.0), hi = inv(top * (m + 2) / 81.0);
    double w = 0.0;
    if (hz > lo && hz <= c) w = (hz - lo) / (c - lo);
    if (hz > c && hz < hi) w = (hi - hz) / (hi - c);
    if (w > best_w) {
      best_w = w;
      best = m;
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("dsp") {
  TEST_CASE("normalize_waveform scales by the peak") {
    StereoWaveform w{{0.5, -0.25}, {0.1, 0.0}, 48000};
    const auto n = normalize_waveform(w);
    CHECK(n.left == std::vector<double>{1.0, -0.5});
    CHECK(n.right[0] == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(n.right[1] == 0.0);
  }

  TEST_CASE("normalize_waveform passes silence through") {
    StereoWaveform w{std::vector<double>(10, 0.0), std::vector<double>(10, 0.0), 48000};
    const auto n = normalize_waveform(w);
    CHECK(n.left == w.left);
    CHECK(n.right == w.right);
  }

  TEST_CASE("normalize_waveform peak is one") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto n = normalize_waveform(random_clip(seed));
      double peak = 0.0;
      for (double s : n.left) peak = std::max(peak, std::abs(s));
      for (double s : n.right) peak = std::max(peak, std::abs(s));
      CHECK(std::abs(peak - 1.0) < 1e-12);
    }
  }

  TEST_CASE("mel_spectrogram shape is 187 by 80") {
    const auto g = mel_spectrogram(random_clip(1).left);
    CHECK(g.rows == 187);
    CHECK(g.cols == 80);
    CHECK(g.values.size() == 187u * 80u);
  }

  TEST_CASE("mel_spectrogram rejects other lengths") {
    CHECK_THROWS_AS(mel_spectrogram(std::vector<double>(47999, 0.0)), std::invalid_argument);
    CHECK_THROWS_AS(mel_spectrogram(std::vector<double>(48001, 0.0)), std::invalid_argument);
  }

  TEST_CASE("mel_spectrogram of silence is zero") {
    const auto g = mel_spectrogram(std::vector<double>(kClipSamples, 0.0));
    for (double v : g.values) CHECK(v == 0.0);
  }

  TEST_CASE("pure 1 kHz tone peaks in one band") {
    std::vector<double> tone(kClipSamples);
    for (std::size_t i = 0; i < kClipSamples; ++i) tone[i] = std::sin(2.0 * std::numbers::pi * 1000.0 * i / 48000.0);
    const auto g = mel_spectrogram(tone);
    const std::size_t expected = band_for(1000.0);
    for (std::size_t t = 0; t < g.rows; ++t) {
      const auto row = g.values.begin() + static_cast<std::ptrdiff_t>(t * g.cols);
      CHECK(static_cast<std::size_t>(std::max_element(row, row + 80) - row) == expected);
    }
  }

  TEST_CASE("white noise fills every frame") {
    const auto g = mel_spectrogram(random_clip(2).left);
    for (std::size_t t = 0; t < g.rows; ++t) {
      double total = 0.0;
      for (std::size_t m = 0; m < g.cols; ++m) total += g.at(t, m);
      CHECK(total > 0.0);
    }
    for (double v : g.values) CHECK(std::isfinite(v));
  }

  TEST_CASE("mel filterbank rows are triangles within the spectrum") {
    const auto& fb = mel_filterbank();
    REQUIRE(fb.size() == 80u * 513u);
    for (std::size_t m = 0; m < 80; ++m) {
      double peak = 0.0;
      for (std::size_t k = 0; k < 513; ++k) {
        CHECK(fb[m * 513 + k] >= 0.0);
        CHECK(fb[m * 513 + k] <= 1.0);
        peak = std::max(peak, fb[m * 513 + k]);
      }
      CHECK(peak > 0.0);
    }
  }

  TEST_CASE("meta normalisation endpoints and midpoints") {
    auto lo = normalize_meta({0.0, -30.0, -35.0});
    CHECK(lo == std::array<double, 3>{0.0, 0.0, 0.0});
    auto mid = normalize_meta({1.0, 0.0, 0.0});
    CHECK(mid == std::array<double, 3>{0.5, 0.5, 0.5});
    auto hi = normalize_meta({2.0, 30.0, 35.0});
    CHECK(hi == std::array<double, 3>{1.0, 1.0, 1.0});
  }

  TEST_CASE("meta outside the capture range is rejected") {
    CHECK_THROWS_AS(normalize_meta({2.5, 0.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(normalize_meta({1.0, -31.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(normalize_meta({1.0, 0.0, 36.0}), std::invalid_argument);
    CHECK_THROWS_AS(normalize_meta({-0.1, 0.0, 0.0}), std::invalid_argument);
  }

  TEST_CASE("bilinear resize preserves constants") {
    Grid g{187, 80, std::vector<double>(187 * 80, 2.75)};
    const auto r = resize_bilinear(g, 256, 256);
    CHECK(r.rows == 256);
    CHECK(r.cols == 256);
    for (double v : r.values) CHECK(v == 2.75);
  }

  TEST_CASE("bilinear resize keeps source bounds and corners") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-3.0, 5.0);
    Grid g{13, 7, std::vector<double>(13 * 7)};
    for (auto& v : g.values) v = u(rng);
    const auto [mn, mx] = std::minmax_element(g.values.begin(), g.values.end());
    const auto r = resize_bilinear(g, 40, 29);
    for (double v : r.values) {
      CHECK(v >= *mn);
      CHECK(v <= *mx);
    }
    CHECK(r.at(0, 0) == g.at(0, 0));
    CHECK(r.at(39, 28) == g.at(12, 6));
    CHECK(r.at(0, 28) == g.at(0, 6));
  }

  TEST_CASE("network input layout") {
    const auto in = to_network_input(random_clip(4), {1.0, 0.0, 0.0});
    CHECK(in.channels == 2);
    CHECK(in.spectrogram.size() == 2u * 256u * 256u);
    for (double v : in.spectrogram) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
    }
    const auto mono = to_network_input(random_clip(4), {1.0, 0.0, 0.0}, ChannelMode::kMono);
    CHECK(mono.channels == 1);
    CHECK(mono.spectrogram.size() == 256u * 256u);
  }

  TEST_CASE("frontend is invariant to power-of-two gains") {
    const auto clip = random_clip(5);
    const auto ref = to_network_input(clip, {0.7, 10.0, -5.0});
    for (double gain : {0.125, 0.5, 2.0, 64.0}) {
      auto scaled = clip;
      for (auto& s : scaled.left) s *= gain;
      for (auto& s : scaled.right) s *= gain;
      CHECK(to_network_input(scaled, {0.7, 10.0, -5.0}).spectrogram == ref.spectrogram);
    }
  }

  TEST_CASE("frontend gain invariance up to rounding for other gains") {
    const auto clip = random_clip(6);
    const auto ref = to_network_input(clip, {0.7, 10.0, -5.0});
    for (double gain : {0.3, 1.7, 13.1}) {
      auto scaled = clip;
      for (auto& s : scaled.left) s *= gain;
      for (auto& s : scaled.right) s *= gain;
      const auto out = to_network_input(scaled, {0.7, 10.0, -5.0});
      double worst = 0.0;
      for (std::size_t i = 0; i < out.spectrogram.size(); ++i)
        worst = std::max(worst, std::abs(out.spectrogram[i] - ref.spectrogram[i]));
      CHECK(worst < 1e-12);
    }
  }

  TEST_CASE("channel swap swaps spectrogram channels") {
    const auto clip = random_clip(7);
    StereoWaveform swapped{clip.right, clip.left, clip.sample_rate};
    const auto a = to_network_input(clip, {1.0, 0.0, 0.0});
    const auto b = to_network_input(swapped, {1.0, 0.0, 0.0});
    const std::size_t per = 256 * 256;
    CHECK(std::equal(a.spectrogram.begin(), a.spectrogram.begin() + per, b.spectrogram.begin() + per));
    CHECK(std::equal(a.spectrogram.begin() + per, a.spectrogram.end(), b.spectrogram.begin()));
  }

  TEST_CASE("mono input sums the channels") {
    auto clip = random_clip(8);
    StereoWaveform summed;
    summed.left.resize(kClipSamples);
    for (std::size_t i = 0; i < kClipSamples; ++i) summed.left[i] = clip.left[i] + clip.right[i];
    summed.right = summed.left;
    const auto mono = to_network_input(clip, {1.0, 0.0, 0.0}, ChannelMode::kMono);
    const auto stereo_of_sum = to_network_input(summed, {1.0, 0.0, 0.0});
    CHECK(std::equal(mono.spectrogram.begin(), mono.spectrogram.end(), stereo_of_sum.spectrogram.begin()));
  }

  TEST_CASE("frontend rejects clips that are not one second") {
    StereoWaveform w{std::vector<double>(24000, 0.0), std::vector<double>(24000, 0.0), 48000};
    CHECK_THROWS_AS(to_network_input(w, {}), std::invalid_argument);
  }
}
