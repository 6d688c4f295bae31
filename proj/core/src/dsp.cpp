#include "stereoloc/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace stereoloc::dsp {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

// One shared r2c plan; fftw_execute_dft_r2c on fresh fftw_malloc buffers is
// thread-safe, plan creation is not.
const fftw_plan& shared_plan() {
  static std::once_flag once;
  static fftw_plan plan = nullptr;
  std::call_once(once, [] {
    std::unique_ptr<double, FftwDeleter> in(static_cast<double*>(fftw_malloc(sizeof(double) * kFftSize)));
    std::unique_ptr<fftw_complex, FftwDeleter> out(
        static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * kFreqBins)));
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(kFftSize), in.get(), out.get(), FFTW_ESTIMATE);
  });
  return plan;
}

const std::vector<double>& hann_window() {
  static const std::vector<double> window = [] {
    std::vector<double> w(kFftSize);
    for (std::size_t n = 0; n < kFftSize; ++n)
      w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / kFftSize);
    return w;
  }();
  return window;
}

}  // namespace

void validate(const CameraMeta& meta) {
  auto check = [](double v, double lo, double hi, const char* name) {
    if (!(v >= lo && v <= hi))
      throw std::invalid_argument(std::string("camera meta ") + name + " = " + std::to_string(v) +
                                  " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  };
  check(meta.height_m, 0.0, kMaxHeight, "height");
  check(meta.pitch_deg, -kMaxPitch, kMaxPitch, "pitch");
  check(meta.rotation_deg, -kMaxRotation, kMaxRotation, "rotation");
}

std::array<double, 3> normalize_meta(const CameraMeta& meta) {
  validate(meta);
  return {meta.height_m / kMaxHeight, (meta.pitch_deg + kMaxPitch) / (2.0 * kMaxPitch),
          (meta.rotation_deg + kMaxRotation) / (2.0 * kMaxRotation)};
}

StereoWaveform normalize_waveform(StereoWaveform wave) {
  if (wave.left.size() != wave.right.size()) throw std::invalid_argument("normalize_waveform: channel lengths differ");
  double peak = 0.0;
  for (double s : wave.left) peak = std::max(peak, std::abs(s));
  for (double s : wave.right) peak = std::max(peak, std::abs(s));
  if (peak == 0.0) return wave;
  for (double& s : wave.left) s /= peak;
  for (double& s : wave.right) s /= peak;
  return wave;
}

const std::vector<double>& mel_filterbank() {
  static const std::vector<double> bank = [] {
    std::vector<double> fb(kMelBands * kFreqBins, 0.0);
    const double mel_hi = hz_to_mel(kSampleRate / 2.0);
    std::vector<double> edges(kMelBands + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
      edges[i] = mel_to_hz(mel_hi * static_cast<double>(i) / static_cast<double>(kMelBands + 1));
    for (std::size_t m = 0; m < kMelBands; ++m) {
      const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
      for (std::size_t k = 0; k < kFreqBins; ++k) {
        const double f = static_cast<double>(k) * kSampleRate / kFftSize;
        double w = 0.0;
        if (f > lo && f <= center)
          w = (f - lo) / (center - lo);
        else if (f > center && f < hi)
          w = (hi - f) / (hi - center);
        fb[m * kFreqBins + k] = w;
      }
    }
    return fb;
  }();
  return bank;
}

Grid mel_spectrogram(std::span<const double> mono) {
  if (mono.size() != kClipSamples)
    throw std::invalid_argument("mel_spectrogram: expected " + std::to_string(kClipSamples) + " samples, got " +
                                std::to_string(mono.size()));
  const auto& plan = shared_plan();
  const auto& window = hann_window();
  const auto& fb = mel_filterbank();

  std::unique_ptr<double, FftwDeleter> in(static_cast<double*>(fftw_malloc(sizeof(double) * kFftSize)));
  std::unique_ptr<fftw_complex, FftwDeleter> out(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * kFreqBins)));
  std::vector<double> magnitude(kFreqBins);

  Grid grid{kFrames, kMelBands, std::vector<double>(kFrames * kMelBands, 0.0)};
  for (std::size_t t = 0; t < kFrames; ++t) {
    const std::size_t start = t * kHop;
    bool silent = true;
    for (std::size_t n = 0; n < kFftSize; ++n) {
      const std::size_t idx = start + n;
      const double s = idx < mono.size() ? mono[idx] : 0.0;
      in.get()[n] = s * window[n];
      silent = silent && s == 0.0;
    }
    if (silent) continue;
    fftw_execute_dft_r2c(plan, in.get(), out.get());
    for (std::size_t k = 0; k < kFreqBins; ++k) magnitude[k] = std::hypot(out.get()[k][0], out.get()[k][1]);
    for (std::size_t m = 0; m < kMelBands; ++m) {
      double acc = 0.0;
      const double* row = fb.data() + m * kFreqBins;
      for (std::size_t k = 0; k < kFreqBins; ++k) acc += row[k] * magnitude[k];
      grid.values[t * kMelBands + m] = std::log1p(acc);
    }
  }
  return grid;
}

Grid resize_bilinear(const Grid& src, std::size_t rows, std::size_t cols) {
  if (src.rows == 0 || src.cols == 0 || rows == 0 || cols == 0)
    throw std::invalid_argument("resize_bilinear: empty grid");
  auto lerp = [](double a, double b, double t) {
    const double v = a + t * (b - a);
    return std::clamp(v, std::min(a, b), std::max(a, b));
  };
  auto coord = [](std::size_t i, std::size_t out_n, std::size_t in_n) {
    if (out_n == 1 || in_n == 1) return std::pair<std::size_t, double>{0, 0.0};
    const double pos = static_cast<double>(i) * static_cast<double>(in_n - 1) / static_cast<double>(out_n - 1);
    auto lo = static_cast<std::size_t>(pos);
    if (lo >= in_n - 1) return std::pair<std::size_t, double>{in_n - 2, 1.0};
    return std::pair<std::size_t, double>{lo, pos - static_cast<double>(lo)};
  };

  Grid out{rows, cols, std::vector<double>(rows * cols)};
  std::vector<std::pair<std::size_t, double>> cx(cols);
  for (std::size_t c = 0; c < cols; ++c) cx[c] = coord(c, cols, src.cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto [r0, tr] = coord(r, rows, src.rows);
    const std::size_t r1 = src.rows == 1 ? 0 : r0 + 1;
    for (std::size_t c = 0; c < cols; ++c) {
      auto [c0, tc] = cx[c];
      const std::size_t c1 = src.cols == 1 ? 0 : c0 + 1;
      const double top = lerp(src.at(r0, c0), src.at(r0, c1), tc);
      const double bottom = lerp(src.at(r1, c0), src.at(r1, c1), tc);
      out.values[r * cols + c] = lerp(top, bottom, tr);
    }
  }
  return out;
}

NetworkInput to_network_input(const StereoWaveform& clip, const CameraMeta& meta, ChannelMode mode) {
  if (clip.left.size() != kClipSamples || clip.right.size() != kClipSamples)
    throw std::invalid_argument("to_network_input: clip must hold exactly " + std::to_string(kClipSamples) +
                                " samples per channel");
  NetworkInput input;
  input.meta = normalize_meta(meta);

  std::vector<std::vector<double>> channels;
  if (mode == ChannelMode::kStereo) {
    auto normalized = normalize_waveform(clip);
    channels.push_back(std::move(normalized.left));
    channels.push_back(std::move(normalized.right));
  } else {
    StereoWaveform summed;
    summed.left.resize(kClipSamples);
    for (std::size_t i = 0; i < kClipSamples; ++i) summed.left[i] = clip.left[i] + clip.right[i];
    summed.right.assign(kClipSamples, 0.0);
    channels.push_back(normalize_waveform(std::move(summed)).left);
  }

  input.channels = channels.size();
  input.spectrogram.reserve(input.channels * kInputSize * kInputSize);
  for (const auto& ch : channels) {
    auto resized = resize_bilinear(mel_spectrogram(ch), kInputSize, kInputSize);
    input.spectrogram.insert(input.spectrogram.end(), resized.values.begin(), resized.values.end());
  }
  return input;
}

}  // namespace stereoloc::dsp
