#pragma once

// Audio frontend: waveform normalisation, log-mel spectrogram, bilinear
// resize and camera meta-data normalisation.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "stereoloc/wav.hpp"

namespace stereoloc::dsp {

inline constexpr int kSampleRate = 48000;
inline constexpr std::size_t kClipSamples = 48000;
inline constexpr std::size_t kFftSize = 1024;
inline constexpr std::size_t kHop = 256;
// Right-padded length that frames to exactly kFrames windows.
inline constexpr std::size_t kPaddedSamples = 48640;
inline constexpr std::size_t kFrames = (kPaddedSamples - kFftSize) / kHop + 1;
inline constexpr std::size_t kFreqBins = kFftSize / 2 + 1;
inline constexpr std::size_t kMelBands = 80;
inline constexpr std::size_t kInputSize = 256;

static_assert(kFrames == 187);

struct CameraMeta {
  double height_m = 1.0;
  double pitch_deg = 0.0;
  double rotation_deg = 0.0;
};

inline constexpr double kMaxHeight = 2.0;
inline constexpr double kMaxPitch = 30.0;
inline constexpr double kMaxRotation = 35.0;

// Throws std::invalid_argument when any component is outside its capture range.
void validate(const CameraMeta& meta);

// Affine map of (height, pitch, rotation) from their capture ranges to [0,1].
std::array<double, 3> normalize_meta(const CameraMeta& meta);

// Row-major 2-D grid of values.
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

// Scales both channels by 1/max|sample|. Silent input passes through.
StereoWaveform normalize_waveform(StereoWaveform wave);

// 187x80 log-mel magnitude spectrogram of a 48000-sample mono signal.
Grid mel_spectrogram(std::span<const double> mono);

// 80 triangular HTK-mel filters over the 513 FFT bins, row-major [80][513].
const std::vector<double>& mel_filterbank();

// Bilinear resize with corner alignment; output values stay within the
// bounds of each interpolated neighbourhood.
Grid resize_bilinear(const Grid& src, std::size_t rows, std::size_t cols);

enum class ChannelMode { kStereo, kMono };

struct NetworkInput {
  std::size_t channels = 2;
  // channels x 256 x 256, rows are time, columns are mel bands.
  std::vector<double> spectrogram;
  std::array<double, 3> meta{};
};

// Full frontend. Mono mode sums the two channels into one before
// normalisation and yields a single-channel spectrogram.
NetworkInput to_network_input(const StereoWaveform& clip, const CameraMeta& meta,
                              ChannelMode mode = ChannelMode::kStereo);

}  // namespace stereoloc::dsp
