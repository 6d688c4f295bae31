#pragma once

#include <filesystem>
#include <vector>

namespace stereoloc {

struct StereoWaveform {
  std::vector<double> left;
  std::vector<double> right;
  int sample_rate = 48000;

  std::size_t frames() const { return left.size(); }
};

enum class WavEncoding { kPcm16, kFloat32 };

// Reads a 1- or 2-channel RIFF/WAVE file holding 16-bit PCM or 32-bit IEEE
// float samples (plain or WAVE_FORMAT_EXTENSIBLE headers). A mono file fills
// both channels. Throws std::runtime_error on anything else.
StereoWaveform read_wav(const std::filesystem::path& path);

void write_wav(const std::filesystem::path& path, const StereoWaveform& wave,
               WavEncoding encoding = WavEncoding::kFloat32);
void write_mono_wav(const std::filesystem::path& path, const std::vector<double>& samples, int sample_rate,
                    WavEncoding encoding = WavEncoding::kFloat32);

}  // namespace stereoloc
