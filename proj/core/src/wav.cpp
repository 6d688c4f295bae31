#include "stereoloc/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace stereoloc {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error("wav " + path.string() + ": " + what);
}

std::uint32_t le32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace

StereoWaveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 12 || std::memcmp(data.data(), "RIFF", 4) != 0 || std::memcmp(data.data() + 8, "WAVE", 4) != 0)
    fail(path, "not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* samples = nullptr;
  std::size_t sample_bytes = 0;
  std::size_t pos = 12;
  while (pos + 8 <= data.size()) {
    const unsigned char* chunk = data.data() + pos;
    std::uint32_t len = le32(chunk + 4);
    if (pos + 8 + len > data.size()) fail(path, "truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16) fail(path, "short fmt chunk");
      format = le16(chunk + 8);
      channels = le16(chunk + 10);
      rate = le32(chunk + 12);
      bits = le16(chunk + 22);
      if (format == 0xFFFE && len >= 40) format = le16(chunk + 8 + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      samples = chunk + 8;
      sample_bytes = len;
    }
    pos += 8 + len + (len & 1u);
  }
  if (!samples) fail(path, "missing data chunk");
  if (channels != 1 && channels != 2) fail(path, "expected 1 or 2 channels, got " + std::to_string(channels));

  StereoWaveform wave;
  wave.sample_rate = static_cast<int>(rate);
  const std::size_t width = bits / 8;
  if (!((format == 1 && bits == 16) || (format == 3 && bits == 32)))
    fail(path, "unsupported encoding (format " + std::to_string(format) + ", " + std::to_string(bits) + " bits)");
  const std::size_t n = sample_bytes / (width * channels);
  auto sample = [&](std::size_t i, std::size_t c) -> double {
    const unsigned char* p = samples + (i * channels + c) * width;
    if (width == 2) return static_cast<std::int16_t>(le16(p)) / 32768.0;
    return std::bit_cast<float>(le32(p));
  };
  wave.left.resize(n);
  wave.right.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    wave.left[i] = sample(i, 0);
    wave.right[i] = sample(i, channels - 1);
  }
  return wave;
}

namespace {

void write_channels(const std::filesystem::path& path, const std::vector<const std::vector<double>*>& chans,
                    int sample_rate, WavEncoding encoding) {
  const bool is_float = encoding == WavEncoding::kFloat32;
  const std::uint16_t bits = is_float ? 32 : 16;
  const auto nch = static_cast<std::uint16_t>(chans.size());
  const std::uint32_t block = nch * bits / 8;
  const auto n = static_cast<std::uint32_t>(chans[0]->size());

  std::string buf;
  buf.reserve(44 + static_cast<std::size_t>(n) * block);
  buf += "RIFF";
  put32(buf, 36 + n * block);
  buf += "WAVEfmt ";
  put32(buf, 16);
  put16(buf, is_float ? 3 : 1);
  put16(buf, nch);
  put32(buf, static_cast<std::uint32_t>(sample_rate));
  put32(buf, static_cast<std::uint32_t>(sample_rate) * block);
  put16(buf, static_cast<std::uint16_t>(block));
  put16(buf, bits);
  buf += "data";
  put32(buf, n * block);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (const auto* ch : chans) {
      const double s = (*ch)[i];
      if (is_float) {
        put32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(s)));
      } else {
        double q = std::round(std::clamp(s, -1.0, 1.0) * 32767.0);
        put16(buf, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
      }
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("wav " + path.string() + ": cannot open for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("wav " + path.string() + ": write failed");
}

}  // namespace

void write_wav(const std::filesystem::path& path, const StereoWaveform& wave, WavEncoding encoding) {
  if (wave.left.size() != wave.right.size()) throw std::invalid_argument("write_wav: channel lengths differ");
  write_channels(path, {&wave.left, &wave.right}, wave.sample_rate, encoding);
}

void write_mono_wav(const std::filesystem::path& path, const std::vector<double>& samples, int sample_rate,
                    WavEncoding encoding) {
  write_channels(path, {&samples}, sample_rate, encoding);
}

}  // namespace stereoloc
