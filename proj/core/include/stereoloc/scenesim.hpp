#pragma once

// Synthetic stereo traffic scenes: vehicles driving along a straight road in
// front of a camera with a two-microphone array, rendered as paired stereo
// audio, camera meta-data, per-frame ground-truth boxes and teacher features.
//
// Coordinates are metres. World frame: x right, y up, z forward, origin on the
// road surface below the camera. The camera sits at (0, height, 0), is panned
// by `rotation_deg` about y and then tilted down by `pitch_deg`. The road runs
// along x at depth `road_distance`. The microphones share the camera frame.
//
// Clips are 1 s windows cut from longer sequences: segment k of a sequence
// starts at video frame k * hop_frames, so its middle frame is
// k * hop_frames + 12. Training clips come from single-segment sequences.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stereoloc/box.hpp"
#include "stereoloc/dsp.hpp"
#include "stereoloc/wav.hpp"

namespace stereoloc::scenesim {

inline constexpr int kFps = 24;
inline constexpr int kFramesPerClip = 24;
inline constexpr int kMiddleFrame = 12;
inline constexpr std::size_t kSamplesPerFrame = dsp::kClipSamples / kFramesPerClip;
inline constexpr double kSpeedOfSound = 343.0;
inline constexpr double kVehicleLength = 4.5;
inline constexpr double kVehicleWidth = 1.8;
inline constexpr double kVehicleHeight = 1.5;
inline constexpr std::size_t kOccupancySide = 8;

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct SceneConfig {
  Range height_m{0.5, 2.0};
  Range pitch_deg{-30.0, 30.0};
  Range rotation_deg{-35.0, 35.0};
  double focal_px = 640.0;
  int image_width = 1280;
  int image_height = 720;

  Range road_distance_m{10.0, 25.0};
  int direction = 0;  // +1 left to right, -1 right to left, 0 random
  int max_vehicles = 1;
  double two_vehicle_probability = 0.5;  // used when max_vehicles == 2
  double lane_spacing_m = 3.5;
  Range speed_mps{5.0, 15.0};

  Range f0_hz{60.0, 180.0};
  int harmonics = 8;
  double band_noise_level = 0.3;  // relative to the harmonic stack
  double noise_floor = 0.002;     // per-channel sensor noise std
  double mic_baseline_m = 0.3;
  double output_gain = 0.25;

  int hop_frames = 2;
  int sequence_length = 10;  // segments per val/test sequence
  std::size_t teacher_dim = 64;
  std::uint64_t seed = 0;
};

// Throws std::invalid_argument when a range is inverted or leaves the camera
// capture limits, or when a count or size is not positive.
void validate(const SceneConfig& cfg);

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  friend Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
};

struct Camera {
  dsp::CameraMeta meta;
  double focal_px = 640.0;
  int image_width = 1280;
  int image_height = 720;
};

// World point into the camera frame (x right, y down, z along the optical axis).
Vec3 to_camera(const Vec3& world, const dsp::CameraMeta& meta);

// Bounding rectangle of the projected vehicle cuboid whose base center sits
// at `center` (y ignored; the cuboid stands on the road, long side along x),
// clipped to the image, in image fractions. Empty when any corner lies
// behind the camera or nothing remains after clipping.
std::optional<Box> project(const Vec3& center, const Camera& camera);

// Source positions in the microphone frame, sampled uniformly in time.
struct Trajectory {
  std::vector<Vec3> positions;
  double duration_s = 1.0;
  Vec3 at(double t) const;  // linear interpolation, clamped at the ends
};

struct SourceSignal {
  double f0_hz = 100.0;
  int harmonics = 8;
  double band_noise_level = 0.3;
  std::uint64_t seed = 0;
};

// Renders one source moving along `trajectory` at 48 kHz for
// `trajectory.duration_s` seconds, without sensor noise.
StereoWaveform render_audio(const Trajectory& trajectory, const SourceSignal& source, double mic_baseline_m);

// Horizontal azimuth in the microphone frame; positive to the right.
double azimuth(const Vec3& p);

struct FrameBox {
  int frame = 0;
  int vehicle = 0;
  std::optional<Box> box;  // empty when off-screen
};

struct ClipRecord {
  std::string id;
  std::string split;
  std::string sequence;
  int segment = 0;
  int middle_frame = kMiddleFrame;
  dsp::CameraMeta meta;
  StereoWaveform audio;
  std::vector<FrameBox> boxes;  // kFramesPerClip frames x vehicles
  std::vector<double> teacher;
};

// Middle-frame boxes rasterised on an 8x8 grid (cell value = covered
// fraction, clamped to 1), flattened row-major and zero-padded to `dim`.
std::vector<double> teacher_feature(const std::vector<Box>& boxes, std::size_t dim);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// Clip counts per split: val and test are rounded, train takes the rest.
std::array<int, 3> split_counts(int n_clips, const SplitFractions& fractions);

// Deterministic in (cfg, n_clips, fractions). Clip ids are
// `<split><sequence>_<segment>` with zero-padded numbers.
std::vector<ClipRecord> generate(const SceneConfig& cfg, int n_clips, const SplitFractions& fractions);

// Writes `manifest.txt`, `wav/`, `gt/` and `teacher/` under `dir`. With
// `mono`, audio files hold the single summed channel.
void write_dataset(const std::filesystem::path& dir, const SceneConfig& cfg, const std::vector<ClipRecord>& clips,
                   bool mono = false);

void generate_dataset(const std::filesystem::path& dir, const SceneConfig& cfg, int n_clips,
                      const SplitFractions& fractions, bool mono = false);

}  // namespace stereoloc::scenesim
