#include "stereoloc/scenesim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "stereoloc/grid.hpp"
#include "stereoloc/records.hpp"

namespace stereoloc::scenesim {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr int kMaxAttempts = 10000;
constexpr double kNearPlane = 0.1;
constexpr double kTrajectoryRate = 240.0;
constexpr std::size_t kNoisePad = 64;

std::optional<Box> project_unclipped(const Vec3& center, const Camera& cam) {
  double x1 = 1e300, y1 = 1e300, x2 = -1e300, y2 = -1e300;
  for (double dx : {-0.5 * kVehicleLength, 0.5 * kVehicleLength})
    for (double dy : {0.0, kVehicleHeight})
      for (double dz : {-0.5 * kVehicleWidth, 0.5 * kVehicleWidth}) {
        const Vec3 c = to_camera({center.x + dx, dy, center.z + dz}, cam.meta);
        if (c.z <= kNearPlane) return std::nullopt;
        const double u = cam.focal_px * c.x / c.z + 0.5 * cam.image_width;
        const double v = cam.focal_px * c.y / c.z + 0.5 * cam.image_height;
        x1 = std::min(x1, u);
        x2 = std::max(x2, u);
        y1 = std::min(y1, v);
        y2 = std::max(y2, v);
      }
  return Box::from_corners(x1 / cam.image_width, y1 / cam.image_height, x2 / cam.image_width,
                           y2 / cam.image_height);
}

double uniform(std::mt19937_64& rng, const Range& r) {
  return r.lo == r.hi ? r.lo : std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

void check_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi)) throw std::invalid_argument(std::string("scene config: inverted range ") + name);
}

// Harmonic stack plus band-passed noise, evaluable at fractional times.
class Source {
 public:
  Source(const SourceSignal& sig, std::size_t samples) : f0_(sig.f0_hz) {
    std::mt19937_64 rng(sig.seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    double power = 0.0;
    for (int k = 1; k <= sig.harmonics; ++k) {
      if (k * sig.f0_hz >= 0.45 * dsp::kSampleRate) break;
      amps_.push_back(1.0 / k);
      phases_.push_back(phase(rng));
      power += 0.5 / (k * k);
    }

    // RBJ band-pass biquad (constant peak gain) centred at 1 kHz, Q = 1.
    const double w0 = 2.0 * std::numbers::pi * 1000.0 / dsp::kSampleRate;
    const double alpha = std::sin(w0) / 2.0;
    const double a0 = 1.0 + alpha;
    const double b0 = alpha / a0, b2 = -alpha / a0;
    const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
    std::normal_distribution<double> gauss;
    noise_.resize(samples + 2 * kNoisePad);
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0, energy = 0.0;
    for (auto& v : noise_) {
      const double x = gauss(rng);
      const double y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = x;
      y2 = y1;
      y1 = y;
      v = y;
      energy += y * y;
    }
    const double rms = std::sqrt(energy / static_cast<double>(noise_.size()));
    const double scale = rms > 0.0 ? sig.band_noise_level * std::sqrt(power) / rms : 0.0;
    for (auto& v : noise_) v *= scale;
  }

  double operator()(double t) const {
    double s = 0.0;
    for (std::size_t k = 0; k < amps_.size(); ++k)
      s += amps_[k] * std::sin(2.0 * std::numbers::pi * f0_ * static_cast<double>(k + 1) * t + phases_[k]);
    const double pos = std::clamp(t * dsp::kSampleRate + kNoisePad, 0.0, static_cast<double>(noise_.size() - 2));
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return s + noise_[i] + frac * (noise_[i + 1] - noise_[i]);
  }

 private:
  double f0_;
  std::vector<double> amps_, phases_, noise_;
};

struct Vehicle {
  double depth = 15.0;  // road z
  double x0 = 0.0;      // x at t = 0
  double velocity = 10.0;
  double f0 = 100.0;
  Vec3 at(double t) const { return {x0 + velocity * t, 0.0, depth}; }
};

struct Sequence {
  dsp::CameraMeta meta;
  std::vector<Vehicle> vehicles;
};

bool boxes_intersect(const Box& a, const Box& b) {
  return std::min(a.x2(), b.x2()) > std::max(a.x1(), b.x1()) && std::min(a.y2(), b.y2()) > std::max(a.y1(), b.y1());
}

// Middle-frame boxes must be at least half inside the image and, with two
// vehicles, disjoint.
bool acceptable(const Sequence& seq, const Camera& cam, int segments, int hop) {
  for (int k = 0; k < segments; ++k) {
    const double t = static_cast<double>(k * hop + kMiddleFrame) / kFps;
    std::vector<Box> boxes;
    for (const auto& v : seq.vehicles) {
      const auto raw = project_unclipped(v.at(t), cam);
      if (!raw) return false;
      const Box clipped = clip_to_unit(*raw);
      if (clipped.w <= 0.0 || clipped.h <= 0.0 || clipped.area() < 0.5 * raw->area()) return false;
      boxes.push_back(clipped);
    }
    if (boxes.size() == 2 && boxes_intersect(boxes[0], boxes[1])) return false;
  }
  return true;
}

Sequence sample_sequence(const SceneConfig& cfg, std::mt19937_64& rng, int segments) {
  const double t_center = (0.5 * (segments - 1) * cfg.hop_frames + kMiddleFrame) / kFps;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Sequence seq;
    seq.meta = {uniform(rng, cfg.height_m), uniform(rng, cfg.pitch_deg), uniform(rng, cfg.rotation_deg)};
    const Camera cam{seq.meta, cfg.focal_px, cfg.image_width, cfg.image_height};
    const int count = (cfg.max_vehicles == 2 && unit(rng) < cfg.two_vehicle_probability) ? 2 : 1;
    const double base_depth = uniform(rng, cfg.road_distance_m);
    for (int i = 0; i < count; ++i) {
      Vehicle v;
      v.depth = base_depth + i * cfg.lane_spacing_m;
      int dir = cfg.direction;
      if (dir == 0) dir = unit(rng) < 0.5 ? -1 : 1;
      v.velocity = dir * uniform(rng, cfg.speed_mps);
      v.f0 = uniform(rng, cfg.f0_hz);
      // Aim the vehicle's center-time position within the horizontal field of view.
      const double half_fov = std::atan(0.5 * cfg.image_width / cfg.focal_px);
      const double bearing = seq.meta.rotation_deg * kDeg + (2.0 * unit(rng) - 1.0) * half_fov;
      const double x_center = v.depth * std::tan(bearing);
      v.x0 = x_center - v.velocity * t_center;
      seq.vehicles.push_back(v);
    }
    if (acceptable(seq, cam, segments, cfg.hop_frames)) return seq;
  }
  throw std::runtime_error("scenesim: no visible scene after " + std::to_string(kMaxAttempts) +
                           " attempts; widen the road or camera ranges");
}

std::string pad(int v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*d", width, v);
  return buf;
}

// Renders the whole sequence, cuts it into clips.
std::vector<ClipRecord> render_sequence(const SceneConfig& cfg, const Sequence& seq, const std::string& split,
                                        const std::string& name, int segments, std::uint64_t seed) {
  const Camera cam{seq.meta, cfg.focal_px, cfg.image_width, cfg.image_height};
  const int total_frames = (segments - 1) * cfg.hop_frames + kFramesPerClip;
  const double duration = static_cast<double>(total_frames) / kFps;
  const auto samples = static_cast<std::size_t>(total_frames) * kSamplesPerFrame;

  StereoWaveform mix;
  mix.left.assign(samples, 0.0);
  mix.right.assign(samples, 0.0);
  for (std::size_t i = 0; i < seq.vehicles.size(); ++i) {
    const auto& v = seq.vehicles[i];
    Trajectory traj;
    traj.duration_s = duration;
    const auto knots = static_cast<std::size_t>(std::ceil(duration * kTrajectoryRate)) + 1;
    for (std::size_t k = 0; k < knots; ++k) {
      const double t = duration * static_cast<double>(k) / static_cast<double>(knots - 1);
      Vec3 c = to_camera(v.at(t) + Vec3{0.0, 0.5 * kVehicleHeight, 0.0}, seq.meta);
      traj.positions.push_back(c);
    }
    const SourceSignal sig{v.f0, cfg.harmonics, cfg.band_noise_level, seed * 31 + i + 1};
    const auto wave = render_audio(traj, sig, cfg.mic_baseline_m);
    for (std::size_t n = 0; n < samples; ++n) {
      mix.left[n] += wave.left[n];
      mix.right[n] += wave.right[n];
    }
  }
  std::mt19937_64 noise_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss(0.0, cfg.noise_floor);
  for (std::size_t n = 0; n < samples; ++n) {
    mix.left[n] = cfg.output_gain * mix.left[n] + gauss(noise_rng);
    mix.right[n] = cfg.output_gain * mix.right[n] + gauss(noise_rng);
  }

  std::vector<ClipRecord> clips;
  for (int k = 0; k < segments; ++k) {
    ClipRecord rec;
    rec.sequence = name;
    rec.segment = k;
    rec.id = name + "_" + pad(k, 3);
    rec.split = split;
    rec.meta = seq.meta;
    rec.middle_frame = k * cfg.hop_frames + kMiddleFrame;
    const std::size_t start = static_cast<std::size_t>(k * cfg.hop_frames) * kSamplesPerFrame;
    rec.audio.left.assign(mix.left.begin() + start, mix.left.begin() + start + dsp::kClipSamples);
    rec.audio.right.assign(mix.right.begin() + start, mix.right.begin() + start + dsp::kClipSamples);
    std::vector<Box> middle;
    for (int f = 0; f < kFramesPerClip; ++f) {
      const int frame = k * cfg.hop_frames + f;
      for (std::size_t i = 0; i < seq.vehicles.size(); ++i) {
        const auto box = project(seq.vehicles[i].at(static_cast<double>(frame) / kFps), cam);
        rec.boxes.push_back({frame, static_cast<int>(i), box});
        if (f == kMiddleFrame && box) middle.push_back(*box);
      }
    }
    rec.teacher = teacher_feature(middle, cfg.teacher_dim);
    clips.push_back(std::move(rec));
  }
  return clips;
}

}  // namespace

void validate(const SceneConfig& cfg) {
  check_range(cfg.height_m, "height_m");
  check_range(cfg.pitch_deg, "pitch_deg");
  check_range(cfg.rotation_deg, "rotation_deg");
  check_range(cfg.road_distance_m, "road_distance_m");
  check_range(cfg.speed_mps, "speed_mps");
  check_range(cfg.f0_hz, "f0_hz");
  dsp::validate({cfg.height_m.lo, cfg.pitch_deg.lo, cfg.rotation_deg.lo});
  dsp::validate({cfg.height_m.hi, cfg.pitch_deg.hi, cfg.rotation_deg.hi});
  if (cfg.max_vehicles != 1 && cfg.max_vehicles != 2)
    throw std::invalid_argument("scene config: max_vehicles must be 1 or 2");
  if (cfg.direction < -1 || cfg.direction > 1) throw std::invalid_argument("scene config: direction must be -1, 0 or 1");
  if (!(cfg.focal_px > 0.0) || cfg.image_width < 1 || cfg.image_height < 1)
    throw std::invalid_argument("scene config: camera intrinsics must be positive");
  if (!(cfg.road_distance_m.lo > 0.0)) throw std::invalid_argument("scene config: road must lie in front");
  if (!(cfg.f0_hz.lo > 0.0) || cfg.harmonics < 1) throw std::invalid_argument("scene config: bad source signal");
  if (cfg.band_noise_level < 0.0 || cfg.noise_floor < 0.0 || !(cfg.output_gain > 0.0) || cfg.mic_baseline_m < 0.0)
    throw std::invalid_argument("scene config: levels must be non-negative");
  if (cfg.two_vehicle_probability < 0.0 || cfg.two_vehicle_probability > 1.0)
    throw std::invalid_argument("scene config: two_vehicle_probability must lie in [0,1]");
  if (cfg.hop_frames < 1 || cfg.sequence_length < 1)
    throw std::invalid_argument("scene config: hop_frames and sequence_length must be >= 1");
  if (cfg.teacher_dim < kOccupancySide * kOccupancySide)
    throw std::invalid_argument("scene config: teacher_dim must be >= 64");
}

Vec3 to_camera(const Vec3& world, const dsp::CameraMeta& meta) {
  const double x = world.x, y = world.y - meta.height_m, z = world.z;
  const double r = meta.rotation_deg * kDeg, p = meta.pitch_deg * kDeg;
  const double xr = x * std::cos(r) - z * std::sin(r);
  const double zr = x * std::sin(r) + z * std::cos(r);
  const double y_up = y * std::cos(p) + zr * std::sin(p);
  const double zc = -y * std::sin(p) + zr * std::cos(p);
  return {xr, -y_up, zc};
}

std::optional<Box> project(const Vec3& center, const Camera& camera) {
  const auto raw = project_unclipped(center, camera);
  if (!raw) return std::nullopt;
  const Box b = clip_to_unit(*raw);
  if (b.w <= 0.0 || b.h <= 0.0) return std::nullopt;
  return b;
}

Vec3 Trajectory::at(double t) const {
  if (positions.empty()) return {};
  if (positions.size() == 1 || t <= 0.0) return positions.front();
  const double pos = t / duration_s * static_cast<double>(positions.size() - 1);
  if (pos >= static_cast<double>(positions.size() - 1)) return positions.back();
  const auto i = static_cast<std::size_t>(pos);
  const double f = pos - static_cast<double>(i);
  const Vec3& a = positions[i];
  const Vec3& b = positions[i + 1];
  return {a.x + f * (b.x - a.x), a.y + f * (b.y - a.y), a.z + f * (b.z - a.z)};
}

double azimuth(const Vec3& p) { return std::atan2(p.x, p.z); }

StereoWaveform render_audio(const Trajectory& trajectory, const SourceSignal& source, double mic_baseline_m) {
  const auto n = static_cast<std::size_t>(std::llround(trajectory.duration_s * dsp::kSampleRate));
  const Source signal(source, n);
  StereoWaveform out;
  out.left.resize(n);
  out.right.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / dsp::kSampleRate;
    const Vec3 p = trajectory.at(t);
    const double r = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
    const double s = std::sin(azimuth(p));
    const double gain = 1.0 / std::max(r, 1.0);
    const double half_itd = 0.5 * mic_baseline_m / kSpeedOfSound * s;
    const double ild = std::pow(10.0, 3.0 * s / 20.0);
    out.left[i] = gain / ild * signal(t - half_itd);
    out.right[i] = gain * ild * signal(t + half_itd);
  }
  return out;
}

std::vector<double> teacher_feature(const std::vector<Box>& boxes, std::size_t dim) {
  constexpr std::size_t side = kOccupancySide;
  if (dim < side * side) throw std::invalid_argument("teacher_feature: dim must be >= 64");
  std::vector<double> out(dim, 0.0);
  const double cell = 1.0 / side;
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) {
      const double cx1 = c * cell, cx2 = (c + 1) * cell, cy1 = r * cell, cy2 = (r + 1) * cell;
      double covered = 0.0;
      for (const auto& b : boxes) {
        const double ix = std::min(cx2, b.x2()) - std::max(cx1, b.x1());
        const double iy = std::min(cy2, b.y2()) - std::max(cy1, b.y1());
        if (ix > 0.0 && iy > 0.0) covered += ix * iy / (cell * cell);
      }
      out[r * side + c] = std::min(covered, 1.0);
    }
  return out;
}

std::array<int, 3> split_counts(int n_clips, const SplitFractions& f) {
  if (n_clips < 1) throw std::invalid_argument("split_counts: need at least one clip");
  if (f.train < 0 || f.val < 0 || f.test < 0 || f.train + f.val + f.test <= 0)
    throw std::invalid_argument("split_counts: fractions must be non-negative with a positive sum");
  const double total = f.train + f.val + f.test;
  const int val = static_cast<int>(std::lround(n_clips * f.val / total));
  const int test = static_cast<int>(std::lround(n_clips * f.test / total));
  const int train = n_clips - val - test;
  if (train < 0) throw std::invalid_argument("split_counts: rounding left no room for train clips");
  return {train, val, test};
}

std::vector<ClipRecord> generate(const SceneConfig& cfg, int n_clips, const SplitFractions& fractions) {
  validate(cfg);
  const auto counts = split_counts(n_clips, fractions);
  const char* names[3] = {"train", "val", "test"};
  std::vector<ClipRecord> out;
  for (std::uint32_t s = 0; s < 3; ++s) {
    int remaining = counts[s];
    const int seq_len = s == 0 ? 1 : cfg.sequence_length;
    for (std::uint32_t q = 0; remaining > 0; ++q) {
      const int segments = std::min(seq_len, remaining);
      remaining -= segments;
      std::seed_seq seq_seed{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), s, q};
      std::mt19937_64 rng(seq_seed);
      const Sequence seq = sample_sequence(cfg, rng, segments);
      const std::uint64_t render_seed = rng();
      auto clips = render_sequence(cfg, seq, names[s], names[s] + pad(static_cast<int>(q), 4), segments, render_seed);
      for (auto& c : clips) out.push_back(std::move(c));
    }
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const SceneConfig& cfg, const std::vector<ClipRecord>& clips,
                   bool mono) {
  std::filesystem::create_directories(dir / "wav");
  std::filesystem::create_directories(dir / "gt");
  std::filesystem::create_directories(dir / "teacher");
  records::Manifest manifest;
  manifest.hop_frames = cfg.hop_frames;
  for (const auto& c : clips) {
    records::ManifestEntry e;
    e.id = c.id;
    e.split = c.split;
    e.wav = "wav/" + c.id + ".wav";
    e.meta = c.meta;
    e.teacher = "teacher/" + c.id + ".txt";
    e.gt = "gt/" + c.id + ".txt";
    if (mono) {
      std::vector<double> sum(c.audio.left.size());
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = c.audio.left[i] + c.audio.right[i];
      write_mono_wav(dir / e.wav, sum, c.audio.sample_rate, WavEncoding::kPcm16);
    } else {
      write_wav(dir / e.wav, c.audio, WavEncoding::kPcm16);
    }
    std::vector<records::GtRecord> gt;
    for (const auto& b : c.boxes) gt.push_back({b.frame, b.vehicle, b.box, kCarClass});
    records::write_gt(dir / e.gt, gt);
    records::write_feature(dir / e.teacher, c.teacher);
    manifest.entries.push_back(std::move(e));
  }
  records::write_manifest(dir / "manifest.txt", manifest);
}

void generate_dataset(const std::filesystem::path& dir, const SceneConfig& cfg, int n_clips,
                      const SplitFractions& fractions, bool mono) {
  write_dataset(dir, cfg, generate(cfg, n_clips, fractions), mono);
}

}  // namespace stereoloc::scenesim
