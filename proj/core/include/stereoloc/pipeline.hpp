#pragma once

// Training, inference, tracking and evaluation over manifest datasets, plus
// the configuration shared by the command-line stages.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "stereoloc/config.hpp"
#include "stereoloc/dsp.hpp"
#include "stereoloc/grid.hpp"
#include "stereoloc/losses.hpp"
#include "stereoloc/metrics.hpp"
#include "stereoloc/model.hpp"
#include "stereoloc/records.hpp"
#include "stereoloc/scenesim.hpp"
#include "stereoloc/tracker.hpp"

namespace stereoloc::pipeline {

struct TrainConfig {
  int epochs = 10;
  double learning_rate = 1e-4;
  int lr_decay_period = 20;  // divide the rate by 10 every this many epochs
  std::size_t batch_size = 16;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double margin = losses::kDefaultMargin;
  double width_multiplier = 0.125;
  bool alignment = true;
  bool meta = true;
  bool mono = false;
  losses::AlignmentSign alignment_sign = losses::AlignmentSign::kAsWritten;
  // Differentiate the objectness term through its IoU target.
  bool iou_gradient = false;
  std::uint64_t seed = 0;

  // 60 epochs, batch 80, full width.
  static TrainConfig full_scale();
};

// Throws std::invalid_argument on non-positive sizes or rates.
void validate(const TrainConfig& cfg);

double learning_rate_at(const TrainConfig& cfg, int epoch);

// Everything a command-line run can be configured with.
struct RunConfig {
  scenesim::SceneConfig scene;
  int clips = 100;
  scenesim::SplitFractions fractions;
  bool mono_export = false;
  TrainConfig train;
  tracker::TrackerConfig tracker;
  std::string split = "test";
  std::string output_dir = ".";
};

// Reads every known key (see README) and rejects the rest. `seed` sets both
// the scene and the training seed.
RunConfig run_config(config::Settings& settings);

// One clip prepared for the network.
struct Sample {
  std::string id;
  std::string sequence;
  int frame = 0;  // middle frame, sequence-global
  dsp::NetworkInput input;
  std::vector<GroundTruthBox> targets;  // visible middle-frame boxes
  std::vector<double> teacher;
};

// Middle-frame ground truth of one clip with per-sequence vehicle ids.
struct FrameTruth {
  std::string id;
  std::string sequence;
  int frame = 0;
  std::vector<int> vehicles;
  std::vector<Box> boxes;
};

std::vector<FrameTruth> load_truth(const records::Manifest& manifest, const std::string& split);

// Runs the audio frontend (or reads `<id>.feat` from `feature_dir` when
// given) for every clip of `split`, in manifest order.
std::vector<Sample> load_samples(const records::Manifest& manifest, const std::string& split, dsp::ChannelMode mode,
                                 const std::optional<std::filesystem::path>& feature_dir = std::nullopt);

// Frontend output as a checkpoint container: tensors `spectrogram`
// [C,256,256] and `meta` [3].
void write_features(const std::filesystem::path& path, const dsp::NetworkInput& input);
dsp::NetworkInput read_features(const std::filesystem::path& path);

// Writes `<id>.feat` for every clip of `split` (all clips when empty).
void featurize(const records::Manifest& manifest, const std::string& split, dsp::ChannelMode mode,
               const std::filesystem::path& out_dir);

struct EpochLog {
  int epoch = 0;
  double learning_rate = 0.0;
  double loss = 0.0;       // mean per clip
  double detection = 0.0;  // mean per clip
  double alignment = 0.0;  // mean per clip
  std::optional<double> val_ap50;
};

struct TrainResult {
  model::StereoSoundNetParams params;
  std::vector<EpochLog> log;
  int selected_epoch = 0;  // 1-based
};

// Fixed per-epoch shuffling from the seed; batches that would leave a
// single clip absorb it. When `val` is non-empty the epoch with the best
// AP@0.5 on it (earliest on ties) is returned, otherwise the last one.
// Throws std::runtime_error naming the batch when the loss is not finite.
TrainResult train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set, const TrainConfig& cfg,
                  std::ostream* progress = nullptr);

std::string format_train_log(const std::vector<EpochLog>& log);

// Model checkpoint plus `train.*` attributes.
ad::Checkpoint to_checkpoint(const TrainResult& result, const TrainConfig& cfg);

struct ClipDetections {
  std::string id;
  std::string sequence;
  int frame = 0;
  std::vector<Detection> detections;  // confidence rule then NMS
  std::vector<Detection> proposals;   // top-k after NMS, for tracking
};

struct DetectOptions {
  std::size_t batch_size = 8;
  std::size_t top_k = 5;
  bool zero_meta = false;
};

std::vector<ClipDetections> detect(model::StereoSoundNetParams& params, const std::vector<Sample>& samples,
                                   const DetectOptions& options = {});

// Channel mode a checkpointed model expects.
dsp::ChannelMode channel_mode(const model::ModelConfig& config);

// Tubes per sequence; clips of a sequence become consecutive frames.
std::map<std::string, std::vector<tracker::Tube>> track(const std::vector<ClipDetections>& clips,
                                                        const tracker::TrackerConfig& cfg);

// AP and CD of the per-clip detections.
metrics::EvalReport evaluate(const std::vector<FrameTruth>& truth, const std::vector<ClipDetections>& dets);

// AP and CD of tube boxes, each scored with its tube's mean raw confidence,
// plus the detections no tube box overlaps; CLEAR-MOT of the tubes.
metrics::EvalReport evaluate_tracking(const std::vector<FrameTruth>& truth, const std::vector<ClipDetections>& dets,
                                      const std::map<std::string, std::vector<tracker::Tube>>& tubes);

// CLEAR-MOT of per-clip detections given fresh random identities.
metrics::MotResult random_id_mot(const std::vector<FrameTruth>& truth, const std::vector<ClipDetections>& dets,
                                 std::uint64_t seed);

// One uniformly random box per clip.
std::vector<ClipDetections> random_baseline(const std::vector<FrameTruth>& truth, std::uint64_t seed);

// File-based stages used by the command-line tool.
void write_detections(const std::filesystem::path& dir, const std::vector<ClipDetections>& dets);
std::vector<ClipDetections> read_detections(const std::filesystem::path& dir, const std::vector<FrameTruth>& clips);
void write_tubes(const std::filesystem::path& dir, const std::map<std::string, std::vector<tracker::Tube>>& tubes);
std::map<std::string, std::vector<tracker::Tube>> read_tubes(const std::filesystem::path& dir,
                                                             const std::vector<FrameTruth>& clips);

// Loads a checkpoint and checks it against an expected width, when given.
model::StereoSoundNetParams load_model(const std::filesystem::path& path,
                                       std::optional<double> expected_width = std::nullopt);

}  // namespace stereoloc::pipeline
