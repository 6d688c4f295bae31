#include "stereoloc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "stereoloc/checkpoint.hpp"
#include "stereoloc/optim.hpp"
#include "stereoloc/postprocess.hpp"
#include "stereoloc/wav.hpp"

namespace stereoloc::pipeline {

namespace {

std::mt19937_64 seeded(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

std::vector<GroundTruthBox> middle_targets(const std::vector<records::GtRecord>& gt, int frame,
                                           std::vector<int>* vehicles = nullptr) {
  std::vector<GroundTruthBox> out;
  for (const auto& g : gt) {
    if (g.frame != frame || !g.box) continue;
    GroundTruthBox t{g.box->cx, g.box->cy, g.box->w, g.box->h, g.class_id};
    validate(t);
    out.push_back(t);
    if (vehicles) vehicles->push_back(g.vehicle);
  }
  return out;
}

std::vector<FrameTruth> truth_of(const std::vector<Sample>& samples) {
  std::vector<FrameTruth> out;
  for (const auto& s : samples) {
    FrameTruth t{s.id, s.sequence, s.frame, {}, {}};
    for (std::size_t i = 0; i < s.targets.size(); ++i) {
      t.vehicles.push_back(static_cast<int>(i));
      t.boxes.push_back(s.targets[i].box());
    }
    out.push_back(std::move(t));
  }
  return out;
}

const char* sign_name(losses::AlignmentSign s) {
  return s == losses::AlignmentSign::kAsWritten ? "as_written" : "conventional";
}

std::string fmt(double v) { return records::format_number(v); }

// Dense frame keys for (sequence, frame) pairs in truth order.
struct FrameIndex {
  std::map<std::pair<std::string, int>, int> keys;
  std::map<std::string, int> sequences;
  explicit FrameIndex(const std::vector<FrameTruth>& truth) {
    for (const auto& t : truth) {
      keys.try_emplace({t.sequence, t.frame}, static_cast<int>(keys.size()));
      sequences.try_emplace(t.sequence, static_cast<int>(sequences.size()));
    }
  }
  std::optional<int> key(const std::string& seq, int frame) const {
    auto it = keys.find({seq, frame});
    if (it == keys.end()) return std::nullopt;
    return it->second;
  }
};

constexpr int kIdsPerSequence = 100000;

std::vector<metrics::FrameBox> gt_boxes(const std::vector<FrameTruth>& truth, const FrameIndex& index) {
  std::vector<metrics::FrameBox> out;
  for (const auto& t : truth)
    for (const auto& b : t.boxes) out.push_back({*index.key(t.sequence, t.frame), b});
  return out;
}

std::vector<metrics::TrackedBox> gt_tracks(const std::vector<FrameTruth>& truth, const FrameIndex& index) {
  std::vector<metrics::TrackedBox> out;
  for (const auto& t : truth)
    for (std::size_t i = 0; i < t.boxes.size(); ++i)
      out.push_back({*index.key(t.sequence, t.frame),
                     index.sequences.at(t.sequence) * kIdsPerSequence + t.vehicles[i], t.boxes[i]});
  return out;
}

metrics::EvalReport detection_report(const std::vector<metrics::ScoredBox>& preds,
                                     const std::vector<metrics::FrameBox>& gts) {
  metrics::EvalReport r;
  const auto thresholds = metrics::coco_thresholds();
  const auto ap = metrics::average_precision(preds, gts, thresholds);
  r.ap_avg = ap.mean;
  r.ap_50 = ap.ap[0];
  r.ap_75 = ap.ap[5];
  const auto cd = metrics::center_distance(preds, gts);
  r.cd_x = cd.cd_x;
  r.cd_y = cd.cd_y;
  return r;
}

}  // namespace

TrainConfig TrainConfig::full_scale() {
  TrainConfig c;
  c.epochs = 60;
  c.batch_size = 80;
  c.width_multiplier = 1.0;
  return c;
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (!(cfg.learning_rate >= 0.0)) throw std::invalid_argument("train config: learning_rate must be >= 0");
  if (cfg.lr_decay_period < 1) throw std::invalid_argument("train config: lr_decay_period must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw std::invalid_argument("train config: momentum must lie in [0,1)");
  if (!(cfg.weight_decay >= 0.0)) throw std::invalid_argument("train config: weight_decay must be >= 0");
  if (!(cfg.margin > 0.0)) throw std::invalid_argument("train config: margin must be > 0");
  if (!(cfg.width_multiplier > 0.0 && cfg.width_multiplier <= 1.0))
    throw std::invalid_argument("train config: width_multiplier must lie in (0,1]");
}

double learning_rate_at(const TrainConfig& cfg, int epoch) {
  return cfg.learning_rate * std::pow(0.1, epoch / cfg.lr_decay_period);
}

RunConfig run_config(config::Settings& s) {
  RunConfig rc;
  auto& sc = rc.scene;
  s.read_pair("height_m", sc.height_m.lo, sc.height_m.hi);
  s.read_pair("pitch_deg", sc.pitch_deg.lo, sc.pitch_deg.hi);
  s.read_pair("rotation_deg", sc.rotation_deg.lo, sc.rotation_deg.hi);
  s.read("focal_px", sc.focal_px);
  s.read("image_width", sc.image_width);
  s.read("image_height", sc.image_height);
  s.read_pair("road_distance_m", sc.road_distance_m.lo, sc.road_distance_m.hi);
  s.read("direction", sc.direction);
  s.read("max_vehicles", sc.max_vehicles);
  s.read("two_vehicle_probability", sc.two_vehicle_probability);
  s.read("lane_spacing_m", sc.lane_spacing_m);
  s.read_pair("speed_mps", sc.speed_mps.lo, sc.speed_mps.hi);
  s.read_pair("f0_hz", sc.f0_hz.lo, sc.f0_hz.hi);
  s.read("harmonics", sc.harmonics);
  s.read("band_noise_level", sc.band_noise_level);
  s.read("noise_floor", sc.noise_floor);
  s.read("mic_baseline_m", sc.mic_baseline_m);
  s.read("output_gain", sc.output_gain);
  s.read("hop_frames", sc.hop_frames);
  s.read("sequence_length", sc.sequence_length);
  s.read("teacher_dim", sc.teacher_dim);

  s.read("clips", rc.clips);
  s.read("train_fraction", rc.fractions.train);
  s.read("val_fraction", rc.fractions.val);
  s.read("test_fraction", rc.fractions.test);
  s.read("mono_export", rc.mono_export);

  auto& tc = rc.train;
  s.read("epochs", tc.epochs);
  s.read("learning_rate", tc.learning_rate);
  s.read("lr_decay_period", tc.lr_decay_period);
  s.read("batch_size", tc.batch_size);
  s.read("momentum", tc.momentum);
  s.read("weight_decay", tc.weight_decay);
  s.read("margin", tc.margin);
  s.read("width_multiplier", tc.width_multiplier);
  s.read("alignment", tc.alignment);
  s.read("meta", tc.meta);
  s.read("mono", tc.mono);
  s.read("iou_gradient", tc.iou_gradient);
  std::string sign = sign_name(tc.alignment_sign);
  s.read("alignment_sign", sign);
  if (sign == "as_written")
    tc.alignment_sign = losses::AlignmentSign::kAsWritten;
  else if (sign == "conventional")
    tc.alignment_sign = losses::AlignmentSign::kConventional;
  else
    throw config::ConfigError("alignment_sign must be as_written or conventional, got '" + sign + "'");

  auto& tr = rc.tracker;
  s.read("tau1", tr.init_confidence);
  s.read("tau2", tr.iou_gate);
  s.read("tau3", tr.keep_confidence);
  s.read("top_k", tr.top_k);
  s.read("smoothing_alpha", tr.smoothing_alpha);

  std::uint64_t seed = 0;
  if (s.has("seed")) {
    s.read("seed", seed);
    sc.seed = seed;
    tc.seed = seed;
  }
  s.read("split", rc.split);
  s.read("output_dir", rc.output_dir);
  s.require_all_used();

  try {
    scenesim::validate(sc);
    validate(tc);
    tracker::validate(tr);
  } catch (const std::invalid_argument& e) {
    throw config::ConfigError(e.what());
  }
  if (rc.clips < 1) throw config::ConfigError("clips must be >= 1");
  return rc;
}

std::vector<FrameTruth> load_truth(const records::Manifest& manifest, const std::string& split) {
  std::vector<FrameTruth> out;
  for (const auto* e : manifest.split(split)) {
    FrameTruth t;
    t.id = e->id;
    t.sequence = e->sequence();
    t.frame = manifest.middle_frame(*e);
    for (const auto& g : middle_targets(records::read_gt(manifest.resolve(e->gt)), t.frame, &t.vehicles))
      t.boxes.push_back(g.box());
    out.push_back(std::move(t));
  }
  return out;
}

void write_features(const std::filesystem::path& path, const dsp::NetworkInput& input) {
  ad::Checkpoint ck;
  ck.attributes["kind"] = "features";
  ck.entries.push_back({"spectrogram", {input.channels, dsp::kInputSize, dsp::kInputSize}, input.spectrogram});
  ck.entries.push_back({"meta", {3}, {input.meta.begin(), input.meta.end()}});
  ad::save_checkpoint(path, ck);
}

dsp::NetworkInput read_features(const std::filesystem::path& path) {
  const auto ck = ad::load_checkpoint(path);
  const auto* spec = ck.find("spectrogram");
  const auto* meta = ck.find("meta");
  if (!spec || !meta || spec->shape.size() != 3 || spec->shape[1] != dsp::kInputSize ||
      spec->shape[2] != dsp::kInputSize || meta->values.size() != 3)
    throw std::runtime_error(path.string() + ": not a feature file");
  dsp::NetworkInput in;
  in.channels = spec->shape[0];
  in.spectrogram = spec->values;
  std::copy(meta->values.begin(), meta->values.end(), in.meta.begin());
  return in;
}

std::vector<Sample> load_samples(const records::Manifest& manifest, const std::string& split, dsp::ChannelMode mode,
                                 const std::optional<std::filesystem::path>& feature_dir) {
  std::vector<Sample> out;
  for (const auto* e : manifest.split(split)) {
    Sample s;
    s.id = e->id;
    s.sequence = e->sequence();
    s.frame = manifest.middle_frame(*e);
    if (feature_dir) {
      s.input = read_features(*feature_dir / (e->id + ".feat"));
      const std::size_t want = mode == dsp::ChannelMode::kMono ? 1 : 2;
      if (s.input.channels != want)
        throw std::runtime_error(e->id + ".feat: holds " + std::to_string(s.input.channels) + " channel(s), expected " +
                                 std::to_string(want));
    } else {
      s.input = dsp::to_network_input(read_wav(manifest.resolve(e->wav)), e->meta, mode);
    }
    s.targets = middle_targets(records::read_gt(manifest.resolve(e->gt)), s.frame);
    if (std::filesystem::exists(manifest.resolve(e->teacher))) s.teacher = records::read_feature(manifest.resolve(e->teacher));
    out.push_back(std::move(s));
  }
  return out;
}

void featurize(const records::Manifest& manifest, const std::string& split, dsp::ChannelMode mode,
               const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (const auto& e : manifest.entries) {
    if (!split.empty() && e.split != split) continue;
    write_features(out_dir / (e.id + ".feat"),
                   dsp::to_network_input(read_wav(manifest.resolve(e.wav)), e.meta, mode));
  }
}

dsp::ChannelMode channel_mode(const model::ModelConfig& config) {
  return config.input_channels == 1 ? dsp::ChannelMode::kMono : dsp::ChannelMode::kStereo;
}

TrainResult train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set, const TrainConfig& cfg,
                  std::ostream* progress) {
  validate(cfg);
  if (train_set.empty()) throw std::invalid_argument("train: empty training split");
  const std::size_t channels = cfg.mono ? 1 : 2;
  for (const auto& s : train_set)
    if (s.input.channels != channels)
      throw std::invalid_argument("train: clip " + s.id + " has " + std::to_string(s.input.channels) +
                                  " input channel(s), config expects " + std::to_string(channels));

  model::ModelConfig mc;
  mc.width_multiplier = cfg.width_multiplier;
  mc.input_channels = channels;
  mc.use_meta = cfg.meta;
  const bool use_align = cfg.alignment && train_set.size() >= 2;
  if (use_align) {
    mc.teacher_dim = train_set.front().teacher.size();
    for (const auto& s : train_set)
      if (s.teacher.size() != mc.teacher_dim || s.teacher.empty())
        throw std::invalid_argument("train: clip " + s.id + " lacks a teacher feature of the common dimension");
  }

  TrainResult result;
  result.params = model::init_params(mc, cfg.seed);
  auto& params = result.params;
  ad::Sgd opt(model::named_parameters(params, use_align), {cfg.learning_rate, cfg.momentum, cfg.weight_decay});

  const auto val_truth = truth_of(val_set);
  std::optional<model::StereoSoundNetParams> best;
  double best_ap = -1.0;
  result.selected_epoch = cfg.epochs;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate_at(cfg, epoch);
    opt.set_learning_rate(lr);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    auto rng = seeded(cfg.seed, static_cast<std::uint32_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size)
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + cfg.batch_size)));
    if (batches.size() > 1 && batches.back().size() == 1) {
      batches[batches.size() - 2].push_back(batches.back().front());
      batches.pop_back();
    }

    EpochLog log;
    log.epoch = epoch + 1;
    log.learning_rate = lr;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& idx = batches[b];
      std::vector<const dsp::NetworkInput*> inputs;
      std::vector<std::vector<GroundTruthBox>> targets;
      std::vector<double> teacher;
      for (std::size_t i : idx) {
        inputs.push_back(&train_set[i].input);
        targets.push_back(train_set[i].targets);
        teacher.insert(teacher.end(), train_set[i].teacher.begin(), train_set[i].teacher.end());
      }
      opt.zero_grad();
      const auto out = model::forward(params, model::make_batch(inputs), ad::BatchNormMode::kTrain);
      losses::DetectionLossWeights weights;
      weights.iou_gradient = cfg.iou_gradient;
      const auto det = losses::detection_loss_batch(out.grid, targets, default_anchors(), weights);
      ad::Tensor align;
      if (use_align && idx.size() >= 2) align = losses::alignment_loss(out.align_feature, teacher, cfg.margin, cfg.alignment_sign);
      const auto total = losses::total_loss(det, align);
      const double value = total.item();
      if (!std::isfinite(value)) {
        std::string ids;
        for (std::size_t i : idx) ids += (ids.empty() ? "" : ",") + train_set[i].id;
        throw std::runtime_error("train: non-finite loss " + fmt(value) + " (detection " + fmt(det.item()) +
                                 ") in epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(b + 1) +
                                 " [" + ids + "]");
      }
      total.backward();
      opt.step();
      log.loss += value;
      log.detection += det.item();
      log.alignment += align.defined() ? align.item() : 0.0;
    }
    const double n = static_cast<double>(train_set.size());
    log.loss /= n;
    log.detection /= n;
    log.alignment /= n;

    if (!val_set.empty()) {
      const auto dets = detect(params, val_set);
      std::vector<metrics::ScoredBox> preds;
      const FrameIndex index(val_truth);
      for (const auto& d : dets)
        for (const auto& det : d.detections) preds.push_back({*index.key(d.sequence, d.frame), det.box, det.confidence});
      const auto gts = gt_boxes(val_truth, index);
      const double ap = gts.empty() ? 0.0 : metrics::average_precision(preds, gts, 0.5);
      log.val_ap50 = ap;
      if (ap > best_ap) {
        best_ap = ap;
        best = model::clone(params);
        result.selected_epoch = epoch + 1;
      }
    }
    if (progress) {
      *progress << "epoch " << log.epoch << "/" << cfg.epochs << "  lr " << lr << "  loss " << log.loss << "  det "
                << log.detection << "  align " << log.alignment;
      if (log.val_ap50) *progress << "  val_ap50 " << *log.val_ap50;
      *progress << std::endl;
    }
    result.log.push_back(log);
  }
  if (best) result.params = std::move(*best);
  return result;
}

std::string format_train_log(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "# epoch learning_rate loss detection alignment val_ap50\n";
  for (const auto& l : log)
    os << l.epoch << ' ' << fmt(l.learning_rate) << ' ' << fmt(l.loss) << ' ' << fmt(l.detection) << ' '
       << fmt(l.alignment) << ' ' << (l.val_ap50 ? fmt(*l.val_ap50) : std::string("-")) << '\n';
  return os.str();
}

ad::Checkpoint to_checkpoint(const TrainResult& result, const TrainConfig& cfg) {
  auto ck = model::to_checkpoint(result.params);
  auto& a = ck.attributes;
  a["train.epochs"] = std::to_string(cfg.epochs);
  a["train.learning_rate"] = fmt(cfg.learning_rate);
  a["train.lr_decay_period"] = std::to_string(cfg.lr_decay_period);
  a["train.batch_size"] = std::to_string(cfg.batch_size);
  a["train.momentum"] = fmt(cfg.momentum);
  a["train.weight_decay"] = fmt(cfg.weight_decay);
  a["train.margin"] = fmt(cfg.margin);
  a["train.alignment"] = cfg.alignment ? "true" : "false";
  a["train.alignment_sign"] = sign_name(cfg.alignment_sign);
  a["train.iou_gradient"] = cfg.iou_gradient ? "true" : "false";
  a["train.seed"] = std::to_string(cfg.seed);
  a["train.selected_epoch"] = std::to_string(result.selected_epoch);
  return ck;
}

model::StereoSoundNetParams load_model(const std::filesystem::path& path, std::optional<double> expected_width) {
  const auto ck = ad::load_checkpoint(path);
  auto params = model::from_checkpoint(ck);
  if (expected_width && params.config.width_multiplier != *expected_width)
    throw std::invalid_argument(path.string() + ": checkpoint width " + fmt(params.config.width_multiplier) +
                                " does not match the requested width " + fmt(*expected_width));
  return params;
}

std::vector<ClipDetections> detect(model::StereoSoundNetParams& params, const std::vector<Sample>& samples,
                                   const DetectOptions& options) {
  if (options.batch_size < 1) throw std::invalid_argument("detect: batch_size must be >= 1");
  const GridLayout layout;
  std::vector<ClipDetections> out;
  for (std::size_t start = 0; start < samples.size(); start += options.batch_size) {
    const std::size_t end = std::min(samples.size(), start + options.batch_size);
    std::vector<dsp::NetworkInput> zeroed;
    std::vector<const dsp::NetworkInput*> inputs;
    if (options.zero_meta) {
      for (std::size_t i = start; i < end; ++i) {
        zeroed.push_back(samples[i].input);
        zeroed.back().meta = {0.0, 0.0, 0.0};
      }
      for (const auto& z : zeroed) inputs.push_back(&z);
    } else {
      for (std::size_t i = start; i < end; ++i) inputs.push_back(&samples[i].input);
    }
    const auto result = model::forward(params, model::make_batch(inputs), ad::BatchNormMode::kEval);
    const auto grid = result.grid.detach();
    const auto values = grid.values();
    const std::size_t per = layout.cell_values();
    for (std::size_t i = start; i < end; ++i) {
      const auto& s = samples[i];
      const auto all = postprocess::decode_grid(values.subspan((i - start) * per, per), default_anchors(), kGridSize,
                                                s.frame);
      ClipDetections d;
      d.id = s.id;
      d.sequence = s.sequence;
      d.frame = s.frame;
      d.detections = postprocess::nms(postprocess::select_detections(all));
      d.proposals = postprocess::top_proposals(all, options.top_k);
      out.push_back(std::move(d));
    }
  }
  return out;
}

std::map<std::string, std::vector<tracker::Tube>> track(const std::vector<ClipDetections>& clips,
                                                        const tracker::TrackerConfig& cfg) {
  std::map<std::string, std::vector<const ClipDetections*>> by_seq;
  for (const auto& c : clips) by_seq[c.sequence].push_back(&c);
  std::map<std::string, std::vector<tracker::Tube>> out;
  for (auto& [seq, list] : by_seq) {
    std::stable_sort(list.begin(), list.end(),
                     [](const ClipDetections* a, const ClipDetections* b) { return a->frame < b->frame; });
    std::vector<std::vector<Detection>> frames;
    for (const auto* c : list) frames.push_back(c->proposals);
    out[seq] = tracker::track(frames, cfg);
  }
  return out;
}

metrics::EvalReport evaluate(const std::vector<FrameTruth>& truth, const std::vector<ClipDetections>& dets) {
  const FrameIndex index(truth);
  std::vector<metrics::ScoredBox> preds;
  for (const auto& d : dets)
    if (const auto key = index.key(d.sequence, d.frame))
      for (const auto& det : d.detections) preds.push_back({*key, det.box, det.confidence});
  return detection_report(preds, gt_boxes(truth, index));
}

metrics::EvalReport evaluate_tracking(const std::vector<FrameTruth>& truth, const std::vector<ClipDetections>& dets,
                                      const std::map<std::string, std::vector<tracker::Tube>>& tubes) {
  const FrameIndex index(truth);
  std::vector<metrics::ScoredBox> preds;
  std::vector<metrics::TrackedBox> hyps;
  std::map<int, std::vector<Box>> tube_boxes;
  for (const auto& [seq, list] : tubes) {
    auto s = index.sequences.find(seq);
    if (s == index.sequences.end()) continue;
    for (const auto& tube : list) {
      double score = 0.0;
      for (const auto& b : tube.raw_boxes) score += b.confidence;
      if (!tube.raw_boxes.empty()) score /= static_cast<double>(tube.raw_boxes.size());
      for (const auto& b : tube.boxes)
        if (const auto key = index.key(seq, b.frame_index)) {
          preds.push_back({*key, b.box, score});
          hyps.push_back({*key, s->second * kIdsPerSequence + tube.id, b.box});
          tube_boxes[*key].push_back(b.box);
        }
    }
  }
  // Detections a tube box overlaps are superseded by it; the rest stay.
  for (const auto& d : dets)
    if (const auto key = index.key(d.sequence, d.frame)) {
      const auto& covering = tube_boxes[*key];
      for (const auto& det : d.detections)
        if (std::none_of(covering.begin(), covering.end(),
                         [&](const Box& b) { return iou(b, det.box) > postprocess::kNmsIouThreshold; }))
          preds.push_back({*key, det.box, det.confidence});
    }

  auto report = detection_report(preds, gt_boxes(truth, index));
  report.has_tracking = true;
  report.mot = metrics::clear_mot(hyps, gt_tracks(truth, index));
  return report;
}

metrics::MotResult random_id_mot(const std::vector<FrameTruth>& truth, const std::vector<ClipDetections>& dets,
                                 std::uint64_t seed) {
  const FrameIndex index(truth);
  auto rng = seeded(seed, 0x1d);
  std::uniform_int_distribution<int> id(0, std::numeric_limits<int>::max());
  std::vector<metrics::TrackedBox> hyps;
  for (const auto& d : dets)
    if (const auto key = index.key(d.sequence, d.frame))
      for (const auto& det : d.detections) hyps.push_back({*key, id(rng), det.box});
  return metrics::clear_mot(hyps, gt_tracks(truth, index));
}

std::vector<ClipDetections> random_baseline(const std::vector<FrameTruth>& truth, std::uint64_t seed) {
  auto rng = seeded(seed, 0x2a);
  std::uniform_real_distribution<double> unit(0.0, 1.0), extent(0.05, 0.5);
  std::vector<ClipDetections> out;
  for (const auto& t : truth) {
    Detection d;
    d.box = clip_to_unit({unit(rng), unit(rng), extent(rng), extent(rng)});
    d.confidence = unit(rng);
    d.class_id = kCarClass;
    d.frame_index = t.frame;
    out.push_back({t.id, t.sequence, t.frame, {d}, {d}});
  }
  return out;
}

void write_detections(const std::filesystem::path& dir, const std::vector<ClipDetections>& dets) {
  std::filesystem::create_directories(dir);
  for (const auto& d : dets) {
    records::write_detections(dir / (d.id + ".det"), d.detections);
    records::write_detections(dir / (d.id + ".prop"), d.proposals);
  }
}

std::vector<ClipDetections> read_detections(const std::filesystem::path& dir, const std::vector<FrameTruth>& clips) {
  std::vector<ClipDetections> out;
  for (const auto& c : clips) {
    ClipDetections d{c.id, c.sequence, c.frame, records::read_detections(dir / (c.id + ".det")), {}};
    if (std::filesystem::exists(dir / (c.id + ".prop"))) d.proposals = records::read_detections(dir / (c.id + ".prop"));
    out.push_back(std::move(d));
  }
  return out;
}

void write_tubes(const std::filesystem::path& dir, const std::map<std::string, std::vector<tracker::Tube>>& tubes) {
  std::filesystem::create_directories(dir);
  for (const auto& [seq, list] : tubes) records::write_tubes(dir / (seq + ".tube"), list);
}

std::map<std::string, std::vector<tracker::Tube>> read_tubes(const std::filesystem::path& dir,
                                                             const std::vector<FrameTruth>& clips) {
  std::map<std::string, std::vector<tracker::Tube>> out;
  for (const auto& c : clips) {
    if (out.count(c.sequence)) continue;
    const auto path = dir / (c.sequence + ".tube");
    out[c.sequence] = std::filesystem::exists(path) ? records::read_tubes(path) : std::vector<tracker::Tube>{};
  }
  return out;
}

}  // namespace stereoloc::pipeline
