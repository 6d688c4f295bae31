// stereoloc command line: simulate, featurize, train, detect, track, eval, plot.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "stereoloc/checkpoint.hpp"
#include "stereoloc/config.hpp"
#include "stereoloc/pipeline.hpp"
#include "stereoloc/plot.hpp"
#include "stereoloc/records.hpp"
#include "stereoloc/scenesim.hpp"

namespace fs = std::filesystem;
using namespace stereoloc;

namespace {

constexpr int kUsageError = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key=value settings file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "random seed (scene and training)");
  cmd->add_option("--out,-o", c.out, "output path");
}

config::Settings settings_from(const Common& c) {
  auto s = c.config.empty() ? config::Settings{} : config::Settings::load(c.config);
  if (c.seed) s.set("seed", std::to_string(*c.seed));
  return s;
}

// --out, then $STEREOLOC_OUTPUT_DIR, then output_dir from the config,
// joined with the stage's default name.
fs::path output_path(const Common& c, const pipeline::RunConfig& rc, const std::string& fallback) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv("STEREOLOC_OUTPUT_DIR"); env && *env) return fs::path(env) / fallback;
  return fs::path(rc.output_dir) / fallback;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vehicle localisation from stereo audio"};
  app.require_subcommand(1);

  Common common;

  // simulate
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic stereo scene dataset");
  add_common(simulate, common);
  std::optional<int> sim_clips;
  bool sim_mono = false;
  simulate->add_option("--clips", sim_clips, "number of clips")->check(CLI::PositiveNumber);
  simulate->add_flag("--mono", sim_mono, "write channel-summed mono audio");

  // featurize
  auto* featurize = app.add_subcommand("featurize", "precompute network inputs");
  add_common(featurize, common);
  std::string manifest;
  std::string split_opt;
  bool feat_mono = false;
  featurize->add_option("--manifest", manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
  featurize->add_option("--split", split_opt, "split to process (default: all)");
  featurize->add_flag("--mono", feat_mono, "sum the channels");

  // train
  auto* train = app.add_subcommand("train", "train the audio student network");
  add_common(train, common);
  std::string features;
  std::optional<int> epochs;
  std::optional<double> width;
  bool train_mono = false, no_meta = false, no_align = false, quiet = false;
  train->add_option("--manifest", manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--features", features, "directory of precomputed .feat files")->check(CLI::ExistingDirectory);
  train->add_option("--epochs", epochs, "number of epochs")->check(CLI::PositiveNumber);
  train->add_option("--width", width, "width multiplier");
  train->add_flag("--mono", train_mono, "mono ablation");
  train->add_flag("--no-meta", no_meta, "remove the meta-data branch");
  train->add_flag("--no-align", no_align, "disable the feature alignment loss");
  train->add_flag("--quiet,-q", quiet, "no per-epoch progress");

  // detect
  auto* detect = app.add_subcommand("detect", "run the trained network on a split");
  add_common(detect, common);
  std::string checkpoint;
  std::optional<double> expect_width;
  bool zero_meta = false;
  detect->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  detect->add_option("--manifest", manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
  detect->add_option("--split", split_opt, "split (default from config: test)");
  detect->add_option("--width", expect_width, "reject checkpoints of another width");
  detect->add_flag("--zero-meta", zero_meta, "feed zeroed camera meta-data");

  // track
  auto* track = app.add_subcommand("track", "link per-clip proposals into tubes");
  add_common(track, common);
  std::string det_dir;
  track->add_option("--manifest", manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
  track->add_option("--detections", det_dir, "detection directory")->required()->check(CLI::ExistingDirectory);
  track->add_option("--split", split_opt, "split (default from config: test)");

  // eval
  auto* eval = app.add_subcommand("eval", "score detections and tubes against ground truth");
  add_common(eval, common);
  std::string tube_dir;
  bool random_ids = false, random_boxes = false;
  eval->add_option("--manifest", manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--detections", det_dir, "detection directory")->check(CLI::ExistingDirectory);
  eval->add_option("--tubes", tube_dir, "tube directory (enables tracking metrics)")->check(CLI::ExistingDirectory);
  eval->add_option("--split", split_opt, "split (default from config: test)");
  eval->add_flag("--random-ids", random_ids, "tracking metrics of detections with random identities");
  eval->add_flag("--random-baseline", random_boxes, "score uniformly random boxes instead of detections");

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "render box overlays as PPM images");
  add_common(plot_cmd, common);
  int plot_width = 640, plot_height = 360;
  plot_cmd->add_option("--manifest", manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("--detections", det_dir, "detection directory")->check(CLI::ExistingDirectory);
  plot_cmd->add_option("--tubes", tube_dir, "tube directory")->check(CLI::ExistingDirectory);
  plot_cmd->add_option("--split", split_opt, "split (default from config: test)");
  plot_cmd->add_option("--image-width", plot_width, "image width in pixels")->check(CLI::PositiveNumber);
  plot_cmd->add_option("--image-height", plot_height, "image height in pixels")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : kUsageError;
  }

  pipeline::RunConfig rc;
  try {
    auto settings = settings_from(common);
    if (train->parsed()) {
      if (epochs) settings.set("epochs", std::to_string(*epochs));
      if (width) settings.set("width_multiplier", records::format_number(*width));
      if (train_mono) settings.set("mono", "true");
      if (no_meta) settings.set("meta", "false");
      if (no_align) settings.set("alignment", "false");
    }
    if (sim_clips) settings.set("clips", std::to_string(*sim_clips));
    if (sim_mono) settings.set("mono_export", "true");
    if (!split_opt.empty()) settings.set("split", split_opt);
    rc = pipeline::run_config(settings);
  } catch (const config::ConfigError& e) {
    std::cerr << "stereoloc: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    if (simulate->parsed()) {
      const auto dir = output_path(common, rc, "data");
      scenesim::generate_dataset(dir, rc.scene, rc.clips, rc.fractions, rc.mono_export);
      std::cout << "wrote " << rc.clips << " clips to " << (dir / "manifest.txt").string() << '\n';
    } else if (featurize->parsed()) {
      const auto m = records::read_manifest(manifest);
      const auto dir = output_path(common, rc, "features");
      pipeline::featurize(m, split_opt, feat_mono ? dsp::ChannelMode::kMono : dsp::ChannelMode::kStereo, dir);
      std::cout << "wrote features to " << dir.string() << '\n';
    } else if (train->parsed()) {
      const auto m = records::read_manifest(manifest);
      const auto mode = rc.train.mono ? dsp::ChannelMode::kMono : dsp::ChannelMode::kStereo;
      std::optional<fs::path> feat;
      if (!features.empty()) feat = features;
      const auto train_set = pipeline::load_samples(m, "train", mode, feat);
      const auto val_set = pipeline::load_samples(m, "val", mode, feat);
      const auto result = pipeline::train(train_set, val_set, rc.train, quiet ? nullptr : &std::cout);
      const auto dir = output_path(common, rc, "model");
      fs::create_directories(dir);
      ad::save_checkpoint(dir / "model.ckpt", pipeline::to_checkpoint(result, rc.train));
      records::write_text(dir / "train_log.txt", pipeline::format_train_log(result.log));
      std::cout << "selected epoch " << result.selected_epoch << "; wrote " << (dir / "model.ckpt").string() << '\n';
    } else if (detect->parsed()) {
      auto params = pipeline::load_model(checkpoint, expect_width);
      const auto m = records::read_manifest(manifest);
      const auto samples = pipeline::load_samples(m, rc.split, pipeline::channel_mode(params.config));
      pipeline::DetectOptions opts;
      opts.top_k = rc.tracker.top_k;
      opts.zero_meta = zero_meta;
      const auto dets = pipeline::detect(params, samples, opts);
      const auto dir = output_path(common, rc, "detections");
      pipeline::write_detections(dir, dets);
      std::cout << "wrote detections for " << dets.size() << " clips to " << dir.string() << '\n';
    } else if (track->parsed()) {
      const auto m = records::read_manifest(manifest);
      const auto truth = pipeline::load_truth(m, rc.split);
      const auto dets = pipeline::read_detections(det_dir, truth);
      const auto tubes = pipeline::track(dets, rc.tracker);
      const auto dir = output_path(common, rc, "tubes");
      pipeline::write_tubes(dir, tubes);
      std::size_t n = 0;
      for (const auto& [seq, list] : tubes) n += list.size();
      std::cout << "wrote " << n << " tubes over " << tubes.size() << " sequences to " << dir.string() << '\n';
    } else if (eval->parsed()) {
      const auto m = records::read_manifest(manifest);
      const auto truth = pipeline::load_truth(m, rc.split);
      const std::uint64_t seed = rc.train.seed;
      std::vector<pipeline::ClipDetections> dets;
      std::string title;
      if (random_boxes) {
        dets = pipeline::random_baseline(truth, seed);
        title = "random baseline";
      } else {
        if (det_dir.empty()) throw CLI::RequiredError("--detections");
        dets = pipeline::read_detections(det_dir, truth);
        title = "detections";
      }
      metrics::EvalReport report;
      if (!tube_dir.empty()) {
        report = pipeline::evaluate_tracking(truth, dets, pipeline::read_tubes(tube_dir, truth));
        title = "tracking";
      } else {
        report = pipeline::evaluate(truth, dets);
        if (random_ids) {
          report.has_tracking = true;
          report.mot = pipeline::random_id_mot(truth, dets, seed);
          title += " with random ids";
        }
      }
      const auto text = metrics::format_report(report, title + " (" + rc.split + ")");
      std::cout << text;
      if (!common.out.empty() || std::getenv("STEREOLOC_OUTPUT_DIR"))
        records::write_text(output_path(common, rc, "report.txt"), text);
    } else if (plot_cmd->parsed()) {
      const auto m = records::read_manifest(manifest);
      const auto truth = pipeline::load_truth(m, rc.split);
      std::vector<pipeline::ClipDetections> dets;
      if (!det_dir.empty()) dets = pipeline::read_detections(det_dir, truth);
      std::map<std::string, std::vector<tracker::Tube>> tubes;
      if (!tube_dir.empty()) tubes = pipeline::read_tubes(tube_dir, truth);
      const auto dir = output_path(common, rc, "plots");
      for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto& t = truth[i];
        plot::Image img(plot_width, plot_height);
        for (const auto& b : t.boxes) img.draw_box(b, plot::kGroundTruth, 3);
        if (i < dets.size())
          for (const auto& d : dets[i].detections) img.draw_box(d.box, plot::kDetection, 2);
        if (auto it = tubes.find(t.sequence); it != tubes.end())
          for (const auto& tube : it->second)
            for (const auto& b : tube.boxes) {
              if (b.frame_index == t.frame) img.draw_box(b.box, plot::tube_color(tube.id), 1);
              if (b.frame_index <= t.frame) img.draw_point(b.box.cx, b.box.cy, plot::tube_color(tube.id), 1);
            }
        img.write_ppm(dir / (t.id + ".ppm"));
      }
      std::cout << "wrote " << truth.size() << " images to " << dir.string() << '\n';
    }
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "stereoloc: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
