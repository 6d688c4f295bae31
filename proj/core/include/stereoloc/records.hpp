#pragma once

// Line-oriented text records exchanged between the CLI stages. Fields are
// whitespace separated, numbers use the shortest round-trip form, and lines
// starting with '#' are comments.
//
//   manifest   # hop_frames=<n>                      (header)
//              id split wav meta_height meta_pitch meta_rotation teacher gt
//   gt         frame vehicle cx cy w h class
//              frame vehicle offscreen
//   teacher    v0 v1 ... v{D-1}                     (single line)
//   detection  frame cx cy w h confidence class
//   tube       tube_id frame cx cy w h confidence
//
// Paths inside a manifest are relative to the manifest's directory.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stereoloc/box.hpp"
#include "stereoloc/dsp.hpp"
#include "stereoloc/postprocess.hpp"
#include "stereoloc/tracker.hpp"

namespace stereoloc::records {

struct ManifestEntry {
  std::string id;
  std::string split;
  std::string wav;
  dsp::CameraMeta meta;
  std::string teacher;
  std::string gt;

  // `<sequence>_<segment>`
  std::string sequence() const;
  int segment() const;
};

struct Manifest {
  int hop_frames = 2;
  std::filesystem::path root;  // directory the relative paths resolve against
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
  // Sequence-global index of the entry's middle frame.
  int middle_frame(const ManifestEntry& e) const;
  std::vector<const ManifestEntry*> split(const std::string& name) const;
};

struct GtRecord {
  int frame = 0;
  int vehicle = 0;
  std::optional<Box> box;
  int class_id = kCarClass;
};

// Shortest decimal form that parses back to the same double.
std::string format_number(double v);

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
// Throws std::runtime_error with the offending line number on malformed
// input, an out-of-range meta triple or a duplicate id.
Manifest read_manifest(const std::filesystem::path& path);

void write_gt(const std::filesystem::path& path, const std::vector<GtRecord>& gt);
std::vector<GtRecord> read_gt(const std::filesystem::path& path);

void write_feature(const std::filesystem::path& path, const std::vector<double>& feature);
std::vector<double> read_feature(const std::filesystem::path& path);

void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets);
std::vector<Detection> read_detections(const std::filesystem::path& path);

// Smoothed boxes of each tube; the raw boxes are not stored.
void write_tubes(const std::filesystem::path& path, const std::vector<tracker::Tube>& tubes);
std::vector<tracker::Tube> read_tubes(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace stereoloc::records
