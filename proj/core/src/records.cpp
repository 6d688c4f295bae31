#include "stereoloc/records.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace stereoloc::records {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  for (std::string t; is >> t;) out.push_back(t);
  return out;
}

template <typename T>
bool parse(const std::string& s, T& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

// Calls `fn(tokens, line_number)` for every non-empty, non-comment line.
template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty() || line[0] == '#') continue;
    auto t = tokens(line);
    if (!t.empty()) fn(t, n);
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

struct NumberReader {
  const std::filesystem::path& path;
  std::size_t line;
  double real(const std::string& s) const {
    double v = 0.0;
    if (!parse(s, v)) fail(path, line, "bad number '" + s + "'");
    return v;
  }
  int integer(const std::string& s) const {
    int v = 0;
    if (!parse(s, v)) fail(path, line, "bad integer '" + s + "'");
    return v;
  }
};

}  // namespace

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string ManifestEntry::sequence() const {
  const auto pos = id.rfind('_');
  return pos == std::string::npos ? id : id.substr(0, pos);
}

int ManifestEntry::segment() const {
  const auto pos = id.rfind('_');
  int seg = 0;
  if (pos == std::string::npos || !parse(id.substr(pos + 1), seg)) return 0;
  return seg;
}

int Manifest::middle_frame(const ManifestEntry& e) const { return e.segment() * hop_frames + 12; }

std::vector<const ManifestEntry*> Manifest::split(const std::string& name) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == name) out.push_back(&e);
  return out;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  auto out = open_out(path);
  out << "# hop_frames=" << manifest.hop_frames << '\n';
  out << "# id split wav height pitch rotation teacher gt\n";
  for (const auto& e : manifest.entries)
    out << e.id << ' ' << e.split << ' ' << e.wav << ' ' << format_number(e.meta.height_m) << ' '
        << format_number(e.meta.pitch_deg) << ' ' << format_number(e.meta.rotation_deg) << ' ' << e.teacher << ' '
        << e.gt << '\n';
  finish(out, path);
}

Manifest read_manifest(const std::filesystem::path& path) {
  Manifest m;
  m.root = path.parent_path();
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  std::set<std::string> seen;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.rfind("# hop_frames=", 0) == 0) {
      if (!parse(line.substr(13), m.hop_frames) || m.hop_frames < 1) fail(path, n, "bad hop_frames");
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    auto t = tokens(line);
    if (t.empty()) continue;
    if (t.size() != 8) fail(path, n, "expected 8 fields, got " + std::to_string(t.size()));
    const NumberReader num{path, n};
    ManifestEntry e;
    e.id = t[0];
    e.split = t[1];
    e.wav = t[2];
    e.meta = {num.real(t[3]), num.real(t[4]), num.real(t[5])};
    e.teacher = t[6];
    e.gt = t[7];
    try {
      dsp::validate(e.meta);
    } catch (const std::invalid_argument& err) {
      fail(path, n, err.what());
    }
    if (!seen.insert(e.id).second) fail(path, n, "duplicate id " + e.id);
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_gt(const std::filesystem::path& path, const std::vector<GtRecord>& gt) {
  auto out = open_out(path);
  for (const auto& g : gt) {
    out << g.frame << ' ' << g.vehicle;
    if (g.box)
      out << ' ' << format_number(g.box->cx) << ' ' << format_number(g.box->cy) << ' ' << format_number(g.box->w)
          << ' ' << format_number(g.box->h) << ' ' << g.class_id;
    else
      out << " offscreen";
    out << '\n';
  }
  finish(out, path);
}

std::vector<GtRecord> read_gt(const std::filesystem::path& path) {
  std::vector<GtRecord> out;
  for_each_line(path, [&](const std::vector<std::string>& t, std::size_t n) {
    const NumberReader num{path, n};
    GtRecord g;
    if (t.size() == 3 && t[2] == "offscreen") {
      g.frame = num.integer(t[0]);
      g.vehicle = num.integer(t[1]);
    } else if (t.size() == 7) {
      g.frame = num.integer(t[0]);
      g.vehicle = num.integer(t[1]);
      g.box = Box{num.real(t[2]), num.real(t[3]), num.real(t[4]), num.real(t[5])};
      g.class_id = num.integer(t[6]);
    } else {
      fail(path, n, "malformed gt record");
    }
    out.push_back(g);
  });
  return out;
}

void write_feature(const std::filesystem::path& path, const std::vector<double>& feature) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < feature.size(); ++i) out << (i ? " " : "") << format_number(feature[i]);
  out << '\n';
  finish(out, path);
}

std::vector<double> read_feature(const std::filesystem::path& path) {
  std::vector<double> out;
  for_each_line(path, [&](const std::vector<std::string>& t, std::size_t n) {
    const NumberReader num{path, n};
    for (const auto& s : t) out.push_back(num.real(s));
  });
  return out;
}

void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets) {
  auto out = open_out(path);
  for (const auto& d : dets)
    out << d.frame_index << ' ' << format_number(d.box.cx) << ' ' << format_number(d.box.cy) << ' '
        << format_number(d.box.w) << ' ' << format_number(d.box.h) << ' ' << format_number(d.confidence) << ' '
        << d.class_id << '\n';
  finish(out, path);
}

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  std::vector<Detection> out;
  for_each_line(path, [&](const std::vector<std::string>& t, std::size_t n) {
    if (t.size() != 7) fail(path, n, "malformed detection record");
    const NumberReader num{path, n};
    Detection d;
    d.frame_index = num.integer(t[0]);
    d.box = {num.real(t[1]), num.real(t[2]), num.real(t[3]), num.real(t[4])};
    d.confidence = num.real(t[5]);
    d.class_id = num.integer(t[6]);
    d.index = static_cast<int>(out.size());
    out.push_back(d);
  });
  return out;
}

void write_tubes(const std::filesystem::path& path, const std::vector<tracker::Tube>& tubes) {
  auto out = open_out(path);
  for (const auto& tube : tubes)
    for (const auto& d : tube.boxes)
      out << tube.id << ' ' << d.frame_index << ' ' << format_number(d.box.cx) << ' ' << format_number(d.box.cy)
          << ' ' << format_number(d.box.w) << ' ' << format_number(d.box.h) << ' ' << format_number(d.confidence)
          << '\n';
  finish(out, path);
}

std::vector<tracker::Tube> read_tubes(const std::filesystem::path& path) {
  std::map<int, tracker::Tube> by_id;
  for_each_line(path, [&](const std::vector<std::string>& t, std::size_t n) {
    if (t.size() != 7) fail(path, n, "malformed tube record");
    const NumberReader num{path, n};
    const int id = num.integer(t[0]);
    Detection d;
    d.frame_index = num.integer(t[1]);
    d.box = {num.real(t[2]), num.real(t[3]), num.real(t[4]), num.real(t[5])};
    d.confidence = num.real(t[6]);
    d.class_id = kCarClass;
    auto& tube = by_id[id];
    if (tube.boxes.empty()) {
      tube.id = id;
      tube.start_frame = d.frame_index;
    }
    tube.boxes.push_back(d);
  });
  std::vector<tracker::Tube> out;
  for (auto& [id, tube] : by_id) out.push_back(std::move(tube));
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  finish(out, path);
}

}  // namespace stereoloc::records
