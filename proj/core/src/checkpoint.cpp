#include "stereoloc/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace stereoloc::ad {

namespace {

constexpr const char* kMagic = "STEREOLOC-CHECKPOINT 1";

bool valid_token(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') return false;
  return true;
}

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error("checkpoint: " + what); }

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out << kMagic << '\n';
  for (const auto& [key, value] : ckpt.attributes) {
    if (!valid_token(key) || value.find('\n') != std::string::npos) fail("invalid attribute '" + key + "'");
    out << "attr " << key << ' ' << value << '\n';
  }
  for (const auto& e : ckpt.entries) {
    if (!valid_token(e.name)) fail("invalid tensor name '" + e.name + "'");
    if (numel(e.shape) != e.values.size()) fail("entry '" + e.name + "' shape/value mismatch");
    out << "tensor " << e.name << ' ' << e.shape.size();
    for (auto d : e.shape) out << ' ' << d;
    out << '\n';
  }
  out << "end\n";
  char bytes[8];
  for (const auto& e : ckpt.entries)
    for (double v : e.values) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
      out.write(bytes, 8);
    }
  if (!out) fail("write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) fail("bad magic line");
  Checkpoint ckpt;
  while (true) {
    if (!std::getline(in, line)) fail("truncated manifest");
    if (line == "end") break;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "attr") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ckpt.attributes[key] = value;
    } else if (kind == "tensor") {
      CheckpointEntry e;
      std::size_t rank = 0;
      if (!(ls >> e.name >> rank) || rank == 0) fail("bad tensor line: " + line);
      e.shape.resize(rank);
      for (auto& d : e.shape)
        if (!(ls >> d) || d == 0) fail("bad tensor extent: " + line);
      e.values.resize(numel(e.shape));
      ckpt.entries.push_back(std::move(e));
    } else {
      fail("unknown manifest line: " + line);
    }
  }
  unsigned char bytes[8];
  for (auto& e : ckpt.entries)
    for (auto& v : e.values) {
      if (!in.read(reinterpret_cast<char*>(bytes), 8)) fail("truncated payload for '" + e.name + "'");
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
      v = std::bit_cast<double>(bits);
    }
  if (in.peek() != std::char_traits<char>::eof()) fail("trailing bytes after payload");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot open " + path.string() + " for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace stereoloc::ad
