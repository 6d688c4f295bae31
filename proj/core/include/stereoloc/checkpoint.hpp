#pragma once

// Checkpoint container.
//
//   STEREOLOC-CHECKPOINT 1\n
//   attr <key> <value>\n          (zero or more, value runs to end of line)
//   tensor <name> <rank> <d0> .. <dr-1>\n   (one per entry, payload order)
//   end\n
//   <payload>
//
// The payload is every entry's values, in manifest order, as raw IEEE-754
// binary64 little-endian. Names and keys contain no whitespace.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "stereoloc/tensor.hpp"

namespace stereoloc::ad {

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::map<std::string, std::string> attributes;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stereoloc::ad
