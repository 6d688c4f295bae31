#pragma once

// `key = value` settings files.
//
//   # comment
//   epochs = 10
//   height_m = 0.5, 2.0      (ranges are "lo, hi")
//
// Keys are unique per file. Later `set` calls (command-line overrides)
// replace file values. Every read marks the key as used so callers can
// reject keys nobody understood.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace stereoloc::config {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Settings {
 public:
  static Settings parse(std::istream& in, const std::string& origin = "<config>");
  static Settings load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  // Each reader leaves `out` untouched when the key is absent and throws
  // ConfigError when the value does not parse.
  void read(const std::string& key, double& out);
  void read(const std::string& key, int& out);
  void read(const std::string& key, std::size_t& out);
  void read(const std::string& key, bool& out);
  void read(const std::string& key, std::string& out);
  void read_pair(const std::string& key, double& lo, double& hi);

  std::vector<std::string> unused() const;
  // Throws ConfigError naming every key that was never read.
  void require_all_used() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  const std::string* lookup(const std::string& key);
  [[noreturn]] void bad(const std::string& key, const std::string& expected) const;

  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> origins_;
  std::set<std::string> used_;
};

}  // namespace stereoloc::config
