#include "stereoloc/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <system_error>

namespace stereoloc::config {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

Settings Settings::parse(std::istream& in, const std::string& origin) {
  Settings s;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(n);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || std::any_of(key.begin(), key.end(), [](unsigned char c) { return std::isspace(c); }))
      throw ConfigError(where + ": malformed key '" + key + "'");
    if (s.values_.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    s.values_[key] = value;
    s.origins_[key] = where;
  }
  return s;
}

Settings Settings::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  return parse(in, path.string());
}

void Settings::set(const std::string& key, const std::string& value) {
  values_[key] = value;
  origins_[key] = "command line";
}

const std::string* Settings::lookup(const std::string& key) {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

void Settings::bad(const std::string& key, const std::string& expected) const {
  throw ConfigError(origins_.at(key) + ": '" + key + "' expects " + expected + ", got '" + values_.at(key) + "'");
}

void Settings::read(const std::string& key, double& out) {
  if (const auto* v = lookup(key))
    if (!parse_number(*v, out)) bad(key, "a number");
}

void Settings::read(const std::string& key, int& out) {
  if (const auto* v = lookup(key))
    if (!parse_number(*v, out)) bad(key, "an integer");
}

void Settings::read(const std::string& key, std::size_t& out) {
  if (const auto* v = lookup(key))
    if (!parse_number(*v, out)) bad(key, "a non-negative integer");
}

void Settings::read(const std::string& key, bool& out) {
  if (const auto* v = lookup(key)) {
    if (*v == "true" || *v == "1" || *v == "on" || *v == "yes")
      out = true;
    else if (*v == "false" || *v == "0" || *v == "off" || *v == "no")
      out = false;
    else
      bad(key, "true/false");
  }
}

void Settings::read(const std::string& key, std::string& out) {
  if (const auto* v = lookup(key)) out = *v;
}

void Settings::read_pair(const std::string& key, double& lo, double& hi) {
  const auto* v = lookup(key);
  if (!v) return;
  const auto comma = v->find(',');
  double a = 0.0, b = 0.0;
  if (comma == std::string::npos) {
    if (!parse_number(trim(*v), a)) bad(key, "'lo, hi' or a single number");
    b = a;
  } else if (!parse_number(trim(v->substr(0, comma)), a) || !parse_number(trim(v->substr(comma + 1)), b)) {
    bad(key, "'lo, hi'");
  }
  lo = a;
  hi = b;
}

std::vector<std::string> Settings::unused() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!used_.count(k)) out.push_back(k);
  return out;
}

void Settings::require_all_used() const {
  const auto keys = unused();
  if (keys.empty()) return;
  std::string msg = "unknown config key";
  if (keys.size() > 1) msg += "s";
  for (std::size_t i = 0; i < keys.size(); ++i) msg += (i ? ", '" : " '") + keys[i] + "' (" + origins_.at(keys[i]) + ")";
  throw ConfigError(msg);
}

}  // namespace stereoloc::config
