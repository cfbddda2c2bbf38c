#include "vitforge/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "vitforge/errors.hpp"

namespace vitforge {

static std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

bool ConfigMap::has(const std::string& key) const { return values_.count(key) != 0; }

std::string ConfigMap::get_str(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int64_t ConfigMap::get_int(const std::string& key, int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  int64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
  }
  return out;
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  try {
    size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
  }
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected boolean, got '" + it->second + "'");
}

void ConfigMap::set(const std::string& key, const std::string& value) { values_[key] = value; }

void ConfigMap::require_known(const std::vector<std::string>& known) const {
  for (const auto& [k, v] : values_) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
}

ConfigMap parse_ini_text(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) {
        throw ConfigError("config line " + std::to_string(lineno) + ": bad section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) {
        throw ConfigError("config line " + std::to_string(lineno) + ": empty section name");
      }
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    }
    out.set(section.empty() ? key : section + "." + key, val);
  }
  return out;
}

ConfigMap parse_ini_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_ini_text(ss.str());
}

}  // namespace vitforge
