#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace vitforge {

// Flat key/value view of an INI file. Keys inside a [section] are stored as
// "section.key"; keys before any section header keep their bare name.
class ConfigMap {
 public:
  bool has(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value);
  const std::map<std::string, std::string>& entries() const { return values_; }

  // Rejects keys outside the given set (typo guard for --config files).
  void require_known(const std::vector<std::string>& known) const;

 private:
  std::map<std::string, std::string> values_;
};

ConfigMap parse_ini_text(const std::string& text);
ConfigMap parse_ini_file(const std::string& path);

}  // namespace vitforge
