#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sketchfill {

/// Flat `key = value` document shared by every command. Lines starting with `#` are
/// comments; keys are dotted (`mask.min_frac`, `sketch.threshold`).
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  std::string to_string() const;
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::optional<std::string> raw(const std::string& key) const;

  std::map<std::string, std::string> values_;
};

}  // namespace sketchfill
