#pragma once

// Flat key=value configuration with dotted section names (train.lr=0.1).
// Lines starting with '#' are comments. Overrides arrive as extra key=value
// strings from the CLI. Snapshots are sorted and newline-terminated so a
// written snapshot re-parses to the identical config.

#include <map>
#include <string>
#include <vector>

#include "cds/common.hpp"

namespace cds::config {

class Config {
public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  void apply_override(const std::string& key_equals_value);

  bool has(const std::string& key) const;
  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  long get_int(const std::string& key, long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;
  std::vector<float> get_float_list(const std::string& key, std::vector<float> fallback) const;

  std::string snapshot() const;
  const std::map<std::string, std::string>& entries() const { return kv_; }

private:
  std::map<std::string, std::string> kv_;
};

}  // namespace cds::config
