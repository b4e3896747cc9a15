#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsde {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Minimal TOML-style key/value file: [section] headers, key = value lines,
// '#' comments, values are numbers, booleans, "strings", or flat lists.
// Keys are addressed as "section.key".
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& raw_value);

  double number(const std::string& key, double fallback) const;
  std::int64_t integer(const std::string& key, std::int64_t fallback) const;
  std::string str(const std::string& key, const std::string& fallback) const;
  bool boolean(const std::string& key, bool fallback) const;
  std::vector<double> number_list(const std::string& key) const;
  std::vector<std::string> str_list(const std::string& key) const;
  std::vector<std::int64_t> int_list(const std::string& key) const;

  // required variants: throw ConfigError naming the key when absent
  double number(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::string str(const std::string& key) const;

  // deterministic serialization (sorted keys, grouped by section)
  std::string serialize() const;
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;  // "section.key" -> raw token
};

}  // namespace bsde
