#pragma once

// Reader for the TOML subset used by run configurations. Values are scalars
// or single-line arrays of scalars.

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace tddsync {

using ConfigScalar = std::variant<bool, std::int64_t, double, std::string>;

struct ConfigValue {
  std::variant<ConfigScalar, std::vector<ConfigScalar>> value;
  int line = 0;

  bool is_array() const { return value.index() == 1; }
};

class ConfigDocument {
 public:
  /// Keys are "section.key" (or "key" before any header).
  std::map<std::string, ConfigValue> entries;

  bool has(const std::string& key) const { return entries.count(key) > 0; }
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::vector<double> get_double_array(const std::string& key) const;
  std::vector<std::int64_t> get_int_array(const std::string& key) const;
  std::vector<std::string> get_string_array(const std::string& key) const;
};

/// Throws Error(config_parse) with the offending line number.
ConfigDocument parse_config(const std::string& text);

ConfigDocument load_config_file(const std::string& path);

}  // namespace tddsync
