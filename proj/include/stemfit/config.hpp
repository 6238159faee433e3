#pragma once

#include "stemfit/core.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stemfit {

/// Line-oriented `key = value` settings. Blank lines and `#` comments are
/// ignored; later assignments win. Command-line flags are applied with set()
/// after the file is read.
class KeyValueConfig {
public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(std::string key, std::string value);
  bool has(std::string_view key) const;
  std::optional<std::string> raw(std::string_view key) const;

  std::string get_string(std::string_view key, std::string fallback) const;
  std::string require_string(std::string_view key) const;
  double get_double(std::string_view key, double fallback) const;
  std::optional<double> get_optional_double(std::string_view key) const;
  long long get_int(std::string_view key, long long fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  std::vector<double> get_double_list(std::string_view key) const;
  std::vector<std::string> get_string_list(std::string_view key) const;

  /// Throws ConfigError naming the first key not in `known`.
  void check_known(const std::vector<std::string>& known) const;

  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

private:
  std::map<std::string, std::string, std::less<>> entries_;
};

}  // namespace stemfit
