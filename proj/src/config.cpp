#include "stemfit/config.hpp"

#include "stemfit/io.hpp"

#include <algorithm>
#include <charconv>

namespace stemfit {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto pos = s.find(',', start);
    const auto part = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!part.empty()) out.emplace_back(part);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig cfg;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    cfg.set(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void KeyValueConfig::set(std::string key, std::string value) { entries_[std::move(key)] = std::move(value); }

bool KeyValueConfig::has(std::string_view key) const { return entries_.find(key) != entries_.end(); }

std::optional<std::string> KeyValueConfig::raw(std::string_view key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_string(std::string_view key, std::string fallback) const {
  return raw(key).value_or(std::move(fallback));
}

std::string KeyValueConfig::require_string(std::string_view key) const {
  auto v = raw(key);
  if (!v || v->empty()) throw ConfigError("missing required setting '" + std::string(key) + "'");
  return *v;
}

double KeyValueConfig::get_double(std::string_view key, double fallback) const {
  return get_optional_double(key).value_or(fallback);
}

std::optional<double> KeyValueConfig::get_optional_double(std::string_view key) const {
  const auto v = raw(key);
  if (!v) return std::nullopt;
  try {
    return parse_double(*v);
  } catch (const FormatError&) {
    throw ConfigError("setting '" + std::string(key) + "' is not a number: " + *v);
  }
}

long long KeyValueConfig::get_int(std::string_view key, long long fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  const auto t = trim(*v);
  long long out = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size() || t.empty())
    throw ConfigError("setting '" + std::string(key) + "' is not an integer: " + *v);
  return out;
}

bool KeyValueConfig::get_bool(std::string_view key, bool fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  std::string s(trim(*v));
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw ConfigError("setting '" + std::string(key) + "' is not a boolean: " + *v);
}

std::vector<double> KeyValueConfig::get_double_list(std::string_view key) const {
  std::vector<double> out;
  const auto v = raw(key);
  if (!v) return out;
  for (const auto& item : split_list(*v)) {
    try {
      out.push_back(parse_double(item));
    } catch (const FormatError&) {
      throw ConfigError("setting '" + std::string(key) + "' has a non-numeric item: " + item);
    }
  }
  return out;
}

std::vector<std::string> KeyValueConfig::get_string_list(std::string_view key) const {
  const auto v = raw(key);
  if (!v) return {};
  return split_list(*v);
}

void KeyValueConfig::check_known(const std::vector<std::string>& known) const {
  for (const auto& [key, value] : entries_)
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown setting '" + key + "'");
}

}  // namespace stemfit
