#pragma once

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "senti/error.hpp"
#include "senti/hashing.hpp"

namespace senti::config {

/// Flat `dotted.key = value` settings. `#` starts a comment; list values are
/// written `[a, b, c]`.
using KeyValues = std::map<std::string, std::string>;

inline constexpr std::string_view kEnvPrefix = "SENTI_";

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline KeyValues parse(const std::string& text, const std::string& source = "<config>") {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw usage_error(source + ":" + std::to_string(line_no) + ": expected `key = value`");
    }
    const auto key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw usage_error(source + ":" + std::to_string(line_no) + ": empty key");
    kv[key] = detail::trim(line.substr(eq + 1));
  }
  return kv;
}

inline KeyValues load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw usage_error("config file not found: " + path.string());
  return parse(read_file(path), path.string());
}

/// Environment name for a key: `vectorizer.max_features` ->
/// `SENTI_VECTORIZER__MAX_FEATURES`.
inline std::string env_name(const std::string& key) {
  std::string out(kEnvPrefix);
  for (char c : key) {
    if (c == '.') {
      out += "__";
    } else {
      out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
  }
  return out;
}

/// Environment variables override file values for every known key.
inline void apply_env_overrides(KeyValues& kv, const std::vector<std::string>& known_keys) {
  for (const auto& key : known_keys) {
    if (const char* v = std::getenv(env_name(key).c_str())) kv[key] = v;
  }
}

inline std::vector<std::string> parse_list(const std::string& value) {
  auto v = detail::trim(value);
  if (v.size() >= 2 && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  std::vector<std::string> out;
  if (detail::trim(v).empty()) return out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) out.push_back(detail::trim(item));
  return out;
}

inline std::string format_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  return out + "]";
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  std::string v = value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw usage_error(key + ": expected a boolean, got '" + value + "'");
}

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double d = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return d;
  } catch (const std::exception&) {
    throw usage_error(key + ": expected a number, got '" + value + "'");
  }
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
  try {
    if (!value.empty() && value.front() == '-') throw std::invalid_argument(value);
    std::size_t used = 0;
    const auto v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw usage_error(key + ": expected a non-negative integer, got '" + value + "'");
  }
}

}  // namespace senti::config
