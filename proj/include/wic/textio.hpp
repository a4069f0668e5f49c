#pragma once

#include <charconv>
#include <cstddef>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "wic/error.hpp"

namespace wic::textio {

// Shortest representation that parses back to the identical double.
inline void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

inline std::string format_double(double v) {
  std::string s;
  append_double(s, v);
  return s;
}

inline std::string join_doubles(const std::vector<double>& values) {
  std::string out;
  out.reserve(values.size() * 12);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out.push_back(' ');
    append_double(out, values[i]);
  }
  return out;
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError(where + ": '" + std::string(s) + "' is not a number");
  }
  return v;
}

inline std::size_t parse_size(std::string_view s, const std::string& where) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    throw FormatError(where + ": '" + std::string(s) + "' is not a non-negative integer");
  }
  return v;
}

/// Whitespace-separated doubles.
inline std::vector<double> parse_doubles(std::string_view s, const std::string& where) {
  std::vector<double> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    if (i >= s.size()) break;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    out.push_back(parse_double(s.substr(i, j - i), where));
    i = j;
  }
  return out;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Reads an "<name>=<int>" header line.
inline std::size_t parse_header(std::string_view line, std::string_view name,
                                const std::string& where) {
  if (line.size() <= name.size() + 1 || line.substr(0, name.size()) != name ||
      line[name.size()] != '=') {
    throw FormatError(where + ": expected header '" + std::string(name) + "=<int>'");
  }
  return parse_size(line.substr(name.size() + 1), where);
}

}  // namespace wic::textio
