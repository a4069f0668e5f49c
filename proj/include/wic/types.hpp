#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>

#include "wic/error.hpp"

namespace wic {

/// Half-open range of Unicode scalar indices. An empty range marks a special
/// token that covers no text.
struct CharRange {
  std::size_t start = 0;
  std::size_t end = 0;

  bool empty() const { return end <= start; }
  std::size_t length() const { return empty() ? 0 : end - start; }

  std::size_t overlap(const CharRange& o) const {
    const std::size_t lo = std::max(start, o.start);
    const std::size_t hi = std::min(end, o.end);
    return hi > lo ? hi - lo : 0;
  }

  friend bool operator==(const CharRange&, const CharRange&) = default;
};

enum class Label { F = 0, T = 1 };

inline char label_char(Label l) { return l == Label::T ? 'T' : 'F'; }

inline std::size_t label_index(Label l) { return static_cast<std::size_t>(l); }

inline Label parse_label(const std::string& s) {
  if (s == "T") return Label::T;
  if (s == "F") return Label::F;
  throw LabelError("label must be T or F, got '" + s + "'");
}

/// "T", "F" or "?" for unknown gold.
inline std::string gold_string(const std::optional<Label>& g) {
  return g ? std::string(1, label_char(*g)) : std::string("?");
}

inline std::optional<Label> parse_gold(const std::string& s) {
  if (s == "?") return std::nullopt;
  return parse_label(s);
}

}  // namespace wic
