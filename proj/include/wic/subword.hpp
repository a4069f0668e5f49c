#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wic/error.hpp"
#include "wic/tensor.hpp"
#include "wic/types.hpp"
#include "wic/utf8.hpp"

namespace wic::subword {

using TokenId = std::int32_t;

struct SpecialTokens {
  std::string cls = "[CLS]";
  std::string sep = "[SEP]";
  std::string unk = "[UNK]";
  std::string pad = "[PAD]";
};

/// Sub-word inventory with four special tokens. Pieces that continue a word
/// carry the continuation prefix ("##" by default).
class Vocabulary {
 public:
  using Specials = SpecialTokens;

  Vocabulary() = default;

  /// `pieces` is the full id-ordered inventory and must contain the specials.
  Vocabulary(std::vector<std::string> pieces, Specials specials,
             std::string continuation = "##")
      : pieces_(std::move(pieces)), continuation_(std::move(continuation)) {
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
      if (pieces_[i].empty()) throw VocabularyError("empty piece at id " + std::to_string(i));
      if (pieces_[i] == continuation_) {
        throw VocabularyError("piece '" + pieces_[i] + "' is only a continuation marker");
      }
      if (!index_.emplace(pieces_[i], static_cast<TokenId>(i)).second) {
        throw VocabularyError("duplicate piece '" + pieces_[i] + "'");
      }
    }
    cls_ = require(specials.cls);
    sep_ = require(specials.sep);
    unk_ = require(specials.unk);
    pad_ = require(specials.pad);
    const std::vector<TokenId> ids = {cls_, sep_, unk_, pad_};
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = i + 1; j < ids.size(); ++j)
        if (ids[i] == ids[j]) throw VocabularyError("special tokens must be distinct");
  }

  /// Specials take ids 0..3 (cls, sep, unk, pad), then `pieces` in order.
  static Vocabulary from_pieces(const std::vector<std::string>& pieces,
                                Specials specials = {}, std::string continuation = "##") {
    std::vector<std::string> all = {specials.cls, specials.sep, specials.unk, specials.pad};
    all.insert(all.end(), pieces.begin(), pieces.end());
    return Vocabulary(std::move(all), std::move(specials), std::move(continuation));
  }

  /// Vocabulary file: optional "[specials]" section of `role = piece` lines,
  /// then "[pieces]" with one piece per line. Without a header every line is
  /// a piece and specials are looked up by their default names, which also
  /// accepts plain BERT-style vocab.txt files.
  static Vocabulary parse(std::istream& in) {
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
    Specials specials;
    std::vector<std::string> pieces;
    std::size_t i = 0;
    const bool sectioned = !lines.empty() && lines[0] == "[specials]";
    if (sectioned) {
      for (i = 1; i < lines.size() && lines[i] != "[pieces]"; ++i) {
        if (lines[i].empty()) continue;
        const auto eq = lines[i].find('=');
        if (eq == std::string::npos) {
          throw VocabularyError("bad specials line '" + lines[i] + "'");
        }
        const std::string role = trim(lines[i].substr(0, eq));
        const std::string piece = trim(lines[i].substr(eq + 1));
        if (role == "cls") specials.cls = piece;
        else if (role == "sep") specials.sep = piece;
        else if (role == "unk") specials.unk = piece;
        else if (role == "pad") specials.pad = piece;
        else throw VocabularyError("unknown special role '" + role + "'");
      }
      if (i == lines.size()) throw VocabularyError("vocabulary lacks a [pieces] section");
      ++i;
      pieces = {specials.cls, specials.sep, specials.unk, specials.pad};
    }
    for (; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      if (sectioned && (lines[i] == specials.cls || lines[i] == specials.sep ||
                        lines[i] == specials.unk || lines[i] == specials.pad)) {
        continue;
      }
      pieces.push_back(lines[i]);
    }
    return Vocabulary(std::move(pieces), std::move(specials));
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open vocabulary " + path.string());
    return parse(in);
  }

  /// Sectioned format read back by parse().
  void write(std::ostream& out) const {
    out << "[specials]\n"
        << "cls = " << piece(cls_) << '\n' << "sep = " << piece(sep_) << '\n'
        << "unk = " << piece(unk_) << '\n' << "pad = " << piece(pad_) << '\n'
        << "[pieces]\n";
    for (const std::string& p : pieces_) out << p << '\n';
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary " + path.string());
    write(out);
  }

  std::size_t size() const { return pieces_.size(); }
  const std::string& piece(TokenId id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  const std::string& continuation() const { return continuation_; }

  std::optional<TokenId> find(const std::string& piece) const {
    const auto it = index_.find(piece);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  TokenId cls() const { return cls_; }
  TokenId sep() const { return sep_; }
  TokenId unk() const { return unk_; }
  TokenId pad() const { return pad_; }
  bool is_special(TokenId id) const { return id == cls_ || id == sep_ || id == unk_ || id == pad_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
  }

  TokenId require(const std::string& piece) const {
    const auto id = find(piece);
    if (!id) throw VocabularyError("special token '" + piece + "' missing from vocabulary");
    return *id;
  }

  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> index_;
  std::string continuation_ = "##";
  TokenId cls_ = 0, sep_ = 0, unk_ = 0, pad_ = 0;
};

/// Token ids framed by [cls] ... [sep], with the character range each token
/// covers. Specials get an empty range.
struct TokenizedSentence {
  std::string text;
  std::vector<TokenId> ids;
  std::vector<CharRange> offsets;

  std::size_t size() const { return ids.size(); }
  bool is_special(std::size_t i) const { return offsets[i].empty(); }

  /// Ids without the leading [cls] and trailing [sep].
  std::vector<TokenId> content_ids() const {
    if (ids.size() < 2) return {};
    return {ids.begin() + 1, ids.end() - 1};
  }
};

namespace detail {

// Whitespace-delimited words, with every CJK ideograph and punctuation mark
// split off as a word of its own.
inline std::vector<CharRange> pre_split(const std::u32string& text) {
  std::vector<CharRange> words;
  std::size_t start = 0;
  bool open = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char32_t c = text[i];
    if (utf8::is_whitespace(c)) {
      if (open) words.push_back({start, i});
      open = false;
    } else if (utf8::is_cjk(c) || utf8::is_punctuation(c)) {
      if (open) words.push_back({start, i});
      words.push_back({i, i + 1});
      open = false;
    } else if (!open) {
      start = i;
      open = true;
    }
  }
  if (open) words.push_back({start, text.size()});
  return words;
}

constexpr std::size_t kMaxWordChars = 200;

}  // namespace detail

/// Greedy longest-match segmentation of each word. When no piece matches at
/// some position, the rest of the word becomes a single [unk] token.
inline TokenizedSentence tokenize(const Vocabulary& vocab, std::string_view text) {
  if (text.empty()) throw ValidationError("cannot tokenize an empty sentence");
  const std::u32string u = utf8::decode(text);
  TokenizedSentence out;
  out.text = std::string(text);
  out.ids.push_back(vocab.cls());
  out.offsets.push_back({0, 0});
  for (const CharRange& word : detail::pre_split(u)) {
    if (word.length() > detail::kMaxWordChars) {
      out.ids.push_back(vocab.unk());
      out.offsets.push_back(word);
      continue;
    }
    std::size_t pos = word.start;
    while (pos < word.end) {
      std::optional<TokenId> match;
      std::size_t end = word.end;
      for (; end > pos; --end) {
        std::string candidate = pos == word.start ? std::string() : vocab.continuation();
        candidate += utf8::encode(std::u32string_view(u).substr(pos, end - pos));
        if ((match = vocab.find(candidate))) break;
      }
      if (!match) {
        out.ids.push_back(vocab.unk());
        out.offsets.push_back({pos, word.end});
        break;
      }
      out.ids.push_back(*match);
      out.offsets.push_back({pos, end});
      pos = end;
    }
  }
  out.ids.push_back(vocab.sep());
  out.offsets.push_back({0, 0});
  return out;
}

/// Indices of all non-special tokens whose range overlaps `span`.
inline std::vector<std::size_t> align_span(std::span<const CharRange> offsets, CharRange span) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    if (!offsets[i].empty() && offsets[i].overlap(span) > 0) out.push_back(i);
  }
  if (out.empty()) {
    throw AlignmentError("span [" + std::to_string(span.start) + ", " +
                         std::to_string(span.end) + ") covers no sub-token");
  }
  return out;
}

inline std::vector<std::size_t> align_span(const TokenizedSentence& tok, CharRange span) {
  return align_span(std::span<const CharRange>(tok.offsets), span);
}

enum class PoolingMode { average, sum };

inline std::string to_string(PoolingMode m) { return m == PoolingMode::average ? "average" : "sum"; }

inline PoolingMode parse_pooling(const std::string& s) {
  if (s == "average" || s == "mean") return PoolingMode::average;
  if (s == "sum") return PoolingMode::sum;
  throw ConfigError("unknown pooling mode '" + s + "'");
}

/// Collapses k sub-token rows [k×H] into one [H] vector.
inline numgrad::Tensor pool(const numgrad::Tensor& rows, PoolingMode mode) {
  if (rows.rank() != 2) throw DimensionError("pool expects a k×H matrix");
  const std::size_t k = rows.rows(), h = rows.cols();
  numgrad::Tensor out({h});
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < h; ++c) out[c] += rows.at(r, c);
  if (mode == PoolingMode::average) {
    for (double& v : out.values()) v /= static_cast<double>(k);
  }
  return out;
}

/// Pools the rows of `states` selected by `indices`.
inline numgrad::Tensor pool_rows(const numgrad::Tensor& states,
                                 std::span<const std::size_t> indices, PoolingMode mode) {
  if (indices.empty()) throw DimensionError("pool over zero sub-tokens");
  numgrad::Tensor rows({indices.size(), states.cols()});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= states.rows()) {
      throw DimensionError("sub-token index " + std::to_string(indices[k]) + " out of range");
    }
    const auto src = states.row(indices[k]);
    std::copy(src.begin(), src.end(), rows.row(k).begin());
  }
  return pool(rows, mode);
}

}  // namespace wic::subword
