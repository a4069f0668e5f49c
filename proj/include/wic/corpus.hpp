#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "wic/error.hpp"
#include "wic/types.hpp"
#include "wic/utf8.hpp"

namespace wic::corpus {

struct LangPair {
  std::string first;
  std::string second;

  std::string str() const { return first + "-" + second; }
  bool cross_lingual() const { return first != second; }
  bool involves(const std::string& lang) const {
    return first == lang || second == lang;
  }

  static LangPair parse(const std::string& s) {
    const auto dash = s.find('-');
    if (dash == std::string::npos || dash == 0 || dash + 1 == s.size() ||
        s.find('-', dash + 1) != std::string::npos) {
      throw ValidationError("language pair must look like 'en-fr', got '" + s + "'");
    }
    return {s.substr(0, dash), s.substr(dash + 1)};
  }

  friend bool operator==(const LangPair&, const LangPair&) = default;
  friend auto operator<=>(const LangPair&, const LangPair&) = default;
};

/// One sentence pair with a target word in each sentence. Spans are
/// Unicode scalar indices into the corresponding sentence.
struct WicPair {
  std::string id;
  LangPair lang_pair;
  std::string lemma;
  std::string pos;
  std::string sentence1;
  std::string sentence2;
  CharRange span1;
  CharRange span2;
  std::optional<Label> gold;

  const std::string& sentence(int side) const {
    check_side(side);
    return side == 1 ? sentence1 : sentence2;
  }
  const CharRange& span(int side) const {
    check_side(side);
    return side == 1 ? span1 : span2;
  }
  std::string language(int side) const {
    check_side(side);
    return side == 1 ? lang_pair.first : lang_pair.second;
  }
  std::string target_text(int side) const {
    const CharRange& s = span(side);
    return utf8::substr(sentence(side), s.start, s.end);
  }

  // Key used for per-sentence side data (annotations, precomputed states).
  std::string sentence_key(int side) const {
    check_side(side);
    return id + "." + std::to_string(side);
  }

  static void check_side(int side) {
    if (side != 1 && side != 2) throw Error("side must be 1 or 2");
  }

  friend bool operator==(const WicPair&, const WicPair&) = default;
};

enum class SplitName { train, dev, test };

inline std::string to_string(SplitName s) {
  switch (s) {
    case SplitName::train: return "train";
    case SplitName::dev: return "dev";
    case SplitName::test: return "test";
  }
  return "?";
}

inline std::optional<SplitName> split_name_from_prefix(const std::string& s) {
  if (s == "training" || s == "train") return SplitName::train;
  if (s == "dev" || s == "development") return SplitName::dev;
  if (s == "test") return SplitName::test;
  return std::nullopt;
}

struct DatasetSplit {
  SplitName name = SplitName::test;
  LangPair lang_pair;
  std::vector<WicPair> pairs;
  std::optional<std::size_t> dev_subset;

  /// Pairs actually used: the first dev_subset records in file order when a
  /// subset is configured, otherwise all of them.
  std::vector<WicPair> active() const {
    if (!dev_subset) return pairs;
    return {pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(*dev_subset)};
  }

  void set_dev_subset(std::size_t n) {
    if (n > pairs.size()) {
      throw ValidationError("dev subset of " + std::to_string(n) +
                            " exceeds split size " + std::to_string(pairs.size()));
    }
    dev_subset = n;
  }

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

struct LoadOptions {
  std::optional<SplitName> name;
  // Used when neither the record nor its id carries a language pair.
  std::optional<LangPair> lang_pair;
};

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json parse_json_file(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": malformed JSON at byte " +
                     std::to_string(e.byte) + ": " + e.what());
  }
}

// MCL-WiC releases offsets either as numbers or as numeric strings.
inline std::size_t offset_field(const nlohmann::json& rec, const char* key,
                                std::size_t index) {
  const auto it = rec.find(key);
  if (it == rec.end()) {
    throw ParseError("record " + std::to_string(index) + ": missing '" + key + "'");
  }
  if (it->is_number_unsigned()) return it->get<std::size_t>();
  if (it->is_number_integer()) {
    const auto v = it->get<long long>();
    if (v < 0) throw ValidationError("record " + std::to_string(index) + ": negative '" + key + "'");
    return static_cast<std::size_t>(v);
  }
  if (it->is_string()) {
    const std::string s = it->get<std::string>();
    if (!s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      return std::stoull(s);
    }
  }
  throw ParseError("record " + std::to_string(index) + ": '" + key +
                   "' is not a non-negative integer");
}

inline std::string string_field(const nlohmann::json& rec, const char* key,
                                std::size_t index, bool required) {
  const auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) {
    if (required) {
      throw ParseError("record " + std::to_string(index) + ": missing '" + key + "'");
    }
    return {};
  }
  if (!it->is_string()) {
    throw ParseError("record " + std::to_string(index) + ": '" + key + "' is not a string");
  }
  return it->get<std::string>();
}

// "training.en-fr.12" → en-fr
inline std::optional<LangPair> lang_pair_from_id(const std::string& id) {
  std::stringstream ss(id);
  std::string part;
  while (std::getline(ss, part, '.')) {
    const auto dash = part.find('-');
    if (dash == 2 && part.size() == 5) return LangPair{part.substr(0, 2), part.substr(3)};
  }
  return std::nullopt;
}

inline void validate_span(const WicPair& p, int side) {
  const std::u32string s = utf8::decode(p.sentence(side));
  const CharRange& r = p.span(side);
  if (!(r.start < r.end && r.end <= s.size())) {
    throw ValidationError("pair '" + p.id + "': span" + std::to_string(side) + " [" +
                          std::to_string(r.start) + ", " + std::to_string(r.end) +
                          ") lies outside its sentence of length " +
                          std::to_string(s.size()));
  }
  for (std::size_t i = r.start; i < r.end; ++i) {
    if (s[i] == U'\n' || s[i] == U'\r') {
      throw ValidationError("pair '" + p.id + "': span" + std::to_string(side) +
                            " contains a line break");
    }
  }
}

}  // namespace detail

/// Parses a JSON array of pair records, joining tags from an optional gold
/// array by id. Pairs may span several language pairs.
inline std::vector<WicPair> parse_pairs(const nlohmann::json& data,
                                        const nlohmann::json* gold,
                                        const LoadOptions& opt = {}) {
  if (!data.is_array()) throw ParseError("pair file must hold a JSON array");
  std::vector<WicPair> pairs;
  pairs.reserve(data.size());
  std::set<std::string> seen;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& rec = data[i];
    if (!rec.is_object()) {
      throw ParseError("record " + std::to_string(i) + " is not a JSON object");
    }
    WicPair p;
    p.id = detail::string_field(rec, "id", i, true);
    p.lemma = detail::string_field(rec, "lemma", i, false);
    p.pos = detail::string_field(rec, "pos", i, false);
    p.sentence1 = detail::string_field(rec, "sentence1", i, true);
    p.sentence2 = detail::string_field(rec, "sentence2", i, true);
    p.span1 = {detail::offset_field(rec, "start1", i), detail::offset_field(rec, "end1", i)};
    p.span2 = {detail::offset_field(rec, "start2", i), detail::offset_field(rec, "end2", i)};
    if (const std::string lp = detail::string_field(rec, "lang_pair", i, false); !lp.empty()) {
      p.lang_pair = LangPair::parse(lp);
    } else if (auto from_id = detail::lang_pair_from_id(p.id)) {
      p.lang_pair = *from_id;
    } else if (opt.lang_pair) {
      p.lang_pair = *opt.lang_pair;
    } else {
      throw ValidationError("pair '" + p.id + "': cannot determine its language pair");
    }
    if (!seen.insert(p.id).second) {
      throw ValidationError("duplicate pair id '" + p.id + "'");
    }
    try {
      detail::validate_span(p, 1);
      detail::validate_span(p, 2);
    } catch (const ParseError& e) {
      throw ParseError("record " + std::to_string(i) + ": " + e.what());
    }
    pairs.push_back(std::move(p));
  }

  if (gold) {
    if (!gold->is_array()) throw ParseError("gold file must hold a JSON array");
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < pairs.size(); ++i) index[pairs[i].id] = i;
    for (std::size_t i = 0; i < gold->size(); ++i) {
      const auto& rec = (*gold)[i];
      if (!rec.is_object()) {
        throw ParseError("gold record " + std::to_string(i) + " is not a JSON object");
      }
      const std::string id = detail::string_field(rec, "id", i, true);
      const std::string tag = detail::string_field(rec, "tag", i, true);
      const auto it = index.find(id);
      if (it == index.end()) {
        throw ValidationError("gold record " + std::to_string(i) + " names unknown pair '" + id + "'");
      }
      try {
        pairs[it->second].gold = parse_label(tag);
      } catch (const LabelError& e) {
        throw ValidationError("gold record " + std::to_string(i) + ": " + e.what());
      }
    }
  }
  return pairs;
}

/// Reads a pair file (and optional gold file) without requiring a single
/// language pair.
inline std::vector<WicPair> read_pairs(const std::filesystem::path& data_path,
                                       const std::optional<std::filesystem::path>& gold_path = {},
                                       const LoadOptions& opt = {}) {
  const nlohmann::json data = detail::parse_json_file(data_path);
  std::optional<nlohmann::json> gold;
  if (gold_path) gold = detail::parse_json_file(*gold_path);
  return parse_pairs(data, gold ? &*gold : nullptr, opt);
}

inline SplitName infer_split_name(const std::vector<WicPair>& pairs,
                                  const std::filesystem::path& path,
                                  const LoadOptions& opt) {
  if (opt.name) return *opt.name;
  if (!pairs.empty()) {
    const std::string prefix = pairs.front().id.substr(0, pairs.front().id.find('.'));
    if (auto n = split_name_from_prefix(prefix)) return *n;
  }
  const std::string stem = path.filename().string();
  if (auto n = split_name_from_prefix(stem.substr(0, stem.find('.')))) return *n;
  return SplitName::test;
}

/// Groups pairs by language pair, preserving file order inside each group.
inline std::vector<DatasetSplit> split_by_lang_pair(const std::vector<WicPair>& pairs,
                                                    SplitName name) {
  std::vector<DatasetSplit> out;
  for (const WicPair& p : pairs) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const DatasetSplit& s) { return s.lang_pair == p.lang_pair; });
    if (it == out.end()) {
      out.push_back(DatasetSplit{name, p.lang_pair, {}, std::nullopt});
      it = out.end() - 1;
    }
    it->pairs.push_back(p);
  }
  return out;
}

/// Loads one split. Every record must belong to the same language pair.
inline DatasetSplit load_pairs(const std::filesystem::path& data_path,
                               const std::optional<std::filesystem::path>& gold_path = {},
                               const LoadOptions& opt = {}) {
  std::vector<WicPair> pairs = read_pairs(data_path, gold_path, opt);
  DatasetSplit split;
  split.name = infer_split_name(pairs, data_path, opt);
  if (!pairs.empty()) {
    split.lang_pair = pairs.front().lang_pair;
  } else if (opt.lang_pair) {
    split.lang_pair = *opt.lang_pair;
  }
  for (const WicPair& p : pairs) {
    if (p.lang_pair != split.lang_pair) {
      throw ValidationError(data_path.string() + ": pair '" + p.id + "' is " +
                            p.lang_pair.str() + " but the split is " + split.lang_pair.str());
    }
  }
  split.pairs = std::move(pairs);
  return split;
}

inline nlohmann::json pairs_to_json(const std::vector<WicPair>& pairs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const WicPair& p : pairs) {
    arr.push_back({{"id", p.id},
                   {"lang_pair", p.lang_pair.str()},
                   {"lemma", p.lemma},
                   {"pos", p.pos},
                   {"sentence1", p.sentence1},
                   {"sentence2", p.sentence2},
                   {"start1", p.span1.start},
                   {"end1", p.span1.end},
                   {"start2", p.span2.start},
                   {"end2", p.span2.end}});
  }
  return arr;
}

inline nlohmann::json gold_to_json(const std::vector<WicPair>& pairs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const WicPair& p : pairs) {
    if (p.gold) arr.push_back({{"id", p.id}, {"tag", std::string(1, label_char(*p.gold))}});
  }
  return arr;
}

inline void write_pairs(const std::vector<WicPair>& pairs,
                        const std::filesystem::path& data_path,
                        const std::optional<std::filesystem::path>& gold_path = {}) {
  auto write = [](const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(1) << '\n';
  };
  write(data_path, pairs_to_json(pairs));
  if (gold_path) write(*gold_path, gold_to_json(pairs));
}

// ---------------------------------------------------------------------------
// Dependency annotations (CoNLL-U)
// ---------------------------------------------------------------------------

struct DepToken {
  std::string form;
  CharRange range;
  std::size_t head = 0;  // 1-based index of the governor, 0 for the root
  std::string deprel;

  friend bool operator==(const DepToken&, const DepToken&) = default;
};

struct DepAnnotation {
  std::string sentence_id;
  std::string text;
  std::vector<DepToken> tokens;

  /// 0-based index of the governor of `token`, or nothing for the root.
  std::optional<std::size_t> head_of(std::size_t token) const {
    const std::size_t h = tokens.at(token).head;
    if (h == 0) return std::nullopt;
    return h - 1;
  }

  /// 0-based indices of the direct children of `token`, in sentence order.
  std::vector<std::size_t> dependents(std::size_t token) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < tokens.size(); ++i)
      if (tokens[i].head == token + 1) out.push_back(i);
    return out;
  }

  friend bool operator==(const DepAnnotation&, const DepAnnotation&) = default;
};

using AnnotationMap = std::map<std::string, DepAnnotation>;

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return cols;
}

inline std::string comment_value(const std::string& line, const std::string& key) {
  // "# key = value"
  std::string rest = line.substr(1);
  const auto first = rest.find_first_not_of(' ');
  if (first == std::string::npos) return {};
  rest = rest.substr(first);
  if (rest.compare(0, key.size(), key) != 0) return {};
  rest = rest.substr(key.size());
  const auto eq = rest.find_first_not_of(' ');
  if (eq == std::string::npos || rest[eq] != '=') return {};
  rest = rest.substr(eq + 1);
  if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
  return rest;
}

struct RawWord {
  std::size_t id;
  std::string form;
  std::size_t head;
  std::string deprel;
  std::optional<std::size_t> mwt;  // index into the multiword surface list
};

inline DepAnnotation finish_sentence(const std::string& sent_id,
                                     const std::optional<std::string>& text,
                                     const std::vector<RawWord>& words,
                                     const std::vector<std::string>& mwt_forms,
                                     const std::string& source) {
  if (sent_id.empty()) throw FormatError(source + ": sentence without '# sent_id'");
  if (!text) {
    throw AlignmentError(source + ": sentence '" + sent_id +
                         "' has no '# text' comment, offsets cannot be recovered");
  }
  DepAnnotation ann;
  ann.sentence_id = sent_id;
  ann.text = *text;
  const std::u32string u = utf8::decode(*text);
  std::size_t cursor = 0;
  std::optional<std::size_t> open_mwt;
  CharRange mwt_range;
  const std::size_t n = words.size();
  for (std::size_t i = 0; i < n; ++i) {
    const RawWord& w = words[i];
    if (w.id != i + 1) {
      throw FormatError(source + ": sentence '" + sent_id + "' has non-contiguous token ids");
    }
    if (w.head > n) {
      throw FormatError(source + ": sentence '" + sent_id + "' token " +
                        std::to_string(w.id) + " has head " + std::to_string(w.head) +
                        " beyond the sentence");
    }
    CharRange range;
    if (w.mwt && w.mwt == open_mwt) {
      range = mwt_range;
    } else {
      // Words inside a multiword token share the surface range.
      const std::string& surface = w.mwt ? mwt_forms[*w.mwt] : w.form;
      const std::u32string f = utf8::decode(surface);
      while (cursor < u.size() && utf8::is_whitespace(u[cursor])) ++cursor;
      const auto pos = f.empty() ? std::u32string::npos : u.find(f, cursor);
      if (pos == std::u32string::npos) {
        throw AlignmentError(source + ": sentence '" + sent_id + "': token " +
                             std::to_string(w.id) + " '" + surface +
                             "' not found in '# text' after offset " + std::to_string(cursor));
      }
      range = {pos, pos + f.size()};
      cursor = range.end;
      open_mwt = w.mwt;
      mwt_range = range;
    }
    ann.tokens.push_back(DepToken{w.form, range, w.head, w.deprel});
  }
  return ann;
}

}  // namespace detail

/// Reads CoNLL-U text. Character offsets are rebuilt by locating each token
/// form in the '# text' comment left to right; empty nodes are ignored and
/// the words of a multiword token share the surface token's range.
inline AnnotationMap parse_conllu(std::istream& in, const std::string& source = "<conllu>") {
  AnnotationMap out;
  std::string sent_id;
  std::optional<std::string> text;
  std::vector<detail::RawWord> words;
  std::vector<std::string> mwt_forms;
  std::size_t mwt_end = 0;
  bool in_sentence = false;
  std::size_t line_no = 0;

  auto flush = [&] {
    if (!in_sentence) return;
    DepAnnotation ann = detail::finish_sentence(sent_id, text, words, mwt_forms, source);
    if (!out.emplace(ann.sentence_id, ann).second) {
      throw FormatError(source + ": duplicate sent_id '" + ann.sentence_id + "'");
    }
    sent_id.clear();
    text.reset();
    words.clear();
    mwt_forms.clear();
    mwt_end = 0;
    in_sentence = false;
  };

  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    in_sentence = true;
    if (line[0] == '#') {
      if (auto v = detail::comment_value(line, "sent_id"); !v.empty()) {
        sent_id = v;
      } else if (auto t = detail::comment_value(line, "text"); !t.empty()) {
        text = t;
      }
      continue;
    }
    const auto cols = detail::split_tabs(line);
    const std::string where = source + ":" + std::to_string(line_no);
    if (cols.size() != 10) {
      throw FormatError(where + ": expected 10 tab-separated columns, got " +
                        std::to_string(cols.size()));
    }
    const std::string& id = cols[0];
    if (id.find('.') != std::string::npos) continue;  // empty node
    try {
      if (const auto dash = id.find('-'); dash != std::string::npos) {
        mwt_forms.push_back(cols[1]);
        mwt_end = std::stoul(id.substr(dash + 1));
        continue;
      }
      detail::RawWord w;
      w.id = std::stoul(id);
      w.form = cols[1];
      w.head = cols[6] == "_" ? 0 : std::stoul(cols[6]);
      w.deprel = cols[7];
      if (!mwt_forms.empty() && w.id <= mwt_end) w.mwt = mwt_forms.size() - 1;
      words.push_back(std::move(w));
    } catch (const std::logic_error&) {
      throw FormatError(where + ": malformed token id or head");
    }
  }
  flush();
  return out;
}

inline AnnotationMap load_conllu(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_conllu(in, path.string());
}

inline std::string to_conllu(const DepAnnotation& ann) {
  std::ostringstream os;
  os << "# sent_id = " << ann.sentence_id << '\n' << "# text = " << ann.text << '\n';
  for (std::size_t i = 0; i < ann.tokens.size(); ++i) {
    const DepToken& t = ann.tokens[i];
    os << i + 1 << '\t' << t.form << "\t_\t_\t_\t_\t" << t.head << '\t'
       << (t.deprel.empty() ? "_" : t.deprel) << "\t_\t_\n";
  }
  os << '\n';
  return os.str();
}

/// Index of the annotated token with the largest character overlap with the
/// target span of `side`; ties go to the leftmost token.
inline std::size_t find_target_token(const WicPair& pair, int side, const DepAnnotation& ann) {
  const CharRange& span = pair.span(side);
  std::size_t best = 0, best_overlap = 0;
  for (std::size_t i = 0; i < ann.tokens.size(); ++i) {
    const std::size_t ov = ann.tokens[i].range.overlap(span);
    if (ov > best_overlap) {
      best = i;
      best_overlap = ov;
    }
  }
  if (best_overlap == 0) {
    throw AlignmentError("pair '" + pair.id + "' side " + std::to_string(side) +
                         ": target span [" + std::to_string(span.start) + ", " +
                         std::to_string(span.end) + ") overlaps no token of '" +
                         ann.sentence_id + "'");
  }
  return best;
}

}  // namespace wic::corpus
