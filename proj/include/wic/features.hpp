#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wic/corpus.hpp"
#include "wic/encoder.hpp"
#include "wic/error.hpp"
#include "wic/store.hpp"
#include "wic/subword.hpp"
#include "wic/tensor.hpp"
#include "wic/textio.hpp"
#include "wic/types.hpp"

namespace wic::features {

using numgrad::Tensor;
using subword::PoolingMode;

enum class Variant { target_concat, syntax };

inline std::string to_string(Variant v) {
  return v == Variant::target_concat ? "target_concat" : "syntax";
}

enum class DependentCombine { sum, average };

inline std::string to_string(DependentCombine c) {
  return c == DependentCombine::sum ? "sum" : "average";
}

inline DependentCombine parse_combine(const std::string& s) {
  if (s == "sum") return DependentCombine::sum;
  if (s == "average" || s == "mean") return DependentCombine::average;
  throw ConfigError("unknown dependent combination '" + s + "'");
}

struct FeatureVector {
  std::string pair_id;
  Variant variant = Variant::target_concat;
  Tensor values;  // [D]
  std::optional<Label> label;
  corpus::LangPair lang_pair;  // provenance of the pair the vector came from

  std::size_t dim() const { return values.size(); }
};

/// Hidden states of one sentence plus the character range each row covers
/// (empty ranges for special tokens).
struct SentenceStates {
  Tensor matrix;  // T×H
  std::vector<CharRange> offsets;
};

/// Where frozen hidden states come from.
class HiddenStateSource {
 public:
  virtual ~HiddenStateSource() = default;

  virtual std::size_t hidden() const = 0;
  virtual SentenceStates sentence(const corpus::WicPair& pair, int side) const = 0;

  /// Encoding of the lone word "null", pooled over its sub-tokens. Computed
  /// once per pooling mode and cached.
  const Tensor& null_embedding(PoolingMode mode) const {
    std::lock_guard lock(null_mutex_);
    auto it = null_cache_.find(mode);
    if (it == null_cache_.end()) it = null_cache_.emplace(mode, compute_null(mode)).first;
    return it->second;
  }

 protected:
  virtual Tensor compute_null(PoolingMode mode) const = 0;

  static Tensor pool_content_rows(const SentenceStates& s, PoolingMode mode) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < s.offsets.size(); ++i)
      if (!s.offsets[i].empty()) rows.push_back(i);
    if (rows.empty()) throw AlignmentError("'null' produced no content tokens");
    return subword::pool_rows(s.matrix, rows, mode);
  }

 private:
  mutable std::mutex null_mutex_;
  mutable std::map<PoolingMode, Tensor> null_cache_;
};

/// Encodes each sentence on its own with a frozen toy encoder.
class ToyEncoderSource : public HiddenStateSource {
 public:
  ToyEncoderSource(const encoder::ToyEncoder& enc, const subword::Vocabulary& vocab)
      : enc_(enc), vocab_(vocab) {}

  std::size_t hidden() const override { return enc_.hidden(); }

  SentenceStates sentence(const corpus::WicPair& pair, int side) const override {
    return encode_text(pair.sentence(side));
  }

  SentenceStates encode_text(const std::string& text) const {
    const subword::TokenizedSentence tok = subword::tokenize(vocab_, text);
    return {enc_.encode(tok.ids).matrix, tok.offsets};
  }

 protected:
  Tensor compute_null(PoolingMode mode) const override {
    return pool_content_rows(encode_text("null"), mode);
  }

 private:
  const encoder::ToyEncoder& enc_;
  const subword::Vocabulary& vocab_;
};

/// Reads hidden states exported by an external encoder. Rows are aligned to
/// characters through the offsets stored with each record or, failing that,
/// through the local tokenizer, which must then produce exactly T tokens.
class StoreSource : public HiddenStateSource {
 public:
  StoreSource(const encoder::PrecomputedStore& store, const subword::Vocabulary* vocab)
      : store_(store), vocab_(vocab) {}

  std::size_t hidden() const override { return store_.hidden(); }

  SentenceStates sentence(const corpus::WicPair& pair, int side) const override {
    return states_for(encoder::PrecomputedStore::key(pair.id, side), pair.sentence(side));
  }

 protected:
  Tensor compute_null(PoolingMode mode) const override {
    return pool_content_rows(states_for(encoder::PrecomputedStore::kNullKey, "null"), mode);
  }

 private:
  SentenceStates states_for(const std::string& key, const std::string& text) const {
    const encoder::StoreRecord* rec = store_.find(key);
    if (!rec) throw DataError("store has no hidden states for '" + key + "'");
    if (rec->offsets) return {rec->matrix, *rec->offsets};
    if (!vocab_) {
      throw AlignmentError("store record '" + key +
                           "' carries no offsets and no vocabulary was given to align it");
    }
    subword::TokenizedSentence tok = subword::tokenize(*vocab_, text);
    if (tok.size() != rec->matrix.rows()) {
      throw AlignmentError("store record '" + key + "' has " + std::to_string(rec->matrix.rows()) +
                           " rows but the tokenizer yields " + std::to_string(tok.size()) +
                           " tokens");
    }
    return {rec->matrix, std::move(tok.offsets)};
  }

  const encoder::PrecomputedStore& store_;
  const subword::Vocabulary* vocab_;
};

/// concat(pool(h1[span1]), pool(h2[span2])) → [2H].
inline FeatureVector build_target_concat(const Tensor& h1, const Tensor& h2,
                                         std::span<const std::size_t> span1,
                                         std::span<const std::size_t> span2, PoolingMode pooling,
                                         std::string pair_id = {}) {
  if (h1.rank() != 2 || h2.rank() != 2 || h1.cols() != h2.cols()) {
    throw DimensionError("target concatenation needs two T×H matrices with equal H");
  }
  const Tensor a = subword::pool_rows(h1, span1, pooling);
  const Tensor b = subword::pool_rows(h2, span2, pooling);
  std::vector<double> v = a.values();
  v.insert(v.end(), b.values().begin(), b.values().end());
  return {std::move(pair_id), Variant::target_concat, Tensor::vector(std::move(v)), std::nullopt, {}};
}

/// Pooled embedding of one annotated word.
inline Tensor word_embedding(const SentenceStates& s, const corpus::DepAnnotation& ann,
                             std::size_t token, PoolingMode pooling) {
  const auto rows = subword::align_span(std::span<const CharRange>(s.offsets),
                                        ann.tokens.at(token).range);
  return subword::pool_rows(s.matrix, rows, pooling);
}

/// concat(target, head, dependents) → [3H]. A missing head or an empty
/// dependent set is filled with `null_emb`; several direct dependents are
/// summed or averaged elementwise.
inline Tensor build_syntax_sentence(const SentenceStates& s, const corpus::DepAnnotation& ann,
                                    std::size_t target_token, PoolingMode pooling,
                                    DependentCombine combine, const Tensor& null_emb) {
  if (target_token >= ann.tokens.size()) {
    throw AlignmentError("target token " + std::to_string(target_token) + " outside '" +
                         ann.sentence_id + "'");
  }
  const std::size_t h = s.matrix.cols();
  if (null_emb.size() != h) throw DimensionError("null embedding does not match H");
  if (s.offsets.size() != s.matrix.rows()) {
    throw AlignmentError("hidden states and offsets disagree in length");
  }

  const Tensor target = word_embedding(s, ann, target_token, pooling);
  const auto head_index = ann.head_of(target_token);
  const Tensor head = head_index ? word_embedding(s, ann, *head_index, pooling) : null_emb;

  Tensor deps = null_emb;
  const auto children = ann.dependents(target_token);
  if (!children.empty()) {
    deps = Tensor({h});
    for (std::size_t c : children) {
      const Tensor e = word_embedding(s, ann, c, pooling);
      for (std::size_t i = 0; i < h; ++i) deps[i] += e[i];
    }
    if (combine == DependentCombine::average) {
      for (double& v : deps.values()) v /= static_cast<double>(children.size());
    }
  }

  std::vector<double> out;
  out.reserve(3 * h);
  for (const Tensor* part : {&target, &head, static_cast<const Tensor*>(&deps)})
    out.insert(out.end(), part->values().begin(), part->values().end());
  return Tensor::vector(std::move(out));
}

/// Sentence-1 block followed by sentence-2 block → [6H].
inline FeatureVector build_syntax_pair(const Tensor& s1, const Tensor& s2,
                                       std::string pair_id = {}) {
  if (s1.rank() != 1 || s1.shape() != s2.shape() || s1.size() % 3 != 0) {
    throw DimensionError("syntax sentence vectors must both be [3H]");
  }
  std::vector<double> v = s1.values();
  v.insert(v.end(), s2.values().begin(), s2.values().end());
  return {std::move(pair_id), Variant::syntax, Tensor::vector(std::move(v)), std::nullopt, {}};
}

/// Target-word features for a pair, encoding the two sentences separately.
inline FeatureVector extract_target_concat(const HiddenStateSource& src,
                                           const corpus::WicPair& pair, PoolingMode pooling) {
  const SentenceStates s1 = src.sentence(pair, 1);
  const SentenceStates s2 = src.sentence(pair, 2);
  const auto span1 = subword::align_span(std::span<const CharRange>(s1.offsets), pair.span1);
  const auto span2 = subword::align_span(std::span<const CharRange>(s2.offsets), pair.span2);
  FeatureVector f = build_target_concat(s1.matrix, s2.matrix, span1, span2, pooling, pair.id);
  f.label = pair.gold;
  f.lang_pair = pair.lang_pair;
  return f;
}

/// Target-word features from one joint encoding of both sentences.
inline FeatureVector extract_target_concat_joint(const encoder::ToyEncoder& enc,
                                                 const subword::Vocabulary& vocab,
                                                 const corpus::WicPair& pair,
                                                 PoolingMode pooling) {
  const auto tok1 = subword::tokenize(vocab, pair.sentence1);
  const auto tok2 = subword::tokenize(vocab, pair.sentence2);
  const auto joint = encoder::encode_joint(enc, vocab, tok1.content_ids(), tok2.content_ids());
  const auto span1 = joint.sequence.remap(1, subword::align_span(tok1, pair.span1));
  const auto span2 = joint.sequence.remap(2, subword::align_span(tok2, pair.span2));
  FeatureVector f = build_target_concat(joint.states.matrix, joint.states.matrix, span1, span2,
                                        pooling, pair.id);
  f.label = pair.gold;
  f.lang_pair = pair.lang_pair;
  return f;
}

inline Tensor syntax_sentence_for(const HiddenStateSource& src, const corpus::WicPair& pair,
                                  int side, const corpus::AnnotationMap& annotations,
                                  PoolingMode pooling, DependentCombine combine) {
  const std::string key = pair.sentence_key(side);
  const auto it = annotations.find(key);
  if (it == annotations.end()) throw DataError("no dependency annotation for '" + key + "'");
  const corpus::DepAnnotation& ann = it->second;
  if (ann.text != pair.sentence(side)) {
    throw AlignmentError("annotation '" + key + "' text differs from the pair sentence");
  }
  const std::size_t target = corpus::find_target_token(pair, side, ann);
  return build_syntax_sentence(src.sentence(pair, side), ann, target, pooling, combine,
                               src.null_embedding(pooling));
}

/// Dependency-based features: [target, head, dependents] per sentence, then
/// both sentences concatenated.
inline FeatureVector extract_syntax(const HiddenStateSource& src, const corpus::WicPair& pair,
                                    const corpus::AnnotationMap& annotations, PoolingMode pooling,
                                    DependentCombine combine) {
  FeatureVector f = build_syntax_pair(
      syntax_sentence_for(src, pair, 1, annotations, pooling, combine),
      syntax_sentence_for(src, pair, 2, annotations, pooling, combine), pair.id);
  f.label = pair.gold;
  f.lang_pair = pair.lang_pair;
  return f;
}

/// Feature cache: header "D=<int>", then "pair_id TAB label TAB values" with
/// label T, F or ? for unknown.
inline void write_feature_cache(std::ostream& out, std::span<const FeatureVector> features) {
  if (features.empty()) throw DataError("refusing to write an empty feature cache");
  const std::size_t d = features.front().dim();
  out << "D=" << d << '\n';
  for (const FeatureVector& f : features) {
    if (f.dim() != d) throw DimensionError("feature cache rows differ in dimension");
    out << f.pair_id << '\t' << gold_string(f.label) << '\t'
        << textio::join_doubles(f.values.values()) << '\n';
  }
}

inline std::vector<FeatureVector> read_feature_cache(std::istream& in,
                                                     Variant variant = Variant::target_concat,
                                                     const std::string& source = "<features>") {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(source + ": empty feature cache");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::size_t d = textio::parse_header(line, "D", source + ":1");
  std::vector<FeatureVector> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto cols = textio::split(line, '\t');
    if (cols.size() != 3) throw FormatError(where + ": expected pair_id, label, values");
    std::vector<double> values = textio::parse_doubles(cols[2], where);
    if (values.size() != d) {
      throw FormatError(where + ": " + std::to_string(values.size()) + " values, header says D=" +
                        std::to_string(d));
    }
    FeatureVector f;
    f.pair_id = std::string(cols[0]);
    f.variant = variant;
    try {
      f.label = parse_gold(std::string(cols[1]));
    } catch (const LabelError& e) {
      throw FormatError(where + ": " + e.what());
    }
    f.values = Tensor::vector(std::move(values));
    out.push_back(std::move(f));
  }
  return out;
}

inline void save_feature_cache(const std::filesystem::path& path,
                               std::span<const FeatureVector> features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_feature_cache(out, features);
}

inline std::vector<FeatureVector> load_feature_cache(const std::filesystem::path& path,
                                                     Variant variant = Variant::target_concat) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_feature_cache(in, variant, path.string());
}

}  // namespace wic::features
