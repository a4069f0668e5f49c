#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "wic/corpus.hpp"
#include "wic/subword.hpp"
#include "wic/types.hpp"

namespace wic::synthetic {

/// Word lists of the marker-token corpus. The word right before the target
/// is a marker; markers from `true_markers` mean label T, markers from
/// `false_markers` mean F.
struct Lexicon {
  std::vector<std::string> fillers = {
      "the",   "a",     "old",    "man",   "saw",   "near",  "river", "city",  "with",
      "under", "green", "stone",  "house", "walks", "slow",  "over",  "cold",  "window",
      "quiet", "dog",   "reads",  "bread", "small", "road",  "after", "rain",  "tall",
      "tree",  "down",  "market", "sings", "early", "light", "warm",  "field", "boat"};
  std::vector<std::string> targets = {"bank",  "bass",  "crane", "match", "pitch", "seal",
                                      "spring", "bark", "bat",   "date", "fair",  "mole"};
  std::vector<std::string> true_markers = {"alpha", "beta", "gamma"};
  std::vector<std::string> false_markers = {"delta", "omega", "sigma"};
};

struct Options {
  std::size_t pairs = 200;
  std::size_t min_fillers = 3;
  std::size_t max_fillers = 7;
  std::string id_prefix = "synth";
  corpus::LangPair lang_pair{"en", "en"};
};

inline subword::Vocabulary vocabulary(const Lexicon& lex = {}) {
  std::vector<std::string> pieces;
  for (const auto* list : {&lex.fillers, &lex.targets, &lex.true_markers, &lex.false_markers})
    pieces.insert(pieces.end(), list->begin(), list->end());
  pieces.push_back("null");
  return subword::Vocabulary::from_pieces(pieces);
}

namespace detail {

inline const std::string& pick(const std::vector<std::string>& v, std::mt19937_64& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

/// Returns the sentence and the code-point range of the target.
inline std::pair<std::string, CharRange> sentence(const Lexicon& lex, const Options& opt,
                                                  const std::string& marker,
                                                  const std::string& target,
                                                  std::mt19937_64& rng) {
  const std::size_t n =
      std::uniform_int_distribution<std::size_t>(opt.min_fillers, opt.max_fillers)(rng);
  std::vector<std::string> words;
  for (std::size_t i = 0; i < n; ++i) words.push_back(pick(lex.fillers, rng));
  const std::size_t at = std::uniform_int_distribution<std::size_t>(0, n)(rng);
  words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), {marker, target});

  std::string text;
  CharRange span;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) text += ' ';
    if (i == at + 1) span.start = text.size();
    text += words[i];
    if (i == at + 1) span.end = text.size();
  }
  return {text, span};
}

}  // namespace detail

/// Pairs whose label is decided by the marker in front of each target.
inline std::vector<corpus::WicPair> generate(std::uint64_t seed, const Options& opt = {},
                                             const Lexicon& lex = {}) {
  std::mt19937_64 rng(seed);
  std::vector<corpus::WicPair> out;
  out.reserve(opt.pairs);
  for (std::size_t i = 0; i < opt.pairs; ++i) {
    const Label label = std::bernoulli_distribution(0.5)(rng) ? Label::T : Label::F;
    const auto& markers = label == Label::T ? lex.true_markers : lex.false_markers;
    const std::string target = detail::pick(lex.targets, rng);
    auto [s1, span1] = detail::sentence(lex, opt, detail::pick(markers, rng), target, rng);
    auto [s2, span2] = detail::sentence(lex, opt, detail::pick(markers, rng), target, rng);
    corpus::WicPair p;
    p.id = opt.id_prefix + "." + opt.lang_pair.str() + "." + std::to_string(i);
    p.lang_pair = opt.lang_pair;
    p.lemma = target;
    p.pos = "NOUN";
    p.sentence1 = std::move(s1);
    p.sentence2 = std::move(s2);
    p.span1 = span1;
    p.span2 = span2;
    p.gold = label;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace wic::synthetic
