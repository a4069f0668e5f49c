#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "wic/autograd.hpp"
#include "wic/error.hpp"
#include "wic/subword.hpp"
#include "wic/tensor.hpp"

namespace wic::encoder {

using numgrad::Parameter;
using numgrad::Tape;
using numgrad::Tensor;
using numgrad::Var;
using subword::TokenId;

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t hidden = 32;
  std::size_t ffn = 64;
  std::size_t max_len = 128;
  std::size_t vocab_size = 0;
  double dropout = 0.1;
  double init_std = 0.02;

  void validate() const {
    if (heads == 0) throw ConfigError("encoder heads must be >= 1");
    if (hidden == 0) throw ConfigError("encoder hidden size must be >= 1");
    if (hidden % heads != 0) {
      throw ConfigError("encoder hidden size " + std::to_string(hidden) +
                        " is not divisible by " + std::to_string(heads) + " heads");
    }
    if (ffn == 0) throw ConfigError("encoder ffn size must be >= 1");
    if (max_len == 0) throw ConfigError("encoder max_len must be >= 1");
    if (vocab_size == 0) throw ConfigError("encoder vocab_size must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(init_std > 0.0)) throw ConfigError("init_std must be > 0");
  }
};

/// Last-layer contextual vectors, one row per token.
struct HiddenStates {
  Tensor matrix;  // T×H

  std::size_t tokens() const { return matrix.rows(); }
  std::size_t hidden() const { return matrix.cols(); }
};

enum class Mode { eval, train };

/// Attention weights captured during a forward pass, [layer][head] → T×T.
struct AttentionTrace {
  std::vector<std::vector<Tensor>> weights;
};

/// Small post-norm transformer encoder: token + learned positional
/// embeddings, then `layers` blocks of multi-head self-attention and a ReLU
/// feed-forward network, each followed by residual add and layer norm.
class ToyEncoder {
 public:
  struct Block {
    Parameter wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter ln1_gain, ln1_bias;
    Parameter ff1_w, ff1_b, ff2_w, ff2_b;
    Parameter ln2_gain, ln2_bias;
  };

  ToyEncoder(EncoderConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    const std::size_t h = cfg_.hidden, f = cfg_.ffn;
    auto normal = [&](std::string name, numgrad::Shape shape) {
      return Parameter(std::move(name), Tensor::normal(std::move(shape), cfg_.init_std, rng));
    };
    auto zeros = [](std::string name, numgrad::Shape shape) {
      return Parameter(std::move(name), Tensor(std::move(shape)));
    };
    auto ones = [](std::string name, numgrad::Shape shape) {
      return Parameter(std::move(name), Tensor(std::move(shape), 1.0));
    };
    token_embedding_ = normal("encoder.token_embedding", {cfg_.vocab_size, h});
    position_embedding_ = normal("encoder.position_embedding", {cfg_.max_len, h});
    blocks_.reserve(cfg_.layers);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const std::string p = "encoder.layer" + std::to_string(l) + ".";
      blocks_.push_back(Block{
          normal(p + "wq", {h, h}), zeros(p + "bq", {h}),
          normal(p + "wk", {h, h}), zeros(p + "bk", {h}),
          normal(p + "wv", {h, h}), zeros(p + "bv", {h}),
          normal(p + "wo", {h, h}), zeros(p + "bo", {h}),
          ones(p + "ln1_gain", {h}), zeros(p + "ln1_bias", {h}),
          normal(p + "ff1_w", {f, h}), zeros(p + "ff1_b", {f}),
          normal(p + "ff2_w", {h, f}), zeros(p + "ff2_b", {h}),
          ones(p + "ln2_gain", {h}), zeros(p + "ln2_bias", {h}),
      });
    }
  }

  const EncoderConfig& config() const { return cfg_; }
  std::size_t hidden() const { return cfg_.hidden; }

  std::vector<Parameter*> parameters() { return collect<Parameter>(*this); }
  std::vector<const Parameter*> parameters() const { return collect<const Parameter>(*this); }

  void check_ids(std::span<const TokenId> ids) const {
    if (ids.empty()) throw LengthError("cannot encode an empty sequence");
    if (ids.size() > cfg_.max_len) {
      throw LengthError("sequence of " + std::to_string(ids.size()) +
                        " tokens exceeds max_len " + std::to_string(cfg_.max_len));
    }
    for (TokenId id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size) {
        throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(cfg_.vocab_size));
      }
    }
  }

  /// Records a trainable forward pass: every parameter is registered on the
  /// tape for gradients. Dropout applies only in train mode and draws from
  /// `rng`.
  Var forward(Tape& tape, std::span<const TokenId> ids, Mode mode = Mode::eval,
              std::mt19937_64* rng = nullptr, AttentionTrace* trace = nullptr) {
    return forward_impl(*this, tape, ids, mode, rng, trace);
  }

  /// Same graph with every parameter entering as a frozen constant.
  Var forward_frozen(Tape& tape, std::span<const TokenId> ids,
                     AttentionTrace* trace = nullptr) const {
    return forward_impl(*this, tape, ids, Mode::eval, nullptr, trace);
  }

  HiddenStates encode(std::span<const TokenId> ids, AttentionTrace* trace = nullptr) const {
    Tape tape;
    return HiddenStates{forward_frozen(tape, ids, trace).value()};
  }

 private:
  template <class P, class Self>
  static std::vector<P*> collect(Self& self) {
    std::vector<P*> out = {&self.token_embedding_, &self.position_embedding_};
    for (auto& b : self.blocks_) {
      for (P* p : {&b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo, &b.bo, &b.ln1_gain,
                   &b.ln1_bias, &b.ff1_w, &b.ff1_b, &b.ff2_w, &b.ff2_b, &b.ln2_gain,
                   &b.ln2_bias}) {
        out.push_back(p);
      }
    }
    return out;
  }

  template <class Self>
  static Var forward_impl(Self& self, Tape& tape, std::span<const TokenId> ids, Mode mode,
                          std::mt19937_64* rng, AttentionTrace* trace) {
    const EncoderConfig& cfg = self.cfg_;
    self.check_ids(ids);
    if (mode == Mode::train && cfg.dropout > 0.0 && rng == nullptr) {
      throw Error("train-mode encoding with dropout needs a random generator");
    }
    auto use = [&tape](auto& p) {
      if constexpr (std::is_const_v<std::remove_reference_t<decltype(p)>>) {
        return tape.frozen(p.value);
      } else {
        return tape.param(p);
      }
    };
    auto drop = [&](Var x) {
      return mode == Mode::train ? numgrad::dropout(x, cfg.dropout, *rng) : x;
    };

    const std::size_t t = ids.size(), h = cfg.hidden;
    std::vector<std::size_t> token_rows(ids.begin(), ids.end());
    std::vector<std::size_t> positions(t);
    for (std::size_t i = 0; i < t; ++i) positions[i] = i;
    Var x = numgrad::add(numgrad::gather_rows(use(self.token_embedding_), token_rows),
                         numgrad::gather_rows(use(self.position_embedding_), positions));
    x = drop(x);

    const std::size_t dh = h / cfg.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    if (trace) trace->weights.clear();
    for (auto& b : self.blocks_) {
      Var q = numgrad::linear(x, use(b.wq), use(b.bq));
      Var k = numgrad::linear(x, use(b.wk), use(b.bk));
      Var v = numgrad::linear(x, use(b.wv), use(b.bv));
      std::vector<Var> heads;
      if (trace) trace->weights.emplace_back();
      for (std::size_t hd = 0; hd < cfg.heads; ++hd) {
        Var qh = numgrad::slice_cols(q, hd * dh, dh);
        Var kh = numgrad::slice_cols(k, hd * dh, dh);
        Var vh = numgrad::slice_cols(v, hd * dh, dh);
        Var scores = numgrad::scale(numgrad::matmul(qh, numgrad::transpose(kh)), inv_sqrt);
        Var attn = numgrad::softmax_rows(scores);
        if (trace) trace->weights.back().push_back(attn.value());
        heads.push_back(numgrad::matmul(drop(attn), vh));
      }
      Var attended = numgrad::linear(numgrad::concat_cols(heads), use(b.wo), use(b.bo));
      x = numgrad::layer_norm_rows(numgrad::add(x, drop(attended)), use(b.ln1_gain),
                                   use(b.ln1_bias));
      Var ff = numgrad::linear(
          numgrad::relu(numgrad::linear(x, use(b.ff1_w), use(b.ff1_b))), use(b.ff2_w),
          use(b.ff2_b));
      x = numgrad::layer_norm_rows(numgrad::add(x, drop(ff)), use(b.ln2_gain),
                                   use(b.ln2_bias));
    }
    return x;
  }

  EncoderConfig cfg_;
  Parameter token_embedding_;
  Parameter position_embedding_;
  std::vector<Block> blocks_;
};

/// [cls] ids1 [sep] ids2 [sep], plus where each sentence's content starts.
struct JointSequence {
  std::vector<TokenId> ids;
  std::size_t shift1 = 1;
  std::size_t shift2 = 0;

  /// Maps a token index of a framed single-sentence tokenization (index 0 is
  /// [cls]) into the joint sequence.
  std::size_t remap(int side, std::size_t framed_index) const {
    if (framed_index == 0) throw Error("cannot remap the [cls] position");
    return (side == 1 ? shift1 : shift2) + framed_index - 1;
  }

  std::vector<std::size_t> remap(int side, std::span<const std::size_t> framed) const {
    std::vector<std::size_t> out;
    out.reserve(framed.size());
    for (std::size_t i : framed) out.push_back(remap(side, i));
    return out;
  }
};

/// Builds the joint sequence from the content ids (no specials) of each side.
inline JointSequence join_sequences(std::span<const TokenId> content1,
                                    std::span<const TokenId> content2, TokenId cls,
                                    TokenId sep, std::size_t max_len) {
  if (content1.empty() || content2.empty()) {
    throw ValidationError("joint encoding needs two non-empty sentences");
  }
  const std::size_t total = content1.size() + content2.size() + 3;
  if (total > max_len) {
    throw LengthError("joint sequence of " + std::to_string(total) +
                      " tokens exceeds max_len " + std::to_string(max_len));
  }
  JointSequence j;
  j.ids.reserve(total);
  j.ids.push_back(cls);
  j.ids.insert(j.ids.end(), content1.begin(), content1.end());
  j.ids.push_back(sep);
  j.shift2 = j.ids.size();
  j.ids.insert(j.ids.end(), content2.begin(), content2.end());
  j.ids.push_back(sep);
  return j;
}

struct JointEncoding {
  HiddenStates states;
  JointSequence sequence;
};

inline JointEncoding encode_joint(const ToyEncoder& enc, const subword::Vocabulary& vocab,
                                  std::span<const TokenId> content1,
                                  std::span<const TokenId> content2) {
  JointSequence seq = join_sequences(content1, content2, vocab.cls(), vocab.sep(),
                                     enc.config().max_len);
  HiddenStates states = enc.encode(seq.ids);
  return {std::move(states), std::move(seq)};
}

}  // namespace wic::encoder
