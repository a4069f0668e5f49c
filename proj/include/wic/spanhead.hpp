#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "wic/autograd.hpp"
#include "wic/error.hpp"
#include "wic/tensor.hpp"
#include "wic/types.hpp"

namespace wic::spanhead {

using numgrad::Parameter;
using numgrad::Tape;
using numgrad::Tensor;
using numgrad::Var;

/// Span classification head: a shared scoring vector with bias that weights
/// the tokens of each target span, and a linear layer from the two
/// concatenated span embeddings to two logits (index 0 = F, 1 = T).
struct SpanHead {
  Parameter attn_vector;  // [H]
  Parameter attn_bias;    // [1]
  Parameter w_out;        // [2 × 2H]
  Parameter b_out;        // [2]

  SpanHead(std::size_t hidden, std::mt19937_64& rng, double init_std = 0.02)
      : attn_vector("head.attn_vector", Tensor::normal({hidden}, init_std, rng)),
        attn_bias("head.attn_bias", Tensor({1})),
        w_out("head.w_out", Tensor::normal({2, 2 * hidden}, init_std, rng)),
        b_out("head.b_out", Tensor({2})) {}

  std::size_t hidden() const { return attn_vector.value.size(); }

  std::vector<Parameter*> parameters() { return {&attn_vector, &attn_bias, &w_out, &b_out}; }
  std::vector<const Parameter*> parameters() const {
    return {&attn_vector, &attn_bias, &w_out, &b_out};
  }
};

/// Head parameters as recorded on a particular tape.
struct HeadVars {
  Var attn_vector, attn_bias, w_out, b_out;
};

inline HeadVars bind(Tape& tape, SpanHead& head) {
  return {tape.param(head.attn_vector), tape.param(head.attn_bias), tape.param(head.w_out),
          tape.param(head.b_out)};
}

inline HeadVars bind_frozen(Tape& tape, const SpanHead& head) {
  return {tape.frozen(head.attn_vector.value), tape.frozen(head.attn_bias.value),
          tape.frozen(head.w_out.value), tape.frozen(head.b_out.value)};
}

/// Attention-weighted embedding of the rows of `hidden` listed in `span`.
/// Scores are attn_vector·h_t + bias and are normalized over the span only,
/// so rows outside the span never enter the computation.
inline Var span_embed(Var hidden, std::span<const std::size_t> span, const HeadVars& head,
                      Tensor* weights_out = nullptr) {
  if (span.empty()) throw SpanError("span_embed: empty span");
  const Tensor& hv = hidden.value();
  if (hv.rank() != 2) throw DimensionError("span_embed: hidden states must be T×H");
  for (std::size_t i : span) {
    if (i >= hv.rows()) {
      throw DimensionError("span_embed: token index " + std::to_string(i) +
                           " out of range for " + std::to_string(hv.rows()) + " tokens");
    }
  }
  const std::size_t h = hv.cols();
  if (head.attn_vector.value().size() != h) {
    throw DimensionError("span_embed: head expects H=" +
                         std::to_string(head.attn_vector.value().size()) + ", got " +
                         std::to_string(h));
  }
  const std::size_t k = span.size();
  Var rows = numgrad::gather_rows(hidden, span);
  Var scores = numgrad::matmul(rows, numgrad::reshape(head.attn_vector, {h, 1}));
  scores = numgrad::add_scalar(numgrad::reshape(scores, {k}), head.attn_bias);
  Var weights = numgrad::softmax(scores);
  if (weights_out) *weights_out = weights.value();
  Var pooled = numgrad::matmul(numgrad::reshape(weights, {1, k}), rows);
  return numgrad::reshape(pooled, {h});
}

/// Two logits from the concatenated span embeddings.
inline Var classify(Var emb1, Var emb2, const HeadVars& head) {
  Var both = numgrad::concat({emb1, emb2});
  const std::size_t d = both.value().size();
  Var logits = numgrad::linear(numgrad::reshape(both, {1, d}), head.w_out, head.b_out);
  return numgrad::reshape(logits, {2});
}

/// Both spans index into one (jointly encoded) sequence.
inline Var forward_pair(Var hidden, std::span<const std::size_t> span1,
                        std::span<const std::size_t> span2, const HeadVars& head) {
  return classify(span_embed(hidden, span1, head), span_embed(hidden, span2, head), head);
}

/// Each span indexes its own separately encoded sentence.
inline Var forward_pair(Var hidden1, std::span<const std::size_t> span1, Var hidden2,
                        std::span<const std::size_t> span2, const HeadVars& head) {
  return classify(span_embed(hidden1, span1, head), span_embed(hidden2, span2, head), head);
}

// Inference helpers over plain tensors.

inline Tensor span_embed(const Tensor& hidden, std::span<const std::size_t> span,
                         const SpanHead& head, Tensor* weights_out = nullptr) {
  Tape tape;
  return span_embed(tape.frozen(hidden), span, bind_frozen(tape, head), weights_out).value();
}

inline Tensor forward_pair(const Tensor& hidden, std::span<const std::size_t> span1,
                           std::span<const std::size_t> span2, const SpanHead& head) {
  Tape tape;
  return forward_pair(tape.frozen(hidden), span1, span2, bind_frozen(tape, head)).value();
}

/// argmax over (F, T); an exact tie resolves to F.
inline Label predict(const Tensor& logits) {
  if (logits.size() != 2) throw DimensionError("predict expects two logits");
  return logits[1] > logits[0] ? Label::T : Label::F;
}

}  // namespace wic::spanhead
