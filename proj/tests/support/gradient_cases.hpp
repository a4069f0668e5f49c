#pragma once

// Finite-difference cases shared by the unit tests and the acceptance run.
// Each case builds fresh random parameters from a seed and reports the worst
// relative error between reverse-mode and central-difference gradients.

#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "wic/autograd.hpp"
#include "wic/classifiers.hpp"
#include "wic/encoder.hpp"
#include "wic/gradcheck.hpp"
#include "wic/spanhead.hpp"

namespace gradcases {

using namespace wic;
using numgrad::GradCheckReport;
using numgrad::Parameter;
using numgrad::Tape;
using numgrad::Tensor;
using numgrad::Var;

struct Case {
  std::string name;
  std::function<GradCheckReport(std::uint64_t seed)> run;
};

inline void PrintTo(const Case& c, std::ostream* os) { *os << c.name; }

inline Tensor rand_tensor(numgrad::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  return Tensor::uniform(std::move(shape), -scale, scale, rng);
}

// Entries with magnitude in [0.1, 1] and random sign, keeping ReLU inputs
// clear of the kink.
inline Tensor away_from_zero(numgrad::Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (double& v : t.values()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

/// Reduces any output to a scalar through fixed random weights so that every
/// output coordinate contributes a distinct gradient.
inline Var project(Var y, const Tensor& w) {
  Tape& t = *y.tape;
  return numgrad::sum(numgrad::mul(y, t.frozen(w)));
}

struct Params {
  std::vector<std::unique_ptr<Parameter>> owned;
  Parameter& add(std::string name, Tensor value) {
    owned.push_back(std::make_unique<Parameter>(std::move(name), std::move(value)));
    return *owned.back();
  }
  std::vector<Parameter*> list() const {
    std::vector<Parameter*> out;
    for (const auto& p : owned) out.push_back(p.get());
    return out;
  }
};

inline GradCheckReport check(const Params& ps, const numgrad::ScalarFn& f,
                             numgrad::GradCheckOptions opt = {}) {
  const auto list = ps.list();
  return numgrad::grad_check(f, list, opt);
}

/// Cases for a unary op on one random input.
inline Case unary(std::string name, numgrad::Shape shape, std::function<Var(Var)> op,
                  bool avoid_zero = false) {
  return {name, [=](std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            Params ps;
            Parameter& x = ps.add("x", avoid_zero ? away_from_zero(shape, rng) : rand_tensor(shape, rng));
            Tape probe;
            const Tensor w = rand_tensor(op(probe.frozen(x.value)).value().shape(), rng);
            return check(ps, [&](Tape& t) { return project(op(t.param(x)), w); });
          }};
}

inline Case binary(std::string name, numgrad::Shape sa, numgrad::Shape sb,
                   std::function<Var(Var, Var)> op) {
  return {name, [=](std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            Params ps;
            Parameter& a = ps.add("a", rand_tensor(sa, rng));
            Parameter& b = ps.add("b", rand_tensor(sb, rng));
            Tape probe;
            const Tensor w =
                rand_tensor(op(probe.frozen(a.value), probe.frozen(b.value)).value().shape(), rng);
            return check(ps, [&](Tape& t) { return project(op(t.param(a), t.param(b)), w); });
          }};
}

inline std::vector<Case> op_cases() {
  std::vector<Case> cases;
  cases.push_back(binary("matmul", {3, 4}, {4, 2}, [](Var a, Var b) { return numgrad::matmul(a, b); }));
  cases.push_back(binary("add", {2, 3}, {2, 3}, [](Var a, Var b) { return numgrad::add(a, b); }));
  cases.push_back(binary("add_bias", {3, 4}, {4}, [](Var a, Var b) { return numgrad::add_bias(a, b); }));
  cases.push_back(binary("add_scalar", {5}, {1}, [](Var a, Var b) { return numgrad::add_scalar(a, b); }));
  cases.push_back(binary("mul", {2, 3}, {2, 3}, [](Var a, Var b) { return numgrad::mul(a, b); }));
  cases.push_back(unary("scale", {2, 3}, [](Var x) { return numgrad::scale(x, -1.7); }));
  cases.push_back(unary("relu", {3, 4}, [](Var x) { return numgrad::relu(x); }, true));
  cases.push_back(unary("softmax", {6}, [](Var x) { return numgrad::softmax(x); }));
  cases.push_back(unary("softmax_rows", {3, 5}, [](Var x) { return numgrad::softmax_rows(x); }));
  cases.push_back(unary("sum", {2, 3}, [](Var x) { return numgrad::sum(x); }));
  cases.push_back(unary("gather_rows", {4, 3}, [](Var x) {
    const std::size_t idx[] = {2, 0, 2, 3};
    return numgrad::gather_rows(x, idx);
  }));
  cases.push_back(unary("slice_cols", {3, 6}, [](Var x) { return numgrad::slice_cols(x, 2, 3); }));
  cases.push_back(binary("concat_cols", {3, 2}, {3, 4}, [](Var a, Var b) {
    const Var parts[] = {a, b, a};
    return numgrad::concat_cols(parts);
  }));
  cases.push_back(binary("concat", {3}, {4}, [](Var a, Var b) { return numgrad::concat({a, b}); }));
  cases.push_back(unary("reshape", {2, 6}, [](Var x) { return numgrad::reshape(x, {3, 4}); }));
  cases.push_back(unary("transpose", {2, 5}, [](Var x) { return numgrad::transpose(x); }));
  cases.push_back(unary("dropout", {4, 5}, [](Var x) {
    std::mt19937_64 mask_rng(99);  // same mask on every evaluation
    return numgrad::dropout(x, 0.3, mask_rng);
  }));

  cases.push_back({"linear", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     Params ps;
                     Parameter& x = ps.add("x", rand_tensor({3, 4}, rng));
                     Parameter& w = ps.add("w", rand_tensor({2, 4}, rng));
                     Parameter& b = ps.add("b", rand_tensor({2}, rng));
                     const Tensor proj = rand_tensor({3, 2}, rng);
                     return check(ps, [&](Tape& t) {
                       return project(numgrad::linear(t.param(x), t.param(w), t.param(b)), proj);
                     });
                   }});
  cases.push_back({"layer_norm_rows", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     Params ps;
                     Parameter& x = ps.add("x", rand_tensor({3, 5}, rng, 2.0));
                     Parameter& g = ps.add("gain", rand_tensor({5}, rng));
                     Parameter& b = ps.add("bias", rand_tensor({5}, rng));
                     const Tensor proj = rand_tensor({3, 5}, rng);
                     return check(ps, [&](Tape& t) {
                       return project(numgrad::layer_norm_rows(t.param(x), t.param(g), t.param(b)), proj);
                     });
                   }});
  cases.push_back({"cross_entropy_rows", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     Params ps;
                     Parameter& z = ps.add("logits", rand_tensor({4, 3}, rng, 3.0));
                     std::vector<std::size_t> golds(4);
                     for (auto& g : golds) g = rng() % 3;
                     return check(ps, [&](Tape& t) { return numgrad::cross_entropy_rows(t.param(z), golds); });
                   }});
  cases.push_back({"cross_entropy", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     Params ps;
                     Parameter& z = ps.add("logits", rand_tensor({2}, rng, 3.0));
                     const std::size_t gold = rng() % 2;
                     return check(ps, [&](Tape& t) { return numgrad::cross_entropy(t.param(z), gold); });
                   }});
  cases.push_back({"bce_with_logits", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     Params ps;
                     Parameter& z = ps.add("z", rand_tensor({6}, rng, 4.0));
                     std::vector<std::size_t> ys(6);
                     for (auto& y : ys) y = rng() % 2;
                     return check(ps, [&](Tape& t) { return numgrad::bce_with_logits(t.param(z), ys); });
                   }});
  return cases;
}

/// MLP on a random batch with random labels.
inline GradCheckReport mlp_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t d = 5, batch = 4;
  Params ps;
  auto m = classifiers::MLPModel::init(d, rng);
  Parameter& w1 = ps.add("w1", m.w1);
  Parameter& b1 = ps.add("b1", rand_tensor({d}, rng, 0.5));
  Parameter& w2 = ps.add("w2", m.w2);
  Parameter& b2 = ps.add("b2", rand_tensor({2}, rng, 0.5));
  const Tensor x = rand_tensor({batch, d}, rng, 2.0);
  std::vector<std::size_t> golds(batch);
  for (auto& g : golds) g = rng() % 2;
  return check(ps, [&](Tape& t) {
    return classifiers::mlp_loss(t.frozen(x),
                                 {t.param(w1), t.param(b1), t.param(w2), t.param(b2)}, golds);
  });
}

/// LR loss on a random batch.
inline GradCheckReport lr_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Params ps;
  Parameter& w = ps.add("w", rand_tensor({6}, rng));
  Parameter& b = ps.add("b", rand_tensor({1}, rng));
  const Tensor x = rand_tensor({5, 6}, rng, 2.0);
  std::vector<std::size_t> ys(5);
  for (auto& y : ys) y = rng() % 2;
  return check(ps, [&](Tape& t) { return classifiers::lr_loss(t.frozen(x), t.param(w), t.param(b), ys); });
}

/// Span head on fixed hidden states: loss w.r.t. head parameters and the
/// hidden states themselves.
inline GradCheckReport span_head_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t h = 4;
  spanhead::SpanHead head(h, rng, 0.5);
  Params ps;
  Parameter& hidden = ps.add("hidden", rand_tensor({7, h}, rng));
  const std::vector<std::size_t> span1 = {1, 2}, span2 = {4, 5, 6};
  const std::size_t gold = rng() % 2;
  std::vector<Parameter*> list = ps.list();
  for (Parameter* p : head.parameters()) list.push_back(p);
  return numgrad::grad_check(
      [&](Tape& t) {
        Var logits = spanhead::forward_pair(t.param(hidden), span1, span2, spanhead::bind(t, head));
        return numgrad::cross_entropy(logits, gold);
      },
      list);
}

/// Two-layer toy encoder, joint sequence, span head and cross-entropy, with
/// gradients taken w.r.t. every parameter of encoder and head. A sample of
/// coordinates per parameter keeps the run short.
inline GradCheckReport encoder_end_to_end_case(std::uint64_t seed) {
  encoder::EncoderConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.hidden = 8;
  cfg.ffn = 12;
  cfg.max_len = 10;
  cfg.vocab_size = 12;
  cfg.dropout = 0.0;
  cfg.init_std = 0.4;
  encoder::ToyEncoder enc(cfg, seed);
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  spanhead::SpanHead head(cfg.hidden, rng, 0.4);
  std::vector<subword::TokenId> ids(8);
  for (auto& id : ids) id = static_cast<subword::TokenId>(rng() % cfg.vocab_size);
  const std::vector<std::size_t> span1 = {1, 2}, span2 = {5};
  const std::size_t gold = rng() % 2;
  std::vector<Parameter*> list = enc.parameters();
  for (Parameter* p : head.parameters()) list.push_back(p);
  numgrad::GradCheckOptions opt;
  opt.max_coords_per_param = 6;
  opt.sample_seed = seed;
  return numgrad::grad_check(
      [&](Tape& t) {
        Var h = enc.forward(t, ids);
        Var logits = spanhead::forward_pair(h, span1, span2, spanhead::bind(t, head));
        return numgrad::cross_entropy(logits, gold);
      },
      list, opt);
}

inline std::vector<Case> all_cases() {
  std::vector<Case> cases = op_cases();
  cases.push_back({"mlp_loss", mlp_case});
  cases.push_back({"lr_loss", lr_case});
  cases.push_back({"span_head", span_head_case});
  cases.push_back({"encoder_end_to_end", encoder_end_to_end_case});
  return cases;
}

}  // namespace gradcases
