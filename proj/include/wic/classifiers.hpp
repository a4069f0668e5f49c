#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "wic/autograd.hpp"
#include "wic/checkpoint.hpp"
#include "wic/error.hpp"
#include "wic/features.hpp"
#include "wic/optim.hpp"
#include "wic/tensor.hpp"
#include "wic/types.hpp"

namespace wic::classifiers {

using numgrad::OptimizerConfig;
using numgrad::Parameter;
using numgrad::Tape;
using numgrad::Tensor;
using numgrad::Var;

enum class IterationUnit { epoch, step };

inline std::string to_string(IterationUnit u) { return u == IterationUnit::epoch ? "epoch" : "step"; }

inline IterationUnit parse_iteration_unit(const std::string& s) {
  if (s == "epoch" || s == "epochs") return IterationUnit::epoch;
  if (s == "step" || s == "steps") return IterationUnit::step;
  throw ConfigError("unknown iteration unit '" + s + "' (expected epoch or step)");
}

struct EarlyStop {
  double min_improvement = 1e-6;
  std::size_t window = 10;
};

struct TrainRegime {
  std::size_t max_iters = 150;
  std::size_t batch_size = 32;
  OptimizerConfig optimizer = OptimizerConfig::sgd(0.0025);
  std::uint64_t seed = 0;
  IterationUnit unit = IterationUnit::epoch;
  std::optional<EarlyStop> early_stop;

  double learning_rate() const { return optimizer.learning_rate; }

  static TrainRegime lr_default() {
    return {150, 32, OptimizerConfig::sgd(0.0025), 0, IterationUnit::epoch, std::nullopt};
  }
  static TrainRegime mlp_default() {
    return {200, 32, OptimizerConfig::adam(0.001), 0, IterationUnit::epoch, EarlyStop{}};
  }
  static TrainRegime finetune_default() {
    return {3, 32, OptimizerConfig::adamw(1e-5), 0, IterationUnit::epoch, std::nullopt};
  }

  void validate() const {
    if (max_iters == 0) throw ConfigError("max_iters must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (early_stop && early_stop->window == 0) throw ConfigError("early-stop window must be positive");
    optimizer.validate();
  }
};

struct TrainingLog {
  std::vector<double> epoch_loss;  // mean training loss of each epoch
  std::size_t steps = 0;
  bool early_stopped = false;
};

/// Computes the mean loss of one mini-batch and accumulates its gradients.
using BatchFn = std::function<double(std::span<const std::size_t> batch)>;
using EpochFn = std::function<void(std::size_t epoch, double loss)>;

/// Mini-batch loop shared by every trainer. Each epoch visits the examples in
/// a fresh permutation drawn from the regime seed.
inline TrainingLog minibatch_train(std::size_t n, const TrainRegime& regime,
                                   std::span<Parameter* const> params, const BatchFn& batch_fn,
                                   const EpochFn& on_epoch = {}) {
  regime.validate();
  if (n == 0) throw DegenerateDataError("no training examples");
  numgrad::Optimizer opt(regime.optimizer);
  std::mt19937_64 rng(regime.seed);
  std::vector<std::size_t> order(n);
  TrainingLog log;

  const auto done = [&] {
    return regime.unit == IterationUnit::epoch ? log.epoch_loss.size() >= regime.max_iters
                                               : log.steps >= regime.max_iters;
  };

  while (!done()) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n; start += regime.batch_size) {
      if (regime.unit == IterationUnit::step && log.steps >= regime.max_iters) break;
      const std::size_t len = std::min(regime.batch_size, n - start);
      numgrad::zero_grads(params);
      const double loss = batch_fn(std::span<const std::size_t>(order).subspan(start, len));
      opt.step(params);
      ++log.steps;
      total += loss * static_cast<double>(len);
      seen += len;
    }
    const double epoch_loss = total / static_cast<double>(seen);
    log.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(log.epoch_loss.size(), epoch_loss);

    if (regime.early_stop && log.epoch_loss.size() > regime.early_stop->window) {
      const std::size_t e = log.epoch_loss.size() - 1;
      const double gain = log.epoch_loss[e - regime.early_stop->window] - log.epoch_loss[e];
      if (gain < regime.early_stop->min_improvement) {
        log.early_stopped = true;
        break;
      }
    }
  }
  return log;
}

/// Feature rows with labels, as consumed by the trainers.
struct Dataset {
  Tensor x;  // N×D
  std::vector<Label> y;

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return x.cols(); }
};

inline Dataset make_dataset(std::span<const features::FeatureVector> feats) {
  if (feats.empty()) throw DegenerateDataError("no feature vectors");
  const std::size_t d = feats.front().dim();
  Dataset ds{Tensor({feats.size(), d}), {}};
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const auto& f = feats[i];
    if (f.dim() != d) throw DimensionError("feature vectors differ in dimension");
    if (!f.label) throw LabelError("feature vector '" + f.pair_id + "' has no gold label");
    std::copy(f.values.values().begin(), f.values.values().end(), ds.x.row(i).begin());
    ds.y.push_back(*f.label);
  }
  return ds;
}

namespace detail {

inline void check_trainable(const Dataset& ds) {
  if (ds.x.rank() != 2 || ds.x.rows() != ds.y.size()) {
    throw DimensionError("dataset has " + std::to_string(ds.y.size()) + " labels for features of shape " +
                         numgrad::shape_string(ds.x.shape()));
  }
  if (ds.y.empty()) throw DegenerateDataError("no training examples");
  const bool has_t = std::ranges::count(ds.y, Label::T) > 0;
  const bool has_f = std::ranges::count(ds.y, Label::F) > 0;
  if (!has_t || !has_f) throw DegenerateDataError("training data contains a single class");
  ds.x.require_finite("training features");
}

inline std::vector<std::size_t> label_indices(const Dataset& ds, std::span<const std::size_t> batch) {
  std::vector<std::size_t> out;
  out.reserve(batch.size());
  for (std::size_t i : batch) out.push_back(label_index(ds.y[i]));
  return out;
}

inline void check_input(const Tensor& e, std::size_t d) {
  if (e.rank() != 1 || e.size() != d) {
    throw DimensionError("classifier expects a [" + std::to_string(d) + "] feature vector, got " +
                         numgrad::shape_string(e.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Logistic regression

struct LRModel {
  Tensor w;  // [D]
  double b = 0.0;

  static LRModel zeros(std::size_t d) { return {Tensor({d}), 0.0}; }

  std::size_t dim() const { return w.size(); }

  double logit(const Tensor& e) const {
    detail::check_input(e, dim());
    double z = b;
    for (std::size_t i = 0; i < e.size(); ++i) z += w[i] * e[i];
    return z;
  }

  double probability(const Tensor& e) const { return numgrad::detail::sigmoid(logit(e)); }

  // p > 0.5 exactly when the logit is positive; a zero logit gives F.
  Label predict(const Tensor& e) const { return logit(e) > 0.0 ? Label::T : Label::F; }
};

/// Mean binary cross-entropy of sigmoid(X w + b) on the selected rows.
inline Var lr_loss(Var x, Var w, Var b, std::span<const std::size_t> labels) {
  const std::size_t d = w.value().size();
  Var z = numgrad::matmul(x, numgrad::reshape(w, {d, 1}));
  z = numgrad::add_scalar(numgrad::reshape(z, {labels.size()}), b);
  return numgrad::bce_with_logits(z, labels);
}

inline LRModel train_lr(const Dataset& ds, const TrainRegime& regime = TrainRegime::lr_default(),
                        TrainingLog* log_out = nullptr) {
  detail::check_trainable(ds);
  Parameter w("lr.w", Tensor({ds.dim()}));
  Parameter b("lr.b", Tensor({1}));
  const std::vector<Parameter*> params{&w, &b};
  TrainingLog log = minibatch_train(ds.size(), regime, params, [&](std::span<const std::size_t> batch) {
    Tape tape;
    Var x = numgrad::gather_rows(tape.frozen(ds.x), batch);
    const auto labels = detail::label_indices(ds, batch);
    Var loss = lr_loss(x, tape.param(w), tape.param(b), labels);
    tape.backward(loss);
    return loss.value()[0];
  });
  if (log_out) *log_out = std::move(log);
  LRModel m{w.value, b.value[0]};
  m.w.require_finite("trained LR weights");
  if (!std::isfinite(m.b)) throw NumericError("trained LR bias is not finite");
  return m;
}

// ---------------------------------------------------------------------------
// Two-layer MLP: p = softmax(W2 relu(W1 e + b1) + b2)

struct MLPModel {
  Tensor w1;  // [Hh × D]
  Tensor b1;  // [Hh]
  Tensor w2;  // [2 × Hh]
  Tensor b2;  // [2]

  /// Glorot-uniform weights, zero biases. The hidden width defaults to the
  /// input dimension.
  static MLPModel init(std::size_t d, std::mt19937_64& rng, std::optional<std::size_t> hidden = {}) {
    const std::size_t hh = hidden.value_or(d);
    if (d == 0 || hh == 0) throw DimensionError("MLP dimensions must be positive");
    const double l1 = std::sqrt(6.0 / static_cast<double>(d + hh));
    const double l2 = std::sqrt(6.0 / static_cast<double>(hh + 2));
    MLPModel m;
    m.w1 = Tensor::uniform({hh, d}, -l1, l1, rng);
    m.b1 = Tensor({hh});
    m.w2 = Tensor::uniform({2, hh}, -l2, l2, rng);
    m.b2 = Tensor({2});
    return m;
  }

  std::size_t dim() const { return w1.cols(); }
  std::size_t hidden() const { return w1.rows(); }

  void validate() const {
    if (w1.rank() != 2 || b1.shape() != numgrad::Shape{w1.rows()} || w2.rank() != 2 ||
        w2.rows() != 2 || w2.cols() != w1.rows() || b2.shape() != numgrad::Shape{2}) {
      throw DimensionError("inconsistent MLP parameter shapes");
    }
  }
};

/// Output probabilities (index 0 = F, 1 = T) for one feature vector.
inline Tensor mlp_forward(const MLPModel& m, const Tensor& e) {
  m.validate();
  detail::check_input(e, m.dim());
  const std::size_t hh = m.hidden(), d = m.dim();
  std::vector<double> h(hh);
  for (std::size_t j = 0; j < hh; ++j) {
    double s = m.b1[j];
    const auto row = m.w1.row(j);
    for (std::size_t i = 0; i < d; ++i) s += row[i] * e[i];
    h[j] = numgrad::relu(s);
  }
  double z[2];
  for (std::size_t c = 0; c < 2; ++c) {
    double s = m.b2[c];
    for (std::size_t j = 0; j < hh; ++j) s += m.w2.at(c, j) * h[j];
    z[c] = s;
  }
  return numgrad::softmax(Tensor::vector({z[0], z[1]}));
}

inline Label mlp_predict(const MLPModel& m, const Tensor& e) {
  const Tensor p = mlp_forward(m, e);
  return p[1] > p[0] ? Label::T : Label::F;
}

struct MLPVars {
  Var w1, b1, w2, b2;
};

inline Var mlp_logits(Var x, const MLPVars& v) {
  return numgrad::linear(numgrad::relu(numgrad::linear(x, v.w1, v.b1)), v.w2, v.b2);
}

/// Mean cross-entropy of the MLP over the rows of `x`.
inline Var mlp_loss(Var x, const MLPVars& v, std::span<const std::size_t> golds) {
  return numgrad::cross_entropy_rows(mlp_logits(x, v), golds);
}

inline MLPModel train_mlp(const Dataset& ds, const TrainRegime& regime = TrainRegime::mlp_default(),
                          std::optional<std::size_t> hidden = {}, TrainingLog* log_out = nullptr) {
  detail::check_trainable(ds);
  std::mt19937_64 init_rng(regime.seed ^ 0x9e3779b97f4a7c15ULL);
  MLPModel init = MLPModel::init(ds.dim(), init_rng, hidden);
  Parameter w1("mlp.w1", init.w1), b1("mlp.b1", init.b1), w2("mlp.w2", init.w2),
      b2("mlp.b2", init.b2);
  const std::vector<Parameter*> params{&w1, &b1, &w2, &b2};
  TrainingLog log = minibatch_train(ds.size(), regime, params, [&](std::span<const std::size_t> batch) {
    Tape tape;
    Var x = numgrad::gather_rows(tape.frozen(ds.x), batch);
    const auto golds = detail::label_indices(ds, batch);
    Var loss = mlp_loss(x, {tape.param(w1), tape.param(b1), tape.param(w2), tape.param(b2)}, golds);
    tape.backward(loss);
    return loss.value()[0];
  });
  if (log_out) *log_out = std::move(log);
  MLPModel m{w1.value, b1.value, w2.value, b2.value};
  for (const Tensor* t : {&m.w1, &m.b1, &m.w2, &m.b2}) t->require_finite("trained MLP parameters");
  return m;
}

// ---------------------------------------------------------------------------
// A trained classifier of either kind.

enum class ClassifierKind { lr, mlp };

inline std::string to_string(ClassifierKind k) { return k == ClassifierKind::lr ? "lr" : "mlp"; }

inline ClassifierKind parse_classifier_kind(const std::string& s) {
  if (s == "lr") return ClassifierKind::lr;
  if (s == "mlp") return ClassifierKind::mlp;
  throw ConfigError("unknown classifier '" + s + "' (expected lr or mlp)");
}

struct Classifier {
  ClassifierKind kind = ClassifierKind::lr;
  LRModel lr;
  MLPModel mlp;

  Label predict(const Tensor& e) const {
    return kind == ClassifierKind::lr ? lr.predict(e) : mlp_predict(mlp, e);
  }

  std::vector<Label> predict_all(const Tensor& x) const {
    std::vector<Label> out;
    out.reserve(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const auto row = x.row(i);
      out.push_back(predict(Tensor::vector({row.begin(), row.end()})));
    }
    return out;
  }
};

inline double training_accuracy(const Classifier& c, const Dataset& ds) {
  const auto pred = c.predict_all(ds.x);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == ds.y[i];
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

inline std::vector<spanhead::NamedTensor> to_named(const Classifier& c) {
  if (c.kind == ClassifierKind::lr) return {{"lr.w", c.lr.w}, {"lr.b", Tensor::scalar(c.lr.b)}};
  return {{"mlp.w1", c.mlp.w1}, {"mlp.b1", c.mlp.b1}, {"mlp.w2", c.mlp.w2}, {"mlp.b2", c.mlp.b2}};
}

inline Classifier from_named(std::span<const spanhead::NamedTensor> entries) {
  std::map<std::string, Tensor> by_name;
  for (const auto& e : entries) by_name[e.name] = e.value;
  const auto get = [&](const std::string& name) -> const Tensor& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("classifier checkpoint lacks '" + name + "'");
    return it->second;
  };
  Classifier c;
  if (by_name.contains("lr.w")) {
    c.kind = ClassifierKind::lr;
    c.lr.w = get("lr.w");
    const Tensor& b = get("lr.b");
    if (c.lr.w.rank() != 1 || b.size() != 1) throw FormatError("malformed LR checkpoint");
    c.lr.b = b[0];
  } else {
    c.kind = ClassifierKind::mlp;
    c.mlp = {get("mlp.w1"), get("mlp.b1"), get("mlp.w2"), get("mlp.b2")};
    try {
      c.mlp.validate();
    } catch (const DimensionError& e) {
      throw FormatError(std::string("malformed MLP checkpoint: ") + e.what());
    }
  }
  return c;
}

inline void save_classifier(const std::filesystem::path& path, const Classifier& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  spanhead::write_checkpoint(out, std::span<const spanhead::NamedTensor>(to_named(c)));
}

inline Classifier load_classifier(const std::filesystem::path& path) {
  const auto entries = spanhead::load_checkpoint(path);
  return from_named(entries);
}

}  // namespace wic::classifiers
