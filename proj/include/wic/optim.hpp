#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wic/error.hpp"
#include "wic/tensor.hpp"

namespace wic::numgrad {

enum class OptimizerKind { sgd, adam, adamw };

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::adamw: return "adamw";
  }
  return "?";
}

inline OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  if (s == "adamw") return OptimizerKind::adamw;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd, adam or adamw)");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  double epsilon = 1e-8;

  static OptimizerConfig sgd(double lr) {
    OptimizerConfig c;
    c.kind = OptimizerKind::sgd;
    c.learning_rate = lr;
    return c;
  }

  static OptimizerConfig adam(double lr) {
    OptimizerConfig c;
    c.kind = OptimizerKind::adam;
    c.learning_rate = lr;
    return c;
  }

  // 0.01 is the library default when no decay is given.
  static OptimizerConfig adamw(double lr, double weight_decay = 0.01) {
    OptimizerConfig c;
    c.kind = OptimizerKind::adamw;
    c.learning_rate = lr;
    c.weight_decay = weight_decay;
    return c;
  }

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in (0,1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in (0,1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  }
};

/// Applies SGD / Adam / AdamW updates. Moment buffers are bound to the
/// position of each parameter in the list passed to step(), so the same list
/// (same order) must be passed every time.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const OptimizerConfig& config() const { return cfg_; }
  long steps() const { return t_; }

  void step(std::span<Parameter* const> params) {
    for (const Parameter* p : params) {
      if (p->grad.shape() != p->value.shape()) {
        throw DimensionError("gradient shape of '" + p->name +
                             "' does not match its value");
      }
      p->grad.require_finite("gradient of '" + p->name + "'");
    }
    if (cfg_.kind == OptimizerKind::sgd) {
      for (Parameter* p : params) {
        auto& v = p->value.values();
        const auto& g = p->grad.values();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= cfg_.learning_rate * g[i];
      }
      ++t_;
      return;
    }
    if (m_.empty()) {
      for (const Parameter* p : params) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
      }
    } else if (m_.size() != params.size()) {
      throw Error("optimizer state was built for a different parameter list");
    }
    ++t_;
    const double lr = cfg_.learning_rate;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const bool decoupled = cfg_.kind == OptimizerKind::adamw && cfg_.weight_decay > 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& val = params[k]->value.values();
      const auto& g = params[k]->grad.values();
      auto& m = m_[k].values();
      auto& v = v_[k].values();
      if (m.size() != val.size()) {
        throw Error("optimizer state was built for a different parameter list");
      }
      for (std::size_t i = 0; i < val.size(); ++i) {
        if (decoupled) val[i] -= lr * cfg_.weight_decay * val[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        val[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
      }
    }
  }

 private:
  OptimizerConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long t_ = 0;
};

}  // namespace wic::numgrad
