#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "wic/classifiers.hpp"
#include "wic/encoder.hpp"
#include "wic/error.hpp"
#include "wic/features.hpp"
#include "wic/harness/evaluation.hpp"
#include "wic/subword.hpp"

namespace wic::harness {

namespace fs = std::filesystem;
using nlohmann::json;

enum class Strategy { finetune, feature_lr, feature_mlp, feature_syntax_mlp, feature_syntax_lr };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::finetune: return "finetune";
    case Strategy::feature_lr: return "feature_lr";
    case Strategy::feature_mlp: return "feature_mlp";
    case Strategy::feature_syntax_mlp: return "feature_syntax_mlp";
    case Strategy::feature_syntax_lr: return "feature_syntax_lr";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  for (Strategy x : {Strategy::finetune, Strategy::feature_lr, Strategy::feature_mlp,
                     Strategy::feature_syntax_mlp, Strategy::feature_syntax_lr}) {
    if (to_string(x) == s) return x;
  }
  throw ConfigError("unknown strategy '" + s + "'");
}

inline bool is_syntax(Strategy s) {
  return s == Strategy::feature_syntax_mlp || s == Strategy::feature_syntax_lr;
}

inline classifiers::ClassifierKind classifier_of(Strategy s) {
  return s == Strategy::feature_lr || s == Strategy::feature_syntax_lr
             ? classifiers::ClassifierKind::lr
             : classifiers::ClassifierKind::mlp;
}

inline classifiers::TrainRegime default_regime(Strategy s) {
  if (s == Strategy::finetune) return classifiers::TrainRegime::finetune_default();
  return classifier_of(s) == classifiers::ClassifierKind::lr
             ? classifiers::TrainRegime::lr_default()
             : classifiers::TrainRegime::mlp_default();
}

enum class EncoderSource { toy, store };

struct EncoderSpec {
  EncoderSource source = EncoderSource::toy;
  encoder::EncoderConfig toy;  // vocab_size is filled from the vocabulary
  std::optional<fs::path> vocab;
  std::optional<fs::path> store;
  std::optional<fs::path> checkpoint;  // toy weights to start from
};

struct DataFiles {
  fs::path data;
  std::optional<fs::path> gold;
};

struct ExperimentConfig {
  std::string system = "system";
  Strategy strategy = Strategy::finetune;
  EncoderSpec encoder;
  subword::PoolingMode pooling = subword::PoolingMode::average;
  features::DependentCombine dependent_combine = features::DependentCombine::average;
  classifiers::TrainRegime regime = classifiers::TrainRegime::finetune_default();
  std::optional<std::size_t> mlp_hidden;
  bool joint_features = false;
  std::optional<DataFiles> train;
  std::optional<DataFiles> dev;
  std::vector<DataFiles> eval;
  std::vector<fs::path> annotations;
  std::optional<std::size_t> dev_subset;
  std::uint64_t seed = 0;
  fs::path output_dir = "out";

  void validate() const {
    check_system_name(system);
    regime.validate();
    if (encoder.source == EncoderSource::store) {
      if (strategy == Strategy::finetune) {
        throw ConfigError("a precomputed store is frozen and cannot be fine-tuned");
      }
      if (!encoder.store) throw ConfigError("store encoder needs a store path");
    } else if (!encoder.vocab) {
      throw ConfigError("toy encoder needs a vocabulary path");
    }
    if (is_syntax(strategy) && annotations.empty()) {
      throw ConfigError("syntax strategies need CoNLL-U annotation files");
    }
    if (is_syntax(strategy) && joint_features) {
      throw ConfigError("syntax features are built from separately encoded sentences");
    }
    if (joint_features && encoder.source == EncoderSource::store) {
      throw ConfigError("joint features need the toy encoder");
    }
    if (mlp_hidden && *mlp_hidden == 0) throw ConfigError("mlp_hidden must be positive");
    if (dev_subset && !dev) throw ConfigError("dev_subset given without a dev split");
  }
};

namespace detail {

template <class T>
std::optional<T> opt_field(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

inline std::optional<fs::path> opt_path(const json& j, const char* key, const fs::path& base) {
  const auto s = opt_field<std::string>(j, key);
  if (!s) return std::nullopt;
  return resolve(base, *s);
}

inline DataFiles data_files(const json& j, const fs::path& base, const std::string& what) {
  if (j.is_string()) return {resolve(base, j.get<std::string>()), std::nullopt};
  if (!j.is_object()) throw ConfigError(what + " must be a path or an object");
  const auto data = opt_path(j, "data", base);
  if (!data) throw ConfigError(what + " lacks a 'data' path");
  return {*data, opt_path(j, "gold", base)};
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> known,
                           const std::string& what) {
  for (const auto& [k, v] : j.items()) {
    if (std::ranges::find_if(known, [&](const char* x) { return k == x; }) == known.end()) {
      throw ConfigError("unknown " + what + " field '" + k + "'");
    }
  }
}

inline void apply_regime(const json& j, classifiers::TrainRegime& r) {
  reject_unknown(j,
                 {"max_iters", "batch_size", "optimizer", "learning_rate", "beta1", "beta2",
                  "weight_decay", "unit", "early_stop"},
                 "regime");
  if (auto v = opt_field<std::size_t>(j, "max_iters")) r.max_iters = *v;
  if (auto v = opt_field<std::size_t>(j, "batch_size")) r.batch_size = *v;
  if (auto v = opt_field<std::string>(j, "optimizer")) {
    const double lr = r.optimizer.learning_rate;
    const auto kind = numgrad::parse_optimizer_kind(*v);
    if (kind != r.optimizer.kind) {
      r.optimizer = kind == numgrad::OptimizerKind::sgd    ? numgrad::OptimizerConfig::sgd(lr)
                    : kind == numgrad::OptimizerKind::adam ? numgrad::OptimizerConfig::adam(lr)
                                                           : numgrad::OptimizerConfig::adamw(lr);
    }
  }
  if (auto v = opt_field<double>(j, "learning_rate")) r.optimizer.learning_rate = *v;
  if (auto v = opt_field<double>(j, "beta1")) r.optimizer.beta1 = *v;
  if (auto v = opt_field<double>(j, "beta2")) r.optimizer.beta2 = *v;
  if (auto v = opt_field<double>(j, "weight_decay")) r.optimizer.weight_decay = *v;
  if (auto v = opt_field<std::string>(j, "unit")) r.unit = classifiers::parse_iteration_unit(*v);
  if (j.contains("early_stop")) {
    const json& e = j.at("early_stop");
    if (e.is_null() || (e.is_boolean() && !e.get<bool>())) {
      r.early_stop.reset();
    } else if (e.is_boolean()) {
      r.early_stop = classifiers::EarlyStop{};
    } else if (e.is_object()) {
      classifiers::EarlyStop es;
      if (auto v = opt_field<double>(e, "min_improvement")) es.min_improvement = *v;
      if (auto v = opt_field<std::size_t>(e, "window")) es.window = *v;
      r.early_stop = es;
    } else {
      throw ConfigError("early_stop must be null, a boolean or an object");
    }
  }
}

inline void apply_encoder(const json& j, const fs::path& base, EncoderSpec& e) {
  reject_unknown(j,
                 {"source", "vocab", "store", "checkpoint", "layers", "heads", "hidden", "ffn",
                  "max_len", "dropout", "init_std"},
                 "encoder");
  if (auto v = opt_field<std::string>(j, "source")) {
    if (*v == "toy") {
      e.source = EncoderSource::toy;
    } else if (*v == "store") {
      e.source = EncoderSource::store;
    } else {
      throw ConfigError("encoder source must be 'toy' or 'store', got '" + *v + "'");
    }
  }
  e.vocab = opt_path(j, "vocab", base);
  e.store = opt_path(j, "store", base);
  e.checkpoint = opt_path(j, "checkpoint", base);
  if (auto v = opt_field<std::size_t>(j, "layers")) e.toy.layers = *v;
  if (auto v = opt_field<std::size_t>(j, "heads")) e.toy.heads = *v;
  if (auto v = opt_field<std::size_t>(j, "hidden")) e.toy.hidden = *v;
  if (auto v = opt_field<std::size_t>(j, "ffn")) e.toy.ffn = *v;
  if (auto v = opt_field<std::size_t>(j, "max_len")) e.toy.max_len = *v;
  if (auto v = opt_field<double>(j, "dropout")) e.toy.dropout = *v;
  if (auto v = opt_field<double>(j, "init_std")) e.toy.init_std = *v;
}

}  // namespace detail

/// Reads a JSON experiment description; relative paths resolve against
/// `base` (normally the directory holding the config file).
inline ExperimentConfig parse_config(const json& j, const fs::path& base) {
  using namespace detail;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j,
                 {"system", "strategy", "encoder", "pooling", "dependent_combine", "regime",
                  "mlp_hidden", "joint_features", "train", "dev", "eval", "annotations",
                  "dev_subset", "seed", "output_dir"},
                 "config");
  ExperimentConfig c;
  const auto strategy = opt_field<std::string>(j, "strategy");
  if (!strategy) throw ConfigError("config needs a 'strategy'");
  c.strategy = parse_strategy(*strategy);
  c.regime = default_regime(c.strategy);
  c.system = opt_field<std::string>(j, "system").value_or(to_string(c.strategy));
  if (j.contains("encoder")) apply_encoder(j.at("encoder"), base, c.encoder);
  if (auto v = opt_field<std::string>(j, "pooling")) {
    try {
      c.pooling = subword::parse_pooling(*v);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  if (auto v = opt_field<std::string>(j, "dependent_combine")) {
    c.dependent_combine = features::parse_combine(*v);
  }
  if (j.contains("regime") && !j.at("regime").is_null()) apply_regime(j.at("regime"), c.regime);
  c.mlp_hidden = opt_field<std::size_t>(j, "mlp_hidden");
  c.joint_features = opt_field<bool>(j, "joint_features").value_or(false);
  if (j.contains("train") && !j.at("train").is_null()) c.train = data_files(j.at("train"), base, "train");
  if (j.contains("dev") && !j.at("dev").is_null()) c.dev = data_files(j.at("dev"), base, "dev");
  if (j.contains("eval")) {
    if (!j.at("eval").is_array()) throw ConfigError("'eval' must be a list");
    for (const json& e : j.at("eval")) c.eval.push_back(data_files(e, base, "eval entry"));
  }
  if (j.contains("annotations")) {
    const json& a = j.at("annotations");
    if (a.is_string()) {
      c.annotations.push_back(resolve(base, a.get<std::string>()));
    } else if (a.is_array()) {
      for (const json& p : a) {
        if (!p.is_string()) throw ConfigError("annotation entries must be paths");
        c.annotations.push_back(resolve(base, p.get<std::string>()));
      }
    } else {
      throw ConfigError("'annotations' must be a path or a list of paths");
    }
  }
  c.dev_subset = opt_field<std::size_t>(j, "dev_subset");
  c.seed = opt_field<std::uint64_t>(j, "seed").value_or(0);
  if (auto v = opt_path(j, "output_dir", base)) c.output_dir = *v;
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

}  // namespace wic::harness
