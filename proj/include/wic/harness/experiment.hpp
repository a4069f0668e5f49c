#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "wic/autograd.hpp"
#include "wic/checkpoint.hpp"
#include "wic/classifiers.hpp"
#include "wic/corpus.hpp"
#include "wic/encoder.hpp"
#include "wic/error.hpp"
#include "wic/features.hpp"
#include "wic/harness/config.hpp"
#include "wic/harness/evaluation.hpp"
#include "wic/spanhead.hpp"
#include "wic/store.hpp"
#include "wic/subword.hpp"
#include "wic/textio.hpp"

namespace wic::harness {

/// Independent stream seeds from the global seed (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum SeedStream : std::uint64_t { encoder_init = 1, head_init, dropout, shuffle, classifier };

inline const corpus::LangPair& training_lang_pair() {
  static const corpus::LangPair en{"en", "en"};
  return en;
}

/// Zero-shot contract: only English-English examples may be trained on.
inline void require_english_training(std::span<const corpus::WicPair> pairs) {
  for (const auto& p : pairs) {
    if (p.lang_pair != training_lang_pair()) {
      throw ValidationError("training example '" + p.id + "' is " + p.lang_pair.str() +
                            "; only en-en pairs may be used for training");
    }
  }
}

inline void require_english_training(std::span<const features::FeatureVector> feats) {
  for (const auto& f : feats) {
    if (f.lang_pair != training_lang_pair()) {
      throw ValidationError("training feature '" + f.pair_id + "' is " + f.lang_pair.str() +
                            "; only en-en pairs may be used for training");
    }
  }
}

inline std::vector<corpus::WicPair> load_data(const DataFiles& files) {
  return corpus::read_pairs(files.data, files.gold);
}

/// The first `n` dev pairs in file order.
inline std::vector<corpus::WicPair> apply_dev_subset(std::vector<corpus::WicPair> pairs,
                                                     std::optional<std::size_t> n) {
  if (!n) return pairs;
  corpus::DatasetSplit split{corpus::SplitName::dev, {}, std::move(pairs), std::nullopt};
  split.set_dev_subset(*n);
  return split.active();
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> dev_accuracy;
};

inline void write_training_log(std::ostream& out, std::span<const EpochRecord> records) {
  out << "epoch,train_loss,dev_accuracy\n";
  for (const EpochRecord& r : records) {
    out << r.epoch << ',' << textio::format_double(r.train_loss) << ','
        << (r.dev_accuracy ? textio::format_double(*r.dev_accuracy) : "") << '\n';
  }
}

struct SkippedPair {
  std::string pair_id;
  std::string reason;
};

// ---------------------------------------------------------------------------
// Fine-tuning

struct FineTuneModel {
  encoder::ToyEncoder encoder;
  spanhead::SpanHead head;

  FineTuneModel(const encoder::EncoderConfig& cfg, std::uint64_t seed)
      : encoder(cfg, derive_seed(seed, encoder_init)), head(make_head(cfg.hidden, seed)) {}

  std::vector<numgrad::Parameter*> parameters() {
    auto ps = encoder.parameters();
    for (auto* p : head.parameters()) ps.push_back(p);
    return ps;
  }

  std::vector<const numgrad::Parameter*> parameters() const {
    auto ps = encoder.parameters();
    for (const auto* p : head.parameters()) ps.push_back(p);
    return ps;
  }

 private:
  static spanhead::SpanHead make_head(std::size_t hidden, std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, head_init));
    return spanhead::SpanHead(hidden, rng);
  }
};

/// A pair tokenized into one joint sequence with both target spans located.
struct PreparedPair {
  const corpus::WicPair* pair = nullptr;
  std::vector<subword::TokenId> ids;
  std::vector<std::size_t> span1;
  std::vector<std::size_t> span2;
};

inline PreparedPair prepare_pair(const subword::Vocabulary& vocab, const corpus::WicPair& pair,
                                 std::size_t max_len) {
  const auto tok1 = subword::tokenize(vocab, pair.sentence1);
  const auto tok2 = subword::tokenize(vocab, pair.sentence2);
  const auto seq = encoder::join_sequences(tok1.content_ids(), tok2.content_ids(), vocab.cls(),
                                           vocab.sep(), max_len);
  return {&pair, seq.ids, seq.remap(1, subword::align_span(tok1, pair.span1)),
          seq.remap(2, subword::align_span(tok2, pair.span2))};
}

inline std::vector<PreparedPair> prepare_pairs(const subword::Vocabulary& vocab,
                                               std::span<const corpus::WicPair> pairs,
                                               std::size_t max_len) {
  std::vector<PreparedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(prepare_pair(vocab, p, max_len));
  return out;
}

inline numgrad::Tensor finetune_logits(const FineTuneModel& m, const PreparedPair& p) {
  numgrad::Tape tape;
  numgrad::Var h = m.encoder.forward_frozen(tape, p.ids);
  return spanhead::forward_pair(h, p.span1, p.span2, spanhead::bind_frozen(tape, m.head)).value();
}

inline std::vector<Prediction> predict_finetune(const FineTuneModel& m,
                                                std::span<const PreparedPair> pairs) {
  std::vector<Prediction> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back({p.pair->id, p.pair->lang_pair, p.pair->gold,
                   spanhead::predict(finetune_logits(m, p))});
  }
  return out;
}

/// Accuracy over predictions that have gold labels; nothing if none do.
inline std::optional<double> labelled_accuracy(std::span<const Prediction> preds) {
  std::vector<Label> pred, gold;
  for (const auto& p : preds) {
    if (!p.gold) continue;
    pred.push_back(p.predicted);
    gold.push_back(*p.gold);
  }
  if (gold.empty()) return std::nullopt;
  return evaluate(pred, gold).value();
}

struct FineTuneResult {
  classifiers::TrainingLog log;
  std::vector<EpochRecord> epochs;
};

/// Trains encoder and span head jointly with the cross-entropy of the two
/// span-head logits. The final-epoch weights are kept.
inline FineTuneResult train_finetune(FineTuneModel& model, const subword::Vocabulary& vocab,
                                     std::span<const corpus::WicPair> train,
                                     std::span<const corpus::WicPair> dev,
                                     classifiers::TrainRegime regime, std::uint64_t seed,
                                     std::ostream* log = nullptr) {
  require_english_training(train);
  const std::size_t max_len = model.encoder.config().max_len;
  const auto prepared = prepare_pairs(vocab, train, max_len);
  const auto dev_prepared = prepare_pairs(vocab, dev, max_len);
  for (const auto& p : prepared) {
    if (!p.pair->gold) throw LabelError("training pair '" + p.pair->id + "' has no gold label");
  }

  std::mt19937_64 dropout_rng(derive_seed(seed, dropout));
  regime.seed = derive_seed(seed, shuffle);
  const auto params = model.parameters();

  FineTuneResult result;
  const auto batch_fn = [&](std::span<const std::size_t> batch) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (std::size_t i : batch) {
      const PreparedPair& p = prepared[i];
      numgrad::Tape tape;
      numgrad::Var h = model.encoder.forward(tape, p.ids, encoder::Mode::train, &dropout_rng);
      numgrad::Var logits =
          spanhead::forward_pair(h, p.span1, p.span2, spanhead::bind(tape, model.head));
      numgrad::Var loss = numgrad::cross_entropy(logits, label_index(*p.pair->gold));
      tape.backward(numgrad::scale(loss, inv));
      total += loss.value()[0];
    }
    return total * inv;
  };
  const auto on_epoch = [&](std::size_t epoch, double loss) {
    EpochRecord r{epoch, loss, std::nullopt};
    if (!dev_prepared.empty()) r.dev_accuracy = labelled_accuracy(predict_finetune(model, dev_prepared));
    if (log) {
      *log << "epoch " << epoch << " train_loss " << textio::format_double(loss);
      if (r.dev_accuracy) *log << " dev_accuracy " << textio::format_double(*r.dev_accuracy);
      *log << '\n';
    }
    result.epochs.push_back(r);
  };
  result.log = classifiers::minibatch_train(prepared.size(), regime, params, batch_fn, on_epoch);
  return result;
}

// ---------------------------------------------------------------------------
// Frozen-feature experiments

struct FeatureSettings {
  Strategy strategy = Strategy::feature_mlp;
  subword::PoolingMode pooling = subword::PoolingMode::average;
  features::DependentCombine combine = features::DependentCombine::average;
  bool joint = false;
};

/// Everything feature extraction reads. Nothing here is modified.
struct FeatureResources {
  const features::HiddenStateSource* source = nullptr;
  const encoder::ToyEncoder* toy = nullptr;  // required for joint features
  const subword::Vocabulary* vocab = nullptr;
  const corpus::AnnotationMap* annotations = nullptr;
};

struct ExtractedFeatures {
  std::vector<features::FeatureVector> features;
  std::vector<SkippedPair> skipped;
};

/// Builds one feature vector per pair. In syntax mode, pairs involving
/// Arabic and pairs lacking annotations are skipped with a warning.
inline ExtractedFeatures extract_features(const FeatureResources& res, const FeatureSettings& s,
                                          std::span<const corpus::WicPair> pairs,
                                          std::ostream* log = nullptr) {
  ExtractedFeatures out;
  const auto skip = [&](const corpus::WicPair& p, std::string reason) {
    if (log) *log << "warning: skipping " << p.id << ": " << reason << '\n';
    out.skipped.push_back({p.id, std::move(reason)});
  };
  for (const auto& p : pairs) {
    if (is_syntax(s.strategy)) {
      if (p.lang_pair.involves("ar")) {
        skip(p, "no dependency parses for Arabic");
        continue;
      }
      if (!res.annotations) throw ConfigError("syntax features need annotations");
      try {
        out.features.push_back(
            features::extract_syntax(*res.source, p, *res.annotations, s.pooling, s.combine));
      } catch (const DataError& e) {
        skip(p, e.what());
      }
    } else if (s.joint) {
      if (!res.toy || !res.vocab) throw ConfigError("joint features need the toy encoder");
      out.features.push_back(features::extract_target_concat_joint(*res.toy, *res.vocab, p, s.pooling));
    } else {
      out.features.push_back(features::extract_target_concat(*res.source, p, s.pooling));
    }
  }
  return out;
}

inline classifiers::Classifier train_classifier(std::span<const features::FeatureVector> train,
                                                classifiers::ClassifierKind kind,
                                                classifiers::TrainRegime regime,
                                                std::optional<std::size_t> mlp_hidden,
                                                classifiers::TrainingLog* log = nullptr) {
  require_english_training(train);
  const auto ds = classifiers::make_dataset(train);
  classifiers::Classifier c;
  c.kind = kind;
  if (kind == classifiers::ClassifierKind::lr) {
    c.lr = classifiers::train_lr(ds, regime, log);
  } else {
    c.mlp = classifiers::train_mlp(ds, regime, mlp_hidden, log);
  }
  return c;
}

inline std::vector<Prediction> predict_features(const classifiers::Classifier& c,
                                                std::span<const features::FeatureVector> feats) {
  std::vector<Prediction> out;
  out.reserve(feats.size());
  for (const auto& f : feats) out.push_back({f.pair_id, f.lang_pair, f.label, c.predict(f.values)});
  return out;
}

// ---------------------------------------------------------------------------
// Config-driven runs

/// Loaded inputs of an experiment.
struct Workspace {
  std::optional<subword::Vocabulary> vocab;
  std::optional<encoder::PrecomputedStore> store;
  corpus::AnnotationMap annotations;
  std::vector<corpus::WicPair> train;
  std::vector<corpus::WicPair> dev;
  std::vector<corpus::WicPair> eval;
};

inline Workspace load_workspace(const ExperimentConfig& cfg) {
  Workspace ws;
  if (cfg.encoder.vocab) ws.vocab = subword::Vocabulary::load(*cfg.encoder.vocab);
  if (cfg.encoder.source == EncoderSource::store) {
    ws.store = encoder::PrecomputedStore::load(*cfg.encoder.store);
  }
  for (const auto& path : cfg.annotations) {
    for (auto& [key, ann] : corpus::load_conllu(path)) {
      if (!ws.annotations.emplace(key, std::move(ann)).second) {
        throw FormatError(path.string() + ": sentence '" + key + "' annotated twice");
      }
    }
  }
  if (cfg.train) ws.train = load_data(*cfg.train);
  if (cfg.dev) ws.dev = apply_dev_subset(load_data(*cfg.dev), cfg.dev_subset);
  for (const auto& e : cfg.eval) {
    auto pairs = load_data(e);
    ws.eval.insert(ws.eval.end(), std::make_move_iterator(pairs.begin()),
                   std::make_move_iterator(pairs.end()));
  }
  return ws;
}

inline encoder::EncoderConfig toy_config(const ExperimentConfig& cfg, const subword::Vocabulary& vocab) {
  encoder::EncoderConfig c = cfg.encoder.toy;
  c.vocab_size = vocab.size();
  c.validate();
  return c;
}

struct RunOutcome {
  std::vector<EpochRecord> epochs;
  std::vector<Prediction> predictions;
  std::vector<ResultRow> results;
  std::vector<SkippedPair> skipped;
  bool early_stopped = false;
};

/// Writes results.csv, predictions.tsv, training_log.csv and skipped.tsv.
inline void write_outputs(const fs::path& dir, const RunOutcome& out) {
  fs::create_directories(dir);
  const auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw DataError("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("results.csv");
    write_results(f, out.results);
  }
  {
    auto f = open("predictions.tsv");
    write_predictions(f, out.predictions);
  }
  if (!out.epochs.empty()) {
    auto f = open("training_log.csv");
    write_training_log(f, out.epochs);
  }
  {
    auto f = open("skipped.tsv");
    f << "pair_id\treason\n";
    for (const auto& s : out.skipped) f << s.pair_id << '\t' << s.reason << '\n';
  }
}

inline constexpr const char* kFineTuneCheckpoint = "finetune.ckpt";
inline constexpr const char* kClassifierCheckpoint = "classifier.ckpt";

inline void require_vocab(const Workspace& ws) {
  if (!ws.vocab) throw ConfigError("this run needs a vocabulary");
}

inline RunOutcome run_finetune(const ExperimentConfig& cfg, const Workspace& ws,
                               std::ostream* log = nullptr) {
  if (cfg.strategy != Strategy::finetune) throw ConfigError("config strategy is not finetune");
  if (ws.train.empty()) throw ConfigError("fine-tuning needs training data");
  require_vocab(ws);
  FineTuneModel model(toy_config(cfg, *ws.vocab), cfg.seed);
  if (cfg.encoder.checkpoint) {
    const auto entries = spanhead::load_checkpoint(*cfg.encoder.checkpoint);
    spanhead::assign_checkpoint(model.encoder.parameters(), entries);
  }
  const auto result = train_finetune(model, *ws.vocab, ws.train, ws.dev, cfg.regime, cfg.seed, log);

  RunOutcome out;
  out.epochs = result.epochs;
  out.early_stopped = result.log.early_stopped;
  const auto eval = prepare_pairs(*ws.vocab, ws.eval, model.encoder.config().max_len);
  out.predictions = predict_finetune(model, eval);
  out.results = summarize(cfg.system, out.predictions);
  fs::create_directories(cfg.output_dir);
  spanhead::save_checkpoint(cfg.output_dir / kFineTuneCheckpoint, model.parameters());
  write_outputs(cfg.output_dir, out);
  return out;
}

/// Frozen hidden-state source plus the toy encoder behind it, if any.
struct SourceHandle {
  std::unique_ptr<encoder::ToyEncoder> toy;
  std::unique_ptr<features::HiddenStateSource> source;
};

inline SourceHandle open_source(const ExperimentConfig& cfg, const Workspace& ws) {
  SourceHandle h;
  if (cfg.encoder.source == EncoderSource::store) {
    h.source = std::make_unique<features::StoreSource>(*ws.store, ws.vocab ? &*ws.vocab : nullptr);
    return h;
  }
  require_vocab(ws);
  h.toy = std::make_unique<encoder::ToyEncoder>(toy_config(cfg, *ws.vocab),
                                                derive_seed(cfg.seed, encoder_init));
  if (cfg.encoder.checkpoint) {
    spanhead::assign_checkpoint(h.toy->parameters(), spanhead::load_checkpoint(*cfg.encoder.checkpoint));
  }
  h.source = std::make_unique<features::ToyEncoderSource>(*h.toy, *ws.vocab);
  return h;
}

inline FeatureSettings feature_settings(const ExperimentConfig& cfg) {
  return {cfg.strategy, cfg.pooling, cfg.dependent_combine, cfg.joint_features};
}

inline FeatureResources feature_resources(const SourceHandle& h, const Workspace& ws) {
  return {h.source.get(), h.toy.get(), ws.vocab ? &*ws.vocab : nullptr, &ws.annotations};
}

inline RunOutcome run_feature_experiment(const ExperimentConfig& cfg, const Workspace& ws,
                                         std::ostream* log = nullptr) {
  if (cfg.strategy == Strategy::finetune) throw ConfigError("config strategy is finetune");
  if (ws.train.empty()) throw ConfigError("feature experiments need training data");
  const SourceHandle handle = open_source(cfg, ws);
  const FeatureResources res = feature_resources(handle, ws);
  const FeatureSettings settings = feature_settings(cfg);

  RunOutcome out;
  auto train = extract_features(res, settings, ws.train, log);
  out.skipped = train.skipped;
  classifiers::TrainRegime regime = cfg.regime;
  regime.seed = derive_seed(cfg.seed, classifier);
  classifiers::TrainingLog tlog;
  const auto model = train_classifier(train.features, classifier_of(cfg.strategy), regime,
                                      cfg.mlp_hidden, &tlog);
  for (std::size_t e = 0; e < tlog.epoch_loss.size(); ++e) {
    out.epochs.push_back({e + 1, tlog.epoch_loss[e], std::nullopt});
  }
  out.early_stopped = tlog.early_stopped;
  if (log) {
    *log << "trained " << classifiers::to_string(classifier_of(cfg.strategy)) << " on "
         << train.features.size() << " pairs for " << tlog.epoch_loss.size() << " epochs\n";
  }

  auto eval = extract_features(res, settings, ws.eval, log);
  out.skipped.insert(out.skipped.end(), eval.skipped.begin(), eval.skipped.end());
  out.predictions = predict_features(model, eval.features);
  out.results = summarize(cfg.system, out.predictions);
  fs::create_directories(cfg.output_dir);
  classifiers::save_classifier(cfg.output_dir / kClassifierCheckpoint, model);
  write_outputs(cfg.output_dir, out);
  return out;
}

inline RunOutcome run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  const Workspace ws = load_workspace(cfg);
  return cfg.strategy == Strategy::finetune ? run_finetune(cfg, ws, log)
                                            : run_feature_experiment(cfg, ws, log);
}

/// Re-scores the eval data with a model saved by an earlier run.
inline RunOutcome evaluate_saved(const ExperimentConfig& cfg, const fs::path& checkpoint,
                                 std::ostream* log = nullptr) {
  const Workspace ws = load_workspace(cfg);
  RunOutcome out;
  if (cfg.strategy == Strategy::finetune) {
    require_vocab(ws);
    FineTuneModel model(toy_config(cfg, *ws.vocab), cfg.seed);
    spanhead::assign_checkpoint(model.parameters(), spanhead::load_checkpoint(checkpoint));
    out.predictions = predict_finetune(model, prepare_pairs(*ws.vocab, ws.eval,
                                                            model.encoder.config().max_len));
  } else {
    const auto model = classifiers::load_classifier(checkpoint);
    const SourceHandle handle = open_source(cfg, ws);
    auto eval = extract_features(feature_resources(handle, ws), feature_settings(cfg), ws.eval, log);
    out.skipped = std::move(eval.skipped);
    out.predictions = predict_features(model, eval.features);
  }
  out.results = summarize(cfg.system, out.predictions);
  write_outputs(cfg.output_dir, out);
  return out;
}

/// Writes one feature cache per split into `dir`.
inline std::vector<fs::path> export_features(const ExperimentConfig& cfg, const fs::path& dir,
                                             std::ostream* log = nullptr) {
  if (cfg.strategy == Strategy::finetune) {
    throw ConfigError("feature export needs a feature strategy (it picks the variant)");
  }
  const Workspace ws = load_workspace(cfg);
  const SourceHandle handle = open_source(cfg, ws);
  const FeatureResources res = feature_resources(handle, ws);
  fs::create_directories(dir);
  std::vector<fs::path> written;
  const std::pair<const char*, const std::vector<corpus::WicPair>*> splits[] = {
      {"train", &ws.train}, {"dev", &ws.dev}, {"eval", &ws.eval}};
  for (const auto& [name, pairs] : splits) {
    if (pairs->empty()) continue;
    const auto ext = extract_features(res, feature_settings(cfg), *pairs, log);
    if (ext.features.empty()) continue;
    const fs::path path = dir / (std::string(name) + ".features.tsv");
    features::save_feature_cache(path, ext.features);
    written.push_back(path);
  }
  return written;
}

}  // namespace wic::harness
