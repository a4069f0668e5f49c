#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "wic/harness/config.hpp"
#include "wic/harness/evaluation.hpp"
#include "wic/harness/experiment.hpp"
#include "wic/synthetic.hpp"

namespace fs = std::filesystem;
using namespace wic;
using namespace wic::harness;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3 };

struct Overrides {
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<std::size_t> max_iters;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<std::string> pooling;
  std::optional<std::size_t> dev_subset;
  std::optional<std::string> system;
};

void add_config_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "experiment JSON")->required();
  cmd->add_option("--seed", o.seed, "global seed");
  cmd->add_option("--output-dir", o.output_dir, "output directory");
  cmd->add_option("--max-iters", o.max_iters, "training epochs (or steps)");
  cmd->add_option("--batch-size", o.batch_size, "mini-batch size");
  cmd->add_option("--learning-rate", o.learning_rate, "optimizer learning rate");
  cmd->add_option("--pooling", o.pooling, "sub-token pooling: average or sum");
  cmd->add_option("--dev-subset", o.dev_subset, "use the first N dev pairs");
  cmd->add_option("--system", o.system, "system label in results");
}

ExperimentConfig load_with_overrides(const Overrides& o) {
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.max_iters) cfg.regime.max_iters = *o.max_iters;
  if (o.batch_size) cfg.regime.batch_size = *o.batch_size;
  if (o.learning_rate) cfg.regime.optimizer.learning_rate = *o.learning_rate;
  if (o.pooling) cfg.pooling = subword::parse_pooling(*o.pooling);
  if (o.dev_subset) cfg.dev_subset = *o.dev_subset;
  if (o.system) cfg.system = *o.system;
  cfg.validate();
  return cfg;
}

void print_results(const std::vector<ResultRow>& rows) {
  if (rows.empty()) {
    std::cout << "no labelled evaluation pairs\n";
    return;
  }
  ResultGrid grid;
  grid.add(rows);
  std::cout << emit_report(grid).text;
}

int run_train(const Overrides& o, bool finetune) {
  const ExperimentConfig cfg = load_with_overrides(o);
  if (finetune != (cfg.strategy == Strategy::finetune)) {
    throw ConfigError("strategy '" + to_string(cfg.strategy) + "' does not belong to " +
                      (finetune ? "train-finetune" : "train-feature"));
  }
  const RunOutcome out = run_experiment(cfg, &std::cerr);
  print_results(out.results);
  std::cerr << "wrote " << cfg.output_dir.string() << '\n';
  return kOk;
}

int run_extract(const Overrides& o, const std::optional<std::string>& out_dir) {
  const ExperimentConfig cfg = load_with_overrides(o);
  const fs::path dir = out_dir ? fs::path(*out_dir) : cfg.output_dir / "features";
  for (const fs::path& p : export_features(cfg, dir, &std::cerr)) std::cout << p.string() << '\n';
  return kOk;
}

int run_evaluate(const Overrides& o, const std::optional<std::string>& checkpoint) {
  const ExperimentConfig cfg = load_with_overrides(o);
  const fs::path ckpt =
      checkpoint ? fs::path(*checkpoint)
                 : cfg.output_dir / (cfg.strategy == Strategy::finetune ? kFineTuneCheckpoint
                                                                         : kClassifierCheckpoint);
  const RunOutcome out = evaluate_saved(cfg, ckpt, &std::cerr);
  print_results(out.results);
  return kOk;
}

int run_report(const std::vector<std::string>& inputs, const std::optional<std::string>& csv) {
  ResultGrid grid;
  for (const std::string& path : inputs) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    grid.add(read_results(in, path));
  }
  const Report r = emit_report(grid);
  std::cout << r.text;
  if (csv) {
    std::ofstream out(*csv, std::ios::binary);
    if (!out) throw DataError("cannot write " + *csv);
    out << r.csv;
  }
  return kOk;
}

struct SynthArgs {
  std::string out_dir;
  std::size_t pairs = 200;
  std::uint64_t seed = 0;
  std::string prefix = "synth";
  std::string lang_pair = "en-en";
};

int run_synth(const SynthArgs& a) {
  synthetic::Options opt;
  opt.pairs = a.pairs;
  opt.id_prefix = a.prefix;
  opt.lang_pair = corpus::LangPair::parse(a.lang_pair);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  const auto pairs = synthetic::generate(a.seed, opt);
  const std::string stem = a.prefix + "." + opt.lang_pair.str();
  corpus::write_pairs(pairs, dir / (stem + ".data.json"), dir / (stem + ".gold.json"));
  synthetic::vocabulary().save(dir / "vocab.txt");
  std::cout << (dir / (stem + ".data.json")).string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Word-in-context training and evaluation"};
  app.require_subcommand(1);

  Overrides ft, feat, ext, ev;
  std::optional<std::string> ext_out, ev_ckpt, report_csv;
  std::vector<std::string> report_inputs;
  SynthArgs synth;

  auto* c_ft = app.add_subcommand("train-finetune", "fine-tune the toy encoder with a span head");
  add_config_options(c_ft, ft);
  auto* c_feat = app.add_subcommand("train-feature", "train LR or MLP on frozen features");
  add_config_options(c_feat, feat);
  auto* c_ext = app.add_subcommand("extract-features", "write feature caches for every split");
  add_config_options(c_ext, ext);
  c_ext->add_option("--out", ext_out, "directory for the caches");
  auto* c_ev = app.add_subcommand("evaluate", "score eval data with a saved model");
  add_config_options(c_ev, ev);
  c_ev->add_option("--checkpoint", ev_ckpt, "saved model (default: output dir)");
  auto* c_rep = app.add_subcommand("report", "merge results files into one table");
  c_rep->add_option("results", report_inputs, "results.csv files")->required();
  c_rep->add_option("--csv", report_csv, "also write the table as CSV");
  auto* c_syn = app.add_subcommand("synth", "write a synthetic marker corpus and its vocabulary");
  c_syn->add_option("--out", synth.out_dir, "output directory")->required();
  c_syn->add_option("--pairs", synth.pairs, "number of pairs");
  c_syn->add_option("--seed", synth.seed, "generator seed");
  c_syn->add_option("--prefix", synth.prefix, "id prefix (train, dev, test, ...)");
  c_syn->add_option("--lang-pair", synth.lang_pair, "language pair tag");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*c_ft) return run_train(ft, true);
    if (*c_feat) return run_train(feat, false);
    if (*c_ext) return run_extract(ext, ext_out);
    if (*c_ev) return run_evaluate(ev, ev_ckpt);
    if (*c_rep) return run_report(report_inputs, report_csv);
    if (*c_syn) return run_synth(synth);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}
