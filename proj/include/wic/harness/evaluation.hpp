#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wic/corpus.hpp"
#include "wic/error.hpp"
#include "wic/textio.hpp"
#include "wic/types.hpp"

namespace wic::harness {

struct Accuracy {
  std::size_t correct = 0;
  std::size_t total = 0;

  double value() const { return static_cast<double>(correct) / static_cast<double>(total); }
};

inline Accuracy evaluate(std::span<const Label> predictions, std::span<const Label> gold) {
  if (predictions.size() != gold.size()) {
    throw DimensionError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(gold.size()) + " gold labels");
  }
  if (gold.empty()) throw DegenerateDataError("evaluate: nothing to score");
  Accuracy a{0, gold.size()};
  for (std::size_t i = 0; i < gold.size(); ++i) a.correct += predictions[i] == gold[i];
  return a;
}

struct Prediction {
  std::string pair_id;
  corpus::LangPair lang_pair;
  std::optional<Label> gold;
  Label predicted = Label::F;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// Predictions file: header, then "pair_id TAB lang_pair TAB gold TAB prediction".
inline void write_predictions(std::ostream& out, std::span<const Prediction> preds) {
  out << "pair_id\tlang_pair\tgold\tprediction\n";
  for (const Prediction& p : preds) {
    out << p.pair_id << '\t' << p.lang_pair.str() << '\t' << gold_string(p.gold) << '\t'
        << label_char(p.predicted) << '\n';
  }
}

inline std::vector<Prediction> read_predictions(std::istream& in,
                                                const std::string& source = "<predictions>") {
  std::vector<Prediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line.starts_with("pair_id"))) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto cols = textio::split(line, '\t');
    if (cols.size() != 4) throw FormatError(where + ": expected 4 tab-separated columns");
    try {
      Prediction p;
      p.pair_id = std::string(cols[0]);
      p.lang_pair = corpus::LangPair::parse(std::string(cols[1]));
      p.gold = parse_gold(std::string(cols[2]));
      p.predicted = parse_label(std::string(cols[3]));
      out.push_back(std::move(p));
    } catch (const LabelError& e) {
      throw FormatError(where + ": " + e.what());
    } catch (const ValidationError& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  return out;
}

/// Column order of the report table.
inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols = {"en-en", "zh-zh", "fr-fr", "ru-ru", "ar-ar",
                                                "en-zh", "en-fr", "en-ru", "en-ar"};
  return cols;
}

/// Sort key placing the report columns first, in report order, then any
/// other pair alphabetically.
inline std::pair<std::size_t, std::string> lang_pair_order(const std::string& lp) {
  const auto& cols = report_columns();
  const auto it = std::ranges::find(cols, lp);
  return {static_cast<std::size_t>(it - cols.begin()), lp};
}

struct ResultRow {
  std::string system;
  std::string lang_pair;
  std::size_t n = 0;
  std::size_t correct = 0;

  double accuracy() const { return static_cast<double>(correct) / static_cast<double>(n); }
  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

/// Per language pair accuracy over predictions with a known gold label.
inline std::vector<ResultRow> summarize(const std::string& system,
                                        std::span<const Prediction> preds) {
  std::map<std::pair<std::size_t, std::string>, ResultRow> by_pair;
  for (const Prediction& p : preds) {
    if (!p.gold) continue;
    const std::string lp = p.lang_pair.str();
    ResultRow& r = by_pair[lang_pair_order(lp)];
    r.system = system;
    r.lang_pair = lp;
    ++r.n;
    r.correct += *p.gold == p.predicted;
  }
  std::vector<ResultRow> out;
  for (auto& [key, row] : by_pair) out.push_back(std::move(row));
  return out;
}

inline void check_system_name(const std::string& s) {
  if (s.empty() || s.find_first_of(",\n\r\"") != std::string::npos) {
    throw ConfigError("system label '" + s + "' must be non-empty and free of commas, quotes and newlines");
  }
}

/// Results CSV: system,lang_pair,n,correct,accuracy.
inline void write_results(std::ostream& out, std::span<const ResultRow> rows) {
  out << "system,lang_pair,n,correct,accuracy\n";
  for (const ResultRow& r : rows) {
    check_system_name(r.system);
    out << r.system << ',' << r.lang_pair << ',' << r.n << ',' << r.correct << ','
        << textio::format_double(r.accuracy()) << '\n';
  }
}

inline std::vector<ResultRow> read_results(std::istream& in, const std::string& source = "<results>") {
  std::vector<ResultRow> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (line_no == 1) {
      if (line != "system,lang_pair,n,correct,accuracy") throw FormatError(where + ": unexpected header");
      continue;
    }
    const auto cols = textio::split(line, ',');
    if (cols.size() != 5) throw FormatError(where + ": expected 5 comma-separated columns");
    ResultRow r{std::string(cols[0]), std::string(cols[1]), textio::parse_size(cols[2], where),
                textio::parse_size(cols[3], where)};
    if (r.n == 0 || r.correct > r.n) throw FormatError(where + ": inconsistent counts");
    if (textio::parse_double(cols[4], where) != r.accuracy()) {
      throw FormatError(where + ": accuracy does not equal correct/n");
    }
    out.push_back(std::move(r));
  }
  if (line_no == 0) throw FormatError(source + ": empty results file");
  return out;
}

/// Accuracy per (system, language pair); systems keep insertion order.
class ResultGrid {
 public:
  void set(const std::string& system, const std::string& lang_pair, double accuracy) {
    if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
      throw ValidationError("accuracy " + textio::format_double(accuracy) + " outside [0, 1]");
    }
    if (std::ranges::find(systems_, system) == systems_.end()) systems_.push_back(system);
    cells_[{system, lang_pair}] = accuracy;
  }

  void add(std::span<const ResultRow> rows) {
    for (const ResultRow& r : rows) set(r.system, r.lang_pair, r.accuracy());
  }

  std::optional<double> get(const std::string& system, const std::string& lang_pair) const {
    const auto it = cells_.find({system, lang_pair});
    if (it == cells_.end()) return std::nullopt;
    return it->second;
  }

  bool empty() const { return cells_.empty(); }
  const std::vector<std::string>& systems() const { return systems_; }

  /// Report columns, plus any extra pairs present in the grid.
  std::vector<std::string> columns() const {
    std::vector<std::string> cols = report_columns();
    std::vector<std::string> extra;
    for (const auto& [key, v] : cells_) {
      if (std::ranges::find(cols, key.second) == cols.end() &&
          std::ranges::find(extra, key.second) == extra.end()) {
        extra.push_back(key.second);
      }
    }
    std::ranges::sort(extra);
    cols.insert(cols.end(), extra.begin(), extra.end());
    return cols;
  }

 private:
  std::vector<std::string> systems_;
  std::map<std::pair<std::string, std::string>, double> cells_;
};

/// One decimal with a percent sign, computed on integer tenths so that
/// 0.845 renders as "84.5%".
inline std::string format_percent(double accuracy) {
  const long long tenths = std::llround(accuracy * 1000.0);
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10) + "%";
}

inline std::string format_cell(std::optional<double> accuracy) {
  return accuracy ? format_percent(*accuracy) : "--";
}

struct Report {
  std::string text;
  std::string csv;
};

inline Report emit_report(const ResultGrid& grid) {
  if (grid.empty()) throw DegenerateDataError("report: no results");
  const auto cols = grid.columns();
  std::vector<std::vector<std::string>> table;
  table.push_back({"system"});
  table.back().insert(table.back().end(), cols.begin(), cols.end());
  for (const std::string& sys : grid.systems()) {
    std::vector<std::string> row{sys};
    for (const std::string& c : cols) row.push_back(format_cell(grid.get(sys, c)));
    table.push_back(std::move(row));
  }

  std::vector<std::size_t> width(table.front().size(), 0);
  for (const auto& row : table)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());

  Report r;
  for (const auto& row : table) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i == 0) {
        line += row[i] + std::string(width[i] - row[i].size(), ' ');
      } else {
        line += "  " + std::string(width[i] - row[i].size(), ' ') + row[i];
      }
      r.csv += (i ? "," : "") + row[i];
    }
    r.text += line + '\n';
    r.csv += '\n';
  }
  return r;
}

}  // namespace wic::harness
