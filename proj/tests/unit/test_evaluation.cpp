#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "wic/harness/evaluation.hpp"

using namespace wic;
using namespace wic::harness;

namespace {

Prediction pred(const std::string& id, const std::string& lp, std::optional<Label> gold, Label p) {
  return {id, corpus::LangPair::parse(lp), gold, p};
}

}  // namespace

TEST(Evaluate, ThreeOfFourIsSeventyFivePercent) {
  const std::vector<Label> p = {Label::T, Label::F, Label::T, Label::T};
  const std::vector<Label> g = {Label::T, Label::F, Label::F, Label::T};
  const Accuracy a = evaluate(p, g);
  EXPECT_EQ(a.correct, 3u);
  EXPECT_EQ(a.total, 4u);
  EXPECT_DOUBLE_EQ(a.value(), 0.75);
  EXPECT_EQ(format_percent(a.value()), "75.0%");
}

TEST(Evaluate, Rejections) {
  const std::vector<Label> one = {Label::T}, two = {Label::T, Label::F}, none;
  EXPECT_THROW(evaluate(one, two), DimensionError);
  EXPECT_THROW(evaluate(none, none), DegenerateDataError);
}

TEST(Evaluate, RandomGuessingIsNearChance) {
  std::mt19937_64 rng(2024);
  std::bernoulli_distribution coin(0.5);
  std::vector<Label> p, g;
  for (int i = 0; i < 1000; ++i) {
    p.push_back(coin(rng) ? Label::T : Label::F);
    g.push_back(i % 2 ? Label::T : Label::F);
  }
  EXPECT_NEAR(evaluate(p, g).value(), 0.5, 0.05);
}

TEST(Evaluate, AccuracyIsPermutationInvariant) {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<Label, Label>> items;
    for (int i = 0; i < 40; ++i)
      items.push_back({coin(rng) ? Label::T : Label::F, coin(rng) ? Label::T : Label::F});
    auto split = [&] {
      std::vector<Label> p, g;
      for (auto [a, b] : items) {
        p.push_back(a);
        g.push_back(b);
      }
      return evaluate(p, g).correct;
    };
    const auto before = split();
    std::shuffle(items.begin(), items.end(), rng);
    EXPECT_EQ(split(), before);
  }
}

TEST(Format, PercentUsesOneDecimal) {
  EXPECT_EQ(format_percent(0.845), "84.5%");
  EXPECT_EQ(format_percent(0.0), "0.0%");
  EXPECT_EQ(format_percent(1.0), "100.0%");
  EXPECT_EQ(format_percent(2.0 / 3.0), "66.7%");
  EXPECT_EQ(format_percent(0.0004), "0.0%");
  EXPECT_EQ(format_percent(0.0005), "0.1%");
  EXPECT_EQ(format_cell(std::nullopt), "--");
}

TEST(Predictions, RoundTrip) {
  const std::vector<Prediction> preds = {pred("a.en-en.0", "en-en", Label::T, Label::F),
                                         pred("a.en-zh.1", "en-zh", std::nullopt, Label::T)};
  std::stringstream buf;
  write_predictions(buf, preds);
  EXPECT_EQ(buf.str().substr(0, buf.str().find('\n')), "pair_id\tlang_pair\tgold\tprediction");
  EXPECT_EQ(read_predictions(buf), preds);
  std::istringstream bad("pair_id\tlang_pair\tgold\tprediction\nx\ten-en\tT\n");
  EXPECT_THROW(read_predictions(bad), FormatError);
  std::istringstream bad_label("x\ten-en\tT\tY\n");
  EXPECT_THROW(read_predictions(bad_label), FormatError);
}

TEST(Summarize, GroupsByPairInReportOrderAndSkipsUnlabelled) {
  const std::vector<Prediction> preds = {
      pred("1", "en-fr", Label::T, Label::T), pred("2", "en-en", Label::T, Label::F),
      pred("3", "en-en", Label::F, Label::F), pred("4", "de-de", Label::F, Label::F),
      pred("5", "en-en", std::nullopt, Label::T), pred("6", "zh-zh", Label::T, Label::T)};
  const auto rows = summarize("sys", preds);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], (ResultRow{"sys", "en-en", 2, 1}));
  EXPECT_EQ(rows[1].lang_pair, "zh-zh");
  EXPECT_EQ(rows[2].lang_pair, "en-fr");
  EXPECT_EQ(rows[3].lang_pair, "de-de");
}

TEST(Results, CsvRoundTripIsExact) {
  const std::vector<ResultRow> rows = {{"mBERT LR", "en-en", 1400, 901}, {"x", "ar-ar", 3, 1}};
  std::stringstream buf;
  write_results(buf, rows);
  EXPECT_EQ(read_results(buf), rows);
}

TEST(Results, InconsistentFilesRejected) {
  std::istringstream wrong_acc("system,lang_pair,n,correct,accuracy\ns,en-en,4,3,0.7\n");
  EXPECT_THROW(read_results(wrong_acc), FormatError);
  std::istringstream bad_header("sys,lp\n");
  EXPECT_THROW(read_results(bad_header), FormatError);
  std::istringstream too_many("system,lang_pair,n,correct,accuracy\ns,en-en,4,5,1.25\n");
  EXPECT_THROW(read_results(too_many), FormatError);
  std::istringstream empty("");
  EXPECT_THROW(read_results(empty), FormatError);
  std::ostringstream out;
  const std::vector<ResultRow> comma = {{"a,b", "en-en", 1, 1}};
  EXPECT_THROW(write_results(out, comma), ConfigError);
}

TEST(Report, MissingCellsRenderAsDashes) {
  ResultGrid grid;
  grid.set("mBERT syntax", "en-en", 0.845);
  grid.set("mBERT syntax", "fr-fr", 0.0);
  grid.set("fine-tune", "ar-ar", 0.5);
  const Report r = emit_report(grid);
  std::istringstream lines(r.csv);
  std::string header, row1, row2;
  std::getline(lines, header);
  std::getline(lines, row1);
  std::getline(lines, row2);
  EXPECT_EQ(header, "system,en-en,zh-zh,fr-fr,ru-ru,ar-ar,en-zh,en-fr,en-ru,en-ar");
  EXPECT_EQ(row1, "mBERT syntax,84.5%,--,0.0%,--,--,--,--,--,--");
  EXPECT_EQ(row2, "fine-tune,--,--,--,--,50.0%,--,--,--,--");
}

TEST(Report, TextTableIsAligned) {
  ResultGrid grid;
  grid.set("a", "en-en", 1.0);
  grid.set("longer name", "en-en", 0.25);
  const Report r = emit_report(grid);
  std::istringstream lines(r.text);
  std::string l;
  std::size_t width = 0;
  while (std::getline(lines, l)) {
    if (width == 0) width = l.size();
    EXPECT_EQ(l.size(), width);
  }
  EXPECT_NE(r.text.find("longer name   25.0%"), std::string::npos);
  EXPECT_NE(r.text.find("a            100.0%"), std::string::npos);
}

TEST(Report, ExtraPairsFollowReportColumns) {
  ResultGrid grid;
  grid.set("s", "de-de", 0.5);
  grid.set("s", "bg-bg", 0.5);
  const auto cols = grid.columns();
  ASSERT_EQ(cols.size(), 11u);
  EXPECT_EQ(cols[9], "bg-bg");
  EXPECT_EQ(cols[10], "de-de");
}

TEST(Report, Rejections) {
  EXPECT_THROW(emit_report(ResultGrid{}), DegenerateDataError);
  ResultGrid grid;
  EXPECT_THROW(grid.set("s", "en-en", 1.5), ValidationError);
  EXPECT_THROW(grid.set("s", "en-en", std::nan("")), ValidationError);
}
