#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>
#include <utility>

#include "wic/checkpoint.hpp"
#include "wic/spanhead.hpp"

using namespace wic;
using namespace wic::spanhead;

namespace {

Tensor random_states(std::size_t t, std::size_t h, std::mt19937_64& rng) {
  return Tensor::normal({t, h}, 1.0, rng);
}

std::vector<std::size_t> random_span(std::size_t t, std::mt19937_64& rng) {
  const std::size_t a = rng() % t;
  const std::size_t b = a + 1 + rng() % (t - a);
  std::vector<std::size_t> s;
  for (std::size_t i = a; i < b; ++i) s.push_back(i);
  return s;
}

}  // namespace

class SpanHeadProperty : public ::testing::TestWithParam<int> {};

TEST_P(SpanHeadProperty, WeightsFormADistributionOverTheSpan) {
  std::mt19937_64 rng(GetParam());
  const std::size_t t = 3 + rng() % 8, h = 1 + rng() % 6;
  const SpanHead head(h, rng, 1.0);
  const Tensor states = random_states(t, h, rng);
  const auto span = random_span(t, rng);
  Tensor w;
  const Tensor emb = span_embed(states, span, head, &w);
  ASSERT_EQ(w.size(), span.size());
  double total = 0;
  for (double x : w.values()) {
    EXPECT_GE(x, 0.0);
    total += x;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  for (std::size_t c = 0; c < h; ++c) {
    double lo = 1e300, hi = -1e300;
    for (std::size_t i : span) {
      lo = std::min(lo, states.at(i, c));
      hi = std::max(hi, states.at(i, c));
    }
    EXPECT_GE(emb[c], lo - 1e-12);
    EXPECT_LE(emb[c], hi + 1e-12);
  }
}

TEST_P(SpanHeadProperty, RowsOutsideTheSpanDoNotMatter) {
  std::mt19937_64 rng(GetParam() + 1000);
  const std::size_t t = 4 + rng() % 6, h = 1 + rng() % 6;
  const SpanHead head(h, rng, 1.0);
  Tensor states = random_states(t, h, rng);
  const auto span = random_span(t, rng);
  const Tensor before = span_embed(states, span, head);
  for (std::size_t r = 0; r < t; ++r) {
    if (std::find(span.begin(), span.end(), r) != span.end()) continue;
    for (std::size_t c = 0; c < h; ++c) states.at(r, c) = 1e6 * static_cast<double>(r + c + 1);
  }
  EXPECT_EQ(span_embed(states, span, head), before);
}

TEST_P(SpanHeadProperty, SingleTokenSpanReturnsThatRow) {
  std::mt19937_64 rng(GetParam() + 2000);
  const std::size_t t = 2 + rng() % 6, h = 1 + rng() % 6;
  const SpanHead head(h, rng, 1.0);
  const Tensor states = random_states(t, h, rng);
  const std::size_t i = rng() % t;
  Tensor w;
  const Tensor emb = span_embed(states, std::vector<std::size_t>{i}, head, &w);
  EXPECT_EQ(w[0], 1.0);
  for (std::size_t c = 0; c < h; ++c) EXPECT_NEAR(emb[c], states.at(i, c), 1e-15);
}

TEST_P(SpanHeadProperty, SpanOrderDoesNotMatter) {
  std::mt19937_64 rng(GetParam() + 3000);
  const std::size_t t = 4 + rng() % 6, h = 1 + rng() % 6;
  const SpanHead head(h, rng, 1.0);
  const Tensor states = random_states(t, h, rng);
  auto span = random_span(t, rng);
  const Tensor a = span_embed(states, span, head);
  std::reverse(span.begin(), span.end());
  const Tensor b = span_embed(states, span, head);
  for (std::size_t c = 0; c < h; ++c) EXPECT_NEAR(a[c], b[c], 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Seeds, SpanHeadProperty, ::testing::Range(0, 50));

TEST(SpanHead, ZeroScoringVectorGivesUniformWeights) {
  std::mt19937_64 rng(1);
  SpanHead head(2, rng);
  head.attn_vector.value.fill(0.0);
  const Tensor states = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 9});
  Tensor w;
  const Tensor emb = span_embed(states, std::vector<std::size_t>{0, 1, 2}, head, &w);
  for (double x : w.values()) EXPECT_NEAR(x, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(emb[0], 3.0, 1e-12);
  EXPECT_NEAR(emb[1], 5.0, 1e-12);
}

TEST(SpanHead, ShapesAndLogits) {
  std::mt19937_64 rng(2);
  const SpanHead head(4, rng);
  EXPECT_EQ(head.hidden(), 4u);
  EXPECT_EQ(head.w_out.value.shape(), (numgrad::Shape{2, 8}));
  const Tensor states = Tensor::normal({7, 4}, 1.0, rng);
  const Tensor logits = forward_pair(states, std::vector<std::size_t>{1, 2},
                                     std::vector<std::size_t>{4, 5, 6}, head);
  EXPECT_EQ(logits.size(), 2u);
}

TEST(SpanHead, ClassifyIsLinearInConcatenation) {
  std::mt19937_64 rng(3);
  SpanHead head(2, rng, 1.0);
  head.b_out.value = Tensor::vector({0.5, -0.5});
  Tape tape;
  const HeadVars hv = bind_frozen(tape, head);
  const Tensor e1 = Tensor::vector({1, 2}), e2 = Tensor::vector({3, 4});
  const Tensor logits = classify(tape.frozen(e1), tape.frozen(e2), hv).value();
  const std::vector<double> x = {1, 2, 3, 4};
  for (std::size_t o = 0; o < 2; ++o) {
    double expect = head.b_out.value[o];
    for (std::size_t c = 0; c < 4; ++c) expect += head.w_out.value.at(o, c) * x[c];
    EXPECT_NEAR(logits[o], expect, 1e-12);
  }
}

TEST(SpanHead, Rejections) {
  std::mt19937_64 rng(4);
  const SpanHead head(3, rng);
  const Tensor states = Tensor::normal({4, 3}, 1.0, rng);
  EXPECT_THROW(span_embed(states, std::vector<std::size_t>{}, head), SpanError);
  EXPECT_THROW(span_embed(states, std::vector<std::size_t>{4}, head), DimensionError);
  const Tensor wrong = Tensor::normal({4, 2}, 1.0, rng);
  EXPECT_THROW(span_embed(wrong, std::vector<std::size_t>{0}, head), DimensionError);
}

TEST(SpanHead, PredictTieIsFalse) {
  EXPECT_EQ(predict(Tensor::vector({0.0, 0.0})), Label::F);
  EXPECT_EQ(predict(Tensor::vector({0.0, 1e-9})), Label::T);
  EXPECT_EQ(predict(Tensor::vector({2.0, 1.0})), Label::F);
  EXPECT_THROW(predict(Tensor::vector({1.0})), DimensionError);
}

TEST(Checkpoint, RoundTripRestoresValues) {
  std::mt19937_64 rng(5);
  SpanHead a(3, rng, 1.0), b(3, rng, 1.0);
  std::stringstream buf;
  const auto pa = std::as_const(a).parameters();
  write_checkpoint(buf, pa);
  const auto entries = read_checkpoint(buf);
  ASSERT_EQ(entries.size(), 4u);
  assign_checkpoint(b.parameters(), entries);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(b.parameters()[i]->value, a.parameters()[i]->value);
}

TEST(Checkpoint, MissingOrMisshapenParameterRejected) {
  std::mt19937_64 rng(6);
  SpanHead a(3, rng), wide(4, rng);
  std::stringstream buf;
  write_checkpoint(buf, std::as_const(a).parameters());
  auto entries = read_checkpoint(buf);
  EXPECT_THROW(assign_checkpoint(wide.parameters(), entries), FormatError);
  entries.pop_back();
  EXPECT_THROW(assign_checkpoint(a.parameters(), entries), FormatError);
  std::istringstream bad("x\t2x2\t1 2 3\n");
  EXPECT_THROW(read_checkpoint(bad), FormatError);
}
