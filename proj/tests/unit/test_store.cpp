#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "wic/store.hpp"

using namespace wic;
using namespace wic::encoder;

namespace {

PrecomputedStore parse(const std::string& text) {
  std::istringstream in(text);
  return PrecomputedStore::parse(in);
}

std::string dump(const PrecomputedStore& s) {
  std::ostringstream out;
  s.write(out);
  return out.str();
}

}  // namespace

TEST(Store, RoundTripIsExact) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 10);
  for (int trial = 0; trial < 20; ++trial) {
    PrecomputedStore s(5);
    for (int k = 0; k < 6; ++k) {
      const std::size_t t = 1 + rng() % 7;
      Tensor m({t, 5});
      for (double& x : m.values()) x = n(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
      std::optional<std::vector<CharRange>> offs;
      if (k % 2) {
        offs.emplace();
        for (std::size_t i = 0; i < t; ++i) offs->push_back({i, i + (i % 3)});
      }
      s.insert("p" + std::to_string(k) + ".1", m, offs);
    }
    const std::string text = dump(s);
    const PrecomputedStore back = parse(text);
    EXPECT_EQ(back.records(), s.records());
    EXPECT_EQ(dump(back), text);
  }
}

TEST(Store, LookupAbsentIsEmpty) {
  PrecomputedStore s(2);
  s.insert(PrecomputedStore::key("a.en-en.0", 1), Tensor::matrix(1, 2, {1, 2}));
  EXPECT_TRUE(s.lookup("a.en-en.0", 1).has_value());
  EXPECT_FALSE(s.lookup("a.en-en.0", 2).has_value());
  EXPECT_EQ(s.lookup("a.en-en.0", 1)->matrix.at(0, 1), 2.0);
}

TEST(Store, FileRoundTrip) {
  PrecomputedStore s(3);
  s.insert("null", Tensor::matrix(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  const auto path = std::filesystem::temp_directory_path() / "wic_store_test.tsv";
  s.save(path);
  EXPECT_EQ(PrecomputedStore::load(path).records(), s.records());
  EXPECT_THROW(PrecomputedStore::load(path.string() + ".missing"), DataError);
}

TEST(Store, ShapeMismatchRejected) {
  PrecomputedStore s(4);
  EXPECT_THROW(s.insert("k", Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6})), FormatError);
  EXPECT_THROW(s.insert("k", Tensor::matrix(1, 4, {1, 2, 3, 4}),
                        std::vector<CharRange>{{0, 1}, {1, 2}}),
               FormatError);
  EXPECT_THROW(s.insert("a\tb", Tensor::matrix(1, 4, {1, 2, 3, 4})), FormatError);
  EXPECT_THROW(PrecomputedStore(0), FormatError);
}

TEST(Store, MalformedFilesRejected) {
  EXPECT_THROW(parse(""), FormatError);
  EXPECT_THROW(parse("X=3\n"), FormatError);
  EXPECT_THROW(parse("H=2\nk\t2\t1 2 3\n"), FormatError);
  EXPECT_THROW(parse("H=2\nk\t1\t1 2\nk\t1\t3 4\n"), FormatError);
  EXPECT_THROW(parse("H=2\nk\t1\t1 x\n"), FormatError);
  EXPECT_THROW(parse("H=2\nk\t1\n"), FormatError);
  EXPECT_THROW(parse("H=2\nk\t1\t1 2\t0-1\n"), FormatError);
}

TEST(Store, OffsetsColumnParsed) {
  const auto s = parse("H=1\nk\t2\t0.5 -1\t0:3 4:6\n");
  const StoreRecord* r = s.find("k");
  ASSERT_NE(r, nullptr);
  ASSERT_TRUE(r->offsets.has_value());
  EXPECT_EQ((*r->offsets)[1], (CharRange{4, 6}));
}
