#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "rankformer/dataset.hpp"
#include "rankformer/rng.hpp"

using namespace rankformer;

namespace {

Split random_split(std::uint64_t seed, std::size_t lists, std::size_t max_len, std::size_t d, bool with_implicit) {
  auto rng = CounterRng::derive(seed, 77);
  Split s;
  s.num_features = d;
  for (std::size_t b = 0; b < lists; ++b) {
    RankedList l;
    l.query_id = "q" + std::to_string(b);
    if (with_implicit) l.bootstrap = static_cast<int>(rng.uniform_int(10));
    const std::size_t n = 1 + rng.uniform_int(max_len);
    for (std::size_t i = 0; i < n; ++i) {
      Item it;
      for (std::size_t f = 0; f < d; ++f) it.features.push_back(std::round(rng.normal() * 1000.0) / 64.0);
      it.relevance = static_cast<int>(rng.uniform_int(5));
      if (with_implicit) it.implicit = static_cast<int>(rng.uniform_int(3));
      l.items.push_back(std::move(it));
    }
    l.refresh_listwide();
    s.lists.push_back(std::move(l));
  }
  return s;
}

}  // namespace

TEST(Letor, ParsesGroupsInOrderOfFirstAppearance) {
  const Split s = parse_letor(
      "2 qid:10 1:0.5 3:-1\n"
      "0 qid:7 2:4 # trailing comment\n"
      "# full-line comment\n"
      "\n"
      "1 qid:10 2:1.25\n");
  ASSERT_EQ(s.lists.size(), 2u);
  EXPECT_EQ(s.num_features, 3u);
  EXPECT_EQ(s.lists[0].query_id, "10");
  EXPECT_EQ(s.lists[1].query_id, "7");
  ASSERT_EQ(s.lists[0].size(), 2u);
  EXPECT_EQ(s.lists[0].items[0].relevance, 2);
  EXPECT_EQ(s.lists[0].items[0].features, (std::vector<double>{0.5, 0.0, -1.0}));
  EXPECT_EQ(s.lists[0].items[1].features, (std::vector<double>{0.0, 1.25, 0.0}));
  EXPECT_EQ(s.lists[1].items[0].features, (std::vector<double>{0.0, 4.0, 0.0}));
  EXPECT_FALSE(s.lists[0].bootstrap.has_value());
}

TEST(Letor, MinFeaturesPadsWithZeros) {
  const Split s = parse_letor("1 qid:1 1:2\n", 4);
  EXPECT_EQ(s.num_features, 4u);
  EXPECT_EQ(s.lists[0].items[0].features, (std::vector<double>{2.0, 0.0, 0.0, 0.0}));
}

TEST(Letor, BootstrapSuffixIsSplitOff) {
  const Split s = parse_letor("1 qid:abc/3 1:1\n0 qid:abc/4 1:2\n");
  ASSERT_EQ(s.lists.size(), 2u);
  EXPECT_EQ(s.lists[0].query_id, "abc");
  EXPECT_EQ(s.lists[0].bootstrap, 3);
  EXPECT_EQ(s.lists[1].key(), "abc/4");
}

TEST(Letor, ErrorsCarryLineNumbers) {
  const char* bad[] = {
      "1 qid:1 1:1\nx qid:1 1:1\n",   // bad label
      "1 qid:1 1:1\n-1 qid:1 1:1\n",  // negative label
      "1 qid:1 1:1\n1 q:1 1:1\n",     // bad qid
      "1 qid:1 1:1\n1 qid:1 11\n",    // malformed feature
      "1 qid:1 1:1\n1 qid:1 0:1\n",   // fid 0
      "1 qid:1 1:1\n1 qid:1 2:1 2:3\n",  // duplicate fid
      "1 qid:1 1:1\n1 qid:1 1:abc\n",    // bad value
  };
  for (const char* text : bad) {
    try {
      parse_letor(text);
      ADD_FAILURE() << "accepted: " << text;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), 2u) << text;
    }
  }
}

TEST(Letor, WriteParseRoundTripIsExact) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Split s = random_split(seed, 15, 12, 5, false);
    std::ostringstream out;
    write_letor(out, s);
    const Split back = parse_letor(out.str(), s.num_features);
    EXPECT_EQ(back, s);
  }
}

TEST(ImplicitLabels, RoundTripAndAttach) {
  Split s = random_split(3, 30, 10, 2, true);
  // make keys unique
  for (std::size_t i = 0; i < s.lists.size(); ++i) s.lists[i].bootstrap = static_cast<int>(i % 10);
  std::stringstream buf;
  write_implicit_labels(buf, s);
  const auto labels = parse_implicit_labels(buf);
  Split stripped = s;
  for (auto& l : stripped.lists) {
    for (auto& it : l.items) it.implicit.reset();
    l.refresh_listwide();
  }
  attach_implicit_labels(stripped, labels);
  EXPECT_EQ(stripped, s);
}

TEST(ImplicitLabels, LengthMismatchAndMissingAreErrors) {
  Split s = parse_letor("1 qid:a/0 1:1\n0 qid:a/0 1:2\n");
  std::istringstream short_labels("a 0 1\n");
  EXPECT_THROW(attach_implicit_labels(s, parse_implicit_labels(short_labels)), Error);
  std::istringstream other("b 0 1 0\n");
  EXPECT_THROW(attach_implicit_labels(s, parse_implicit_labels(other)), Error);
  std::istringstream bad("a 0 1 x\n");
  EXPECT_THROW(parse_implicit_labels(bad), ParseError);
}

TEST(Labels, ValidationCatchesDomainAndDuplicates) {
  Split s = random_split(1, 5, 4, 2, true);
  EXPECT_NO_THROW(validate_labels(s, 4, 2));
  Split dup = s;
  dup.lists.push_back(dup.lists.front());
  EXPECT_THROW(validate_labels(dup, 4, 2), Error);
  Split hi = s;
  hi.lists[0].items[0].relevance = 5;
  EXPECT_THROW(validate_labels(hi, 4, 2), Error);
  Split y = s;
  y.lists[0].items[0].implicit = 3;
  EXPECT_THROW(validate_labels(y, 4, 2), Error);
  Split nan = s;
  nan.lists[0].items[0].features[0] = std::nan("");
  EXPECT_THROW(validate_labels(nan, 4, 2), Error);
}

TEST(Transform, StandardizeGivesZeroMeanUnitVariance) {
  Split s = random_split(4, 40, 16, 3, false);
  for (auto& l : s.lists)
    for (auto& it : l.items) it.features[2] = 7.0;  // constant feature
  const auto tr = fit_transform(s, TransformMode::standardize);
  EXPECT_EQ(tr.scale[2], kStdFloor);
  const Split z = apply_transform(tr, s);
  for (std::size_t f = 0; f < 2; ++f) {
    double m = 0, v = 0;
    std::size_t n = 0;
    for (const auto& l : z.lists)
      for (const auto& it : l.items) {
        m += it.features[f];
        ++n;
      }
    m /= static_cast<double>(n);
    for (const auto& l : z.lists)
      for (const auto& it : l.items) v += (it.features[f] - m) * (it.features[f] - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / static_cast<double>(n), 1.0, 1e-12);
  }
  for (const auto& l : z.lists)
    for (const auto& it : l.items) EXPECT_EQ(it.features[2], 0.0);
  EXPECT_NEAR(tr.invert(0, tr.apply(0, 3.5)), 3.5, 1e-12);
}

TEST(Transform, QuantileNormalUsesMidRanks) {
  // Training values 1, 2, 2, 3 (n = 4).
  const Split s = parse_letor("0 qid:1 1:1\n0 qid:1 1:2\n0 qid:1 1:2\n0 qid:1 1:3\n");
  const auto tr = fit_transform(s, TransformMode::quantile_normal);
  const boost::math::normal_distribution<double> N;
  auto q = [&](double u) { return boost::math::quantile(N, u); };
  EXPECT_NEAR(tr.apply(0, 1.0), q(1.0 / 5.0), 1e-15);          // less 0, equal 1
  EXPECT_NEAR(tr.apply(0, 2.0), q((1.0 + 1.5) / 5.0), 1e-15);  // less 1, equal 2
  EXPECT_NEAR(tr.apply(0, 3.0), q(4.0 / 5.0), 1e-15);          // less 3, equal 1, clipped
  EXPECT_NEAR(tr.apply(0, 2.5), q(3.5 / 5.0), 1e-15);          // unseen value
  EXPECT_NEAR(tr.apply(0, -10.0), q(1.0 / 5.0), 1e-15);        // clipped low
  EXPECT_NEAR(tr.apply(0, 10.0), q(4.0 / 5.0), 1e-15);         // clipped high
}

TEST(Transform, QuantileNormalIsMonotone) {
  const Split s = random_split(9, 30, 16, 2, false);
  const auto tr = fit_transform(s, TransformMode::quantile_normal);
  auto rng = CounterRng::derive(5, 5);
  for (int trial = 0; trial < 2000; ++trial) {
    const double a = rng.normal() * 20.0, b = rng.normal() * 20.0;
    const double lo = std::min(a, b), hi = std::max(a, b);
    EXPECT_LE(tr.apply(0, lo), tr.apply(0, hi));
  }
}

TEST(Transform, ApplyIsPureAndSerializable) {
  const Split s = random_split(11, 25, 10, 3, false);
  for (auto mode : {TransformMode::none, TransformMode::standardize, TransformMode::quantile_normal}) {
    const auto tr = fit_transform(s, mode);
    const Split a = apply_transform(tr, s);
    const Split b = apply_transform(tr, s);
    EXPECT_EQ(a, b);
    std::stringstream buf;
    write_transform(buf, tr);
    const auto back = read_transform(buf);
    EXPECT_EQ(apply_transform(back, s), a) << to_string(mode);
  }
  Split wrong = s;
  resize_features(wrong, 5);
  EXPECT_THROW(apply_transform(fit_transform(s, TransformMode::standardize), wrong), Error);
  EXPECT_THROW(fit_transform(Split{}, TransformMode::standardize), Error);
}

TEST(Batch, BatchUnbatchRoundTrip) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Split s = random_split(seed, 23, 9, 3, true);
    std::vector<RankedList> back;
    for (const auto& b : batch_lists<double>(s.lists, 5)) {
      EXPECT_LE(b.num_lists, 5u);
      std::size_t real = 0;
      for (auto m : b.mask) real += m;
      std::size_t total = 0;
      for (auto n : b.lengths) total += n;
      EXPECT_EQ(real, total);
      for (auto& l : unbatch(b)) back.push_back(std::move(l));
    }
    EXPECT_EQ(back, s.lists);
  }
}

TEST(Batch, PaddingRowsAreZeroAndShuffleIsPermutation) {
  const Split s = random_split(2, 40, 12, 2, true);
  const auto batches = batch_lists<double>(s.lists, 8, 1234u);
  std::multiset<std::string> keys;
  for (const auto& b : batches) {
    for (std::size_t r = 0; r < b.mask.size(); ++r)
      if (!b.mask[r]) {
        EXPECT_EQ(b.features.row(static_cast<Eigen::Index>(r)).norm(), 0.0);
      }
    for (std::size_t i = 0; i < b.num_lists; ++i) keys.insert(b.query_ids[i]);
  }
  std::multiset<std::string> expected;
  for (const auto& l : s.lists) expected.insert(l.query_id);
  EXPECT_EQ(keys, expected);
  EXPECT_THROW(batch_lists<double>(s.lists, 0), Error);
}
