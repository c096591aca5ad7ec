#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "rankformer/simulator.hpp"

using namespace rankformer;

namespace {

RankedList make_list(const std::string& qid, const std::vector<int>& grades) {
  RankedList l;
  l.query_id = qid;
  for (std::size_t i = 0; i < grades.size(); ++i) {
    Item it;
    it.features = {static_cast<double>(i)};
    it.relevance = grades[i];
    l.items.push_back(it);
  }
  return l;
}

/// Exact distribution of t by enumerating all 3^n label vectors under the
/// intent/interaction cascade.
std::array<double, 3> enumerate_listwide(const std::vector<int>& grades, const SimConfig& cfg) {
  const auto pt = intent_distribution(*std::max_element(grades.begin(), grades.end()), cfg);
  std::array<double, 3> out{};
  const std::size_t n = grades.size();
  std::size_t combos = 1;
  for (std::size_t i = 0; i < n; ++i) combos *= 3;
  for (int T = 0; T <= 2; ++T) {
    for (std::size_t code = 0; code < combos; ++code) {
      std::size_t c = code;
      double p = pt[static_cast<std::size_t>(T)];
      int t = 0;
      for (std::size_t i = 0; i < n; ++i, c /= 3) {
        const int y = static_cast<int>(c % 3);
        const double rho = relevance_prob(grades[i], cfg.r_max);
        const double conv = T == 2 ? rho : 0.0;
        const double click = T >= 1 ? cfg.click_noise + (1.0 - cfg.click_noise) * rho : 0.0;
        const double py = y == 2 ? conv : y == 1 ? (1.0 - conv) * click : (1.0 - conv) * (1.0 - click);
        p *= py;
        t = std::max(t, y);
      }
      out[static_cast<std::size_t>(t)] += p;
    }
  }
  return out;
}

}  // namespace

TEST(Relevance, ProbabilityMap) {
  EXPECT_EQ(relevance_prob(0, 4), 0.0);
  EXPECT_EQ(relevance_prob(4, 4), 1.0);
  EXPECT_DOUBLE_EQ(relevance_prob(2, 4), 0.2);
  EXPECT_DOUBLE_EQ(relevance_prob(1, 4), 1.0 / 15.0);
  EXPECT_THROW(relevance_prob(5, 4), Error);
  EXPECT_THROW(relevance_prob(-1, 4), Error);
}

TEST(Intent, DistributionSumsToOne) {
  SimConfig cfg;
  for (int r = 0; r <= 4; ++r) {
    const auto p = intent_distribution(r, cfg);
    EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
    EXPECT_DOUBLE_EQ(p[2], 0.1 * relevance_prob(r, 4));
  }
}

TEST(Intent, ZeroRelevanceListsNeverInteract) {
  SimConfig cfg;
  const std::vector<int> grades{0, 0, 0, 0};
  for (int k = 0; k < 2000; ++k) {
    auto rng = CounterRng::derive(1, k);
    EXPECT_EQ(sample_intent(grades, cfg, rng), 0);
  }
}

TEST(Interaction, RespectsIntentCeiling) {
  SimConfig cfg;
  const std::vector<int> grades{0, 1, 2, 3, 4, 4, 0};
  for (int T = 0; T <= 2; ++T)
    for (int k = 0; k < 3000; ++k) {
      auto rng = CounterRng::derive(2, T, k);
      const auto y = sample_interactions(grades, T, cfg, rng);
      for (int v : y) EXPECT_LE(v, T);
      if (T == 0) {
        EXPECT_TRUE(std::all_of(y.begin(), y.end(), [](int v) { return v == 0; }));
      }
      if (T >= 1) {
        EXPECT_GE(y[4], 1);  // rho = 1 always clicks
      }
    }
}

TEST(Selection, LengthsAndUniqueness) {
  SimConfig cfg;
  for (std::size_t len : {1u, 5u, 16u, 17u, 40u}) {
    std::vector<int> grades(len, 1);
    const auto l = make_list("q" + std::to_string(len), grades);
    const auto subs = select_sublists(l, cfg);
    ASSERT_EQ(subs.size(), 10u);
    for (std::size_t b = 0; b < subs.size(); ++b) {
      EXPECT_EQ(subs[b].bootstrap, static_cast<int>(b));
      EXPECT_EQ(subs[b].size(), std::min<std::size_t>(len, 16));
      std::set<double> ids;
      for (const auto& it : subs[b].items) ids.insert(it.features[0]);
      EXPECT_EQ(ids.size(), subs[b].size());
    }
  }
}

TEST(Selection, SubsetsAreUniformOverPositions) {
  SimConfig cfg;
  cfg.max_list_size = 4;
  cfg.bootstraps = 1;
  std::vector<int> grades(8, 0);
  std::vector<int> counts(8, 0);
  const int draws = 20000;
  for (int k = 0; k < draws; ++k) {
    auto rng = CounterRng::derive(3, k);
    for (auto i : select_sublist(8, cfg, rng)) ++counts[i];
  }
  for (int c : counts) EXPECT_NEAR(static_cast<double>(c) / draws, 0.5, 0.02);
}

TEST(Simulate, DeterministicAndConsistentListwide) {
  SimConfig cfg;
  cfg.seed = 42;
  Split s;
  s.num_features = 1;
  auto rng = CounterRng::derive(0, 0);
  for (int q = 0; q < 50; ++q) {
    std::vector<int> grades(1 + rng.uniform_int(30));
    for (auto& g : grades) g = static_cast<int>(rng.uniform_int(5));
    s.lists.push_back(make_list(std::to_string(q), grades));
  }
  const Split a = simulate(s, cfg);
  const Split b = simulate(s, cfg);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.lists.size(), 500u);
  for (const auto& l : a.lists) {
    ASSERT_TRUE(l.listwide.has_value());
    int t = 0;
    for (const auto& it : l.items) t = std::max(t, *it.implicit);
    EXPECT_EQ(*l.listwide, t);
  }
  cfg.seed = 43;
  EXPECT_NE(simulate(s, cfg), a);
}

TEST(Simulate, ListwideDistributionMatchesEnumeration) {
  SimConfig cfg;
  cfg.bootstraps = 1;
  const std::vector<std::vector<int>> cases{{0, 2, 1}, {4, 0, 0, 1}, {3, 3}, {1, 0, 2, 0, 1}};
  for (const auto& grades : cases) {
    const auto exact = enumerate_listwide(grades, cfg);
    std::array<double, 3> freq{};
    const int draws = 40000;
    for (int k = 0; k < draws; ++k) {
      auto rng = CounterRng::derive(9, k);
      const int T = sample_intent(grades, cfg, rng);
      const auto y = sample_interactions(grades, T, cfg, rng);
      freq[static_cast<std::size_t>(*std::max_element(y.begin(), y.end()))] += 1.0 / draws;
    }
    for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(freq[t], exact[t], 0.012) << "t=" << t;
  }
}

TEST(Simulate, RejectsUnsupportedConfigs) {
  SimConfig cfg;
  cfg.y_max = 3;
  Split s;
  s.num_features = 1;
  s.lists.push_back(make_list("a", {1}));
  EXPECT_THROW(simulate(s, cfg), Error);
  SimConfig neg;
  neg.click_noise = 1.5;
  EXPECT_THROW(simulate(s, neg), Error);
  Split bad = s;
  bad.lists[0].items[0].relevance = 7;
  EXPECT_THROW(simulate(bad, SimConfig{}), Error);
}

TEST(Summary, CountsAddUp) {
  SimConfig cfg;
  Split s;
  s.num_features = 1;
  for (int q = 0; q < 20; ++q) s.lists.push_back(make_list(std::to_string(q), {0, 1, 2, 3, 4, 2}));
  const Split sim = simulate(s, cfg);
  const auto sum = summarize(sim, 4, 2);
  EXPECT_EQ(sum.num_lists, 200u);
  std::size_t lists = 0, items = 0;
  for (auto c : sum.listwide_counts) lists += c;
  for (const auto& row : sum.grade_counts)
    for (auto c : row) items += c;
  EXPECT_EQ(lists, 200u);
  EXPECT_EQ(items, sum.num_items);
  EXPECT_EQ(sum.grade_counts[2][0], 0u);  // rho(0) = 0 never converts
  std::ostringstream out;
  sum.print(out);
  EXPECT_NE(out.str().find("t=2"), std::string::npos);
}
