#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "rankformer/losses.hpp"
#include "rankformer/rng.hpp"

using namespace rankformer;

TEST(SoftmaxLoss, HandValues) {
  const std::vector<double> s{0.0, 0.0};
  const std::vector<double> y{1.0, 0.0};
  EXPECT_NEAR(softmax_loss<double>(s, y), std::log(2.0), 1e-15);
  const std::vector<double> s2{std::log(3.0), 0.0};
  const std::vector<double> y2{2.0, 1.0};
  // p = (3/4, 1/4): -(2 log 3/4 + log 1/4)
  EXPECT_NEAR(softmax_loss<double>(s2, y2), -(2.0 * std::log(0.75) + std::log(0.25)), 1e-14);
}

TEST(SoftmaxLoss, ZeroLabelsGiveExactlyZero) {
  auto rng = CounterRng::derive(1, 1);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> s(1 + rng.uniform_int(20));
    for (auto& v : s) v = rng.normal(0.0, 10.0);
    const std::vector<double> y(s.size(), 0.0);
    EXPECT_EQ(softmax_loss<double>(s, y), 0.0);
    for (double g : softmax_loss_grad<double>(s, y)) EXPECT_EQ(g, 0.0);
  }
}

TEST(SoftmaxLoss, StableForLargeScores) {
  const std::vector<double> s{1000.0, 0.0};
  const std::vector<double> y{0.0, 1.0};
  EXPECT_NEAR(softmax_loss<double>(s, y), 1000.0, 1e-9);
}

TEST(SoftmaxLoss, ErrorsOnBadShapes) {
  const std::vector<double> s{1.0, 2.0};
  const std::vector<double> y{1.0};
  EXPECT_THROW(softmax_loss<double>(s, y), Error);
  EXPECT_THROW(softmax_loss<double>(std::vector<double>{}, std::vector<double>{}), Error);
}

TEST(SoftmaxLoss, GradientMatchesFiniteDifferences) {
  auto rng = CounterRng::derive(2, 2);
  for (int k = 0; k < 50; ++k) {
    const std::size_t n = 1 + rng.uniform_int(8);
    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.normal();
      y[i] = static_cast<double>(rng.uniform_int(3));
    }
    const auto g = softmax_loss_grad<double>(s, y);
    double total = 0;
    for (double v : y) total += v;
    double z = 0;
    for (double v : s) z += std::exp(v);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(g[i], total * std::exp(s[i]) / z - y[i], 1e-12);
      auto up = s, down = s;
      up[i] += 1e-6;
      down[i] -= 1e-6;
      const double fd = (softmax_loss<double>(up, y) - softmax_loss<double>(down, y)) / 2e-6;
      EXPECT_NEAR(g[i], fd, 1e-7);
    }
  }
}

TEST(Listwide, MaxOfLabels) {
  EXPECT_EQ(listwide_label<int>(std::vector<int>{0, 2, 1}), 2);
  EXPECT_EQ(listwide_label<int>(std::vector<int>{0, 0}), 0);
  EXPECT_THROW(listwide_label<int>(std::vector<int>{}), Error);
}

TEST(Ordinal, EncodingExamples) {
  EXPECT_EQ(ordinal_encode(0, 2), (std::vector<int>{0, 0}));
  EXPECT_EQ(ordinal_encode(1, 2), (std::vector<int>{1, 0}));
  EXPECT_EQ(ordinal_encode(2, 2), (std::vector<int>{1, 1}));
  EXPECT_EQ(ordinal_encode(3, 4), (std::vector<int>{1, 1, 1, 0}));
  EXPECT_THROW(ordinal_encode(3, 2), Error);
  EXPECT_THROW(ordinal_encode(-1, 2), Error);
}

TEST(Ordinal, LossValuesAndClamp) {
  const std::vector<double> d{0.5, 0.5};
  EXPECT_NEAR(ordinal_loss<double>(d, 1), 2.0 * std::log(2.0), 1e-15);
  const std::vector<double> sure{1.0, 0.0};
  const double floor_term = -std::log(1.0 - kProbClamp);
  EXPECT_NEAR(ordinal_loss<double>(sure, 1), 2.0 * floor_term, 1e-15);
  EXPECT_NEAR(ordinal_loss<double>(sure, 2), floor_term - std::log(kProbClamp), 1e-12);
  EXPECT_TRUE(std::isfinite(ordinal_loss<double>(sure, 0)));
  const auto g = ordinal_loss_grad<double>(std::vector<double>{0.0, 1.0}, 1);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
}

TEST(Ordinal, GradientMatchesFiniteDifferences) {
  auto rng = CounterRng::derive(3, 3);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> d{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
    const int t = static_cast<int>(rng.uniform_int(3));
    const auto g = ordinal_loss_grad<double>(d, t);
    for (std::size_t i = 0; i < 2; ++i) {
      auto up = d, down = d;
      up[i] += 1e-7;
      down[i] -= 1e-7;
      EXPECT_NEAR(g[i], (ordinal_loss<double>(up, t) - ordinal_loss<double>(down, t)) / 2e-7, 1e-6);
    }
  }
}

TEST(Combined, AlphaWeighting) {
  const std::vector<double> s{0.1, -0.3, 0.7};
  const std::vector<double> y{1.0, 0.0, 2.0};
  const std::vector<double> d{0.6, 0.3};
  const double ly = softmax_loss<double>(s, y);
  const double lt = ordinal_loss<double>(d, 2);
  EXPECT_EQ(combined_objective<double>(s, y, d, 2, 0.0), ly);
  EXPECT_NEAR(combined_objective<double>(s, y, d, 2, 0.25), ly + 0.25 * lt, 1e-15);
  EXPECT_NEAR(combined_objective<double>(s, y, d, 2, 1.0), ly + lt, 1e-15);
  EXPECT_THROW(combined_objective<double>(s, y, d, 2, -0.1), Error);
}

TEST(Softmax, SumsToOneInSinglePrecision) {
  const std::vector<float> s{100.0f, 101.0f, 99.5f};
  const auto p = softmax<float>(s);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0f, 1e-6f);
}
