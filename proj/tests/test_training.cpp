#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "oracles.hpp"
#include "rankformer/gradcheck.hpp"
#include "rankformer/training.hpp"

using namespace rankformer;

namespace {

RankFormerDims tiny_dims(std::size_t d) {
  RankFormerDims dims;
  dims.num_features = d;
  dims.num_layers = 1;
  dims.num_heads = d % 2 == 0 ? 2 : 1;
  dims.dim_ff = 8;
  dims.head_hidden = 8;
  dims.dropout = 0.0;
  return dims;
}

// One weight and one bias: a 1-feature MLP with no hidden layers.
MLPParams<double> scalar_holder(double x) {
  MLPDims dims;
  dims.num_features = 1;
  dims.hidden = {};
  auto p = init_mlp<double>(dims, 0);
  p.weights[0](0, 0) = x;
  p.biases[0](0, 0) = 0.0;
  return p;
}

std::size_t count_positive(const Split& s) {
  std::size_t n = 0;
  for (const auto& l : s.lists) n += *l.listwide > 0;
  return n;
}

}  // namespace

TEST(Schedule, PlateauThenInverseSqrt) {
  TrainConfig cfg;
  EXPECT_EQ(lr_schedule(1, cfg), cfg.lr);
  EXPECT_EQ(lr_schedule(20, cfg), cfg.lr);
  EXPECT_DOUBLE_EQ(lr_schedule(80, cfg), cfg.lr / 2.0);
  EXPECT_LT(lr_schedule(21, cfg), cfg.lr);
  EXPECT_THROW(lr_schedule(0, cfg), Error);
}

TEST(Adam, FirstStepMovesByLrTimesSign) {
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  cfg.adam_eps = 1e-12;
  for (double g : {3.0, -0.01, 250.0}) {
    auto p = scalar_holder(0.5);
    auto grads = zeros_like(p);
    grads.weights[0](0, 0) = g;
    auto state = OptimizerState<MLPParams<double>>::init(p);
    adam_step(p, grads, state, 1e-3, cfg);
    EXPECT_NEAR(p.weights[0](0, 0) - 0.5, -1e-3 * (g > 0 ? 1.0 : -1.0), 1e-12);
    EXPECT_EQ(state.step, 1u);
  }
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  auto p = init_rankformer<double>(tiny_dims(4), 1);
  const auto before = p;
  auto state = OptimizerState<RankFormerParams<double>>::init(p);
  adam_step(p, zeros_like(p), state, 1e-3, cfg);
  EXPECT_EQ(tensor_list(p).size(), tensor_list(before).size());
  for (std::size_t i = 0; i < tensor_list(p).size(); ++i) EXPECT_EQ(*tensor_list(p)[i], *tensor_list(before)[i]);
}

TEST(Adam, FiveStepsMatchReference) {
  for (double decay : {0.0, 0.1}) {
    TrainConfig cfg;
    cfg.weight_decay = decay;
    const double a = 2.0, c = -0.7, lr = 0.05;
    auto p = scalar_holder(1.3);
    auto state = OptimizerState<MLPParams<double>>::init(p);
    const auto want = oracle::adam_quadratic(1.3, a, c, lr, decay, 5);
    for (int t = 0; t < 5; ++t) {
      auto g = zeros_like(p);
      g.weights[0](0, 0) = a * (p.weights[0](0, 0) - c);
      adam_step(p, g, state, lr, cfg);
      EXPECT_NEAR(p.weights[0](0, 0), want[static_cast<std::size_t>(t)], 1e-10);
    }
  }
}

TEST(Adam, ShapeMismatchIsAnError) {
  TrainConfig cfg;
  auto p = scalar_holder(1.0);
  auto g = zeros_like(p);
  g.weights[0].resize(2, 1);
  auto state = OptimizerState<MLPParams<double>>::init(p);
  EXPECT_THROW(adam_step(p, g, state, 1e-3, cfg), Error);
}

TEST(Objective, AllZeroListContributesNothingAtAlphaZero) {
  Split s = random_labelled_split(1, 4, 4, 4, 2, 4, 3);
  ASSERT_EQ(*s.lists[0].listwide, 0);
  const auto batch = batch_lists<double>(s.lists, 1).front();
  const auto p = init_rankformer<double>(tiny_dims(4), 2);
  const auto res = compute_gradients(p, batch, 0.0);
  EXPECT_EQ(res.loss, 0.0);
  for (const auto* t : tensor_list(res.grads)) EXPECT_EQ(t->norm(), 0.0);
  const auto with_alpha = compute_gradients(p, batch, 0.25);
  EXPECT_GT(with_alpha.loss, 0.0);
  EXPECT_EQ(with_alpha.list_ly[0], 0.0);
}

TEST(Objective, ScoreGradientIsClosedForm) {
  const Split s = random_labelled_split(4, 3, 6, 3, 2, 4, 5);
  const auto batch = batch_lists<double>(s.lists, 4).front();
  auto rng = CounterRng::derive(5, 5);
  Matrix<double> scores(4, static_cast<Eigen::Index>(batch.max_len));
  for (Eigen::Index i = 0; i < scores.size(); ++i) scores.data()[i] = rng.normal();
  const auto obj = batch_objective(batch, scores, static_cast<const Matrix<double>*>(nullptr), 0.0, true);
  for (std::size_t b = 0; b < 4; ++b) {
    const auto row = static_cast<Eigen::Index>(b);
    const std::size_t n = batch.lengths[b];
    double total = 0, z = 0;
    for (std::size_t i = 0; i < n; ++i) {
      total += batch.implicit(row, static_cast<Eigen::Index>(i));
      z += std::exp(scores(row, static_cast<Eigen::Index>(i)));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto col = static_cast<Eigen::Index>(i);
      const double want = total > 0 ? (total * std::exp(scores(row, col)) / z - batch.implicit(row, col)) / 4.0 : 0.0;
      EXPECT_NEAR(obj.dscores(row, col), want, 1e-10);
    }
    for (std::size_t i = n; i < batch.max_len; ++i) EXPECT_EQ(obj.dscores(row, static_cast<Eigen::Index>(i)), 0.0);
  }
}

TEST(Objective, EmptyListsNeverEnterTheRankingTerm) {
  const Split s = random_labelled_split(12, 2, 5, 4, 2, 4, 6);
  const auto batch = batch_lists<double>(s.lists, 12).front();
  const auto p = init_rankformer<double>(tiny_dims(4), 6);
  for (double alpha : {0.0, 0.25, 1.0}) {
    const auto res = compute_gradients(p, batch, alpha);
    for (std::size_t b = 0; b < batch.num_lists; ++b) {
      if (batch.listwide[b] == 0) {
        EXPECT_EQ(res.list_ly[b], 0.0);
      }
      if (alpha == 0.0) {
        EXPECT_EQ(res.list_lt[b], 0.0);
      }
    }
  }
}

TEST(Objective, NonFiniteLossNamesTheList) {
  const Split s = random_labelled_split(2, 3, 3, 2, 2, 4, 7);
  const auto batch = batch_lists<double>(s.lists, 2).front();
  Matrix<double> scores = Matrix<double>::Zero(2, 3);
  scores(1, 0) = std::nan("");
  try {
    batch_objective(batch, scores, static_cast<const Matrix<double>*>(nullptr), 0.0, false);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(s.lists[1].key()), std::string::npos);
  }
}

TEST(Objective, SmallStepFollowsTheGradient) {
  const Split s = random_labelled_split(3, 3, 5, 4, 2, 4, 8);
  const auto batch = batch_lists<double>(s.lists, 3).front();
  auto p = init_rankformer<double>(tiny_dims(4), 8);
  for (double alpha : {0.0, 0.25}) {
    auto q = p;
    const double before = batch_loss(q, batch, alpha);
    const auto res = compute_gradients(q, batch, alpha);
    const double lr = 1e-6;
    sgd_step(q, res.grads, lr);
    const double after = batch_loss(q, batch, alpha);
    const double predicted = lr * squared_norm(res.grads);
    EXPECT_NEAR((before - after) / predicted, 1.0, 0.1);
  }
  MLPDims md;
  md.num_features = 4;
  md.hidden = {8};
  md.dropout = 0.0;
  auto mlp = init_mlp<double>(md, 8);
  const double before = batch_loss(mlp, batch, 0.0);
  const auto res = compute_gradients(mlp, batch, 0.0);
  sgd_step(mlp, res.grads, 1e-6);
  EXPECT_NEAR((before - batch_loss(mlp, batch, 0.0)) / (1e-6 * squared_norm(res.grads)), 1.0, 0.1);
}

TEST(Train, ListSelectionFollowsAlphaAndModel) {
  const Split s = random_labelled_split(40, 2, 4, 3, 2, 4, 9);
  const std::size_t positive = count_positive(s);
  ASSERT_LT(positive, s.lists.size());
  EXPECT_EQ(training_lists<RankFormerParams<double>>(s, 0.0).size(), positive);
  EXPECT_EQ(training_lists<RankFormerParams<double>>(s, 0.25).size(), s.lists.size());
  EXPECT_EQ(training_lists<MLPParams<double>>(s, 0.25).size(), positive);
}

TEST(Train, DeterministicAndRecordsHistory) {
  const Split tr = random_labelled_split(20, 2, 6, 3, 2, 4, 10);
  const Split va = random_labelled_split(6, 2, 6, 3, 2, 4, 11);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = 4;
  cfg.dropout = 0.1;
  const auto p = init_rankformer<double>(tiny_dims(3), 4);
  const auto a = train(tr, va, p, cfg);
  const auto b = train(tr, va, p, cfg);
  ASSERT_EQ(a.history.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(a.history[e].epoch, e + 1);
    EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
    EXPECT_EQ(a.history[e].valid_ndcg_y, b.history[e].valid_ndcg_y);
    EXPECT_EQ(a.history[e].lr, cfg.lr);
  }
  EXPECT_EQ(a.num_train_lists, tr.lists.size());
  EXPECT_GE(a.best_epoch, 1u);
  for (std::size_t i = 0; i < tensor_list(a.final_params).size(); ++i)
    EXPECT_EQ(*tensor_list(a.final_params)[i], *tensor_list(b.final_params)[i]);
  cfg.seed = 5;
  EXPECT_NE(train(tr, va, p, cfg).history.back().train_loss, a.history.back().train_loss);
}

TEST(Train, MissingImplicitLabelsIsAnError) {
  Split tr = random_labelled_split(4, 2, 3, 3, 2, 4, 12);
  const Split va = tr;
  for (auto& it : tr.lists[2].items) it.implicit.reset();
  tr.lists[2].listwide.reset();
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train(tr, va, init_rankformer<double>(tiny_dims(3), 0), cfg), Error);
  cfg.alpha = -1.0;
  EXPECT_THROW(train(va, va, init_rankformer<double>(tiny_dims(3), 0), cfg), Error);
}
