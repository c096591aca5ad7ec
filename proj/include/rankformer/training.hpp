#pragma once

// Gradients of the batch-mean objective L_y + alpha * L_t, Adam with
// decoupled weight decay, the epoch learning-rate schedule and the training
// loop. Single-threaded; lists are reduced in a fixed order within a batch.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "rankformer/common.hpp"
#include "rankformer/dataset.hpp"
#include "rankformer/losses.hpp"
#include "rankformer/metrics.hpp"
#include "rankformer/model.hpp"
#include "rankformer/rng.hpp"

namespace rankformer {

struct TrainConfig {
  double alpha = 0.25;
  double lr = 1e-3;
  double weight_decay = 0.1;
  double dropout = 0.25;
  std::size_t epochs = 200;
  std::size_t warm_epochs = 20;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t eval_k = 10;

  void validate() const {
    if (!(alpha >= 0.0)) throw Error("train: alpha must be >= 0");
    if (!(lr > 0.0)) throw Error("train: lr must be positive");
    if (!(weight_decay >= 0.0)) throw Error("train: weight_decay must be >= 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("train: dropout must lie in [0, 1)");
    if (epochs == 0 || warm_epochs == 0 || batch_size == 0 || eval_k == 0)
      throw Error("train: epochs, warm_epochs, batch_size and eval_k must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0))
      throw Error("train: invalid Adam parameters");
  }
};

/// lr * min(1, sqrt(warm_epochs / epoch)), epochs counted from 1.
inline double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch == 0) throw Error("lr_schedule: epochs are counted from 1");
  return cfg.lr * std::min(1.0, std::sqrt(static_cast<double>(cfg.warm_epochs) / static_cast<double>(epoch)));
}

template <class P>
constexpr bool is_rankformer_v = false;
template <class T>
constexpr bool is_rankformer_v<RankFormerParams<T>> = true;

template <class P>
struct scalar_of;
template <class T>
struct scalar_of<RankFormerParams<T>> {
  using type = T;
};
template <class T>
struct scalar_of<MLPParams<T>> {
  using type = T;
};
template <class P>
using scalar_t = typename scalar_of<P>::type;

/// Pointers to every tensor in visiting order.
template <class P>
auto tensor_list(P& params) {
  using M = std::conditional_t<std::is_const_v<P>, const Matrix<scalar_t<std::remove_const_t<P>>>,
                               Matrix<scalar_t<std::remove_const_t<P>>>>;
  std::vector<M*> out;
  for_each_tensor(params, [&](const std::string&, auto& t) { out.push_back(&t); });
  return out;
}

template <class P>
std::vector<std::string> tensor_names(const P& params) {
  std::vector<std::string> out;
  for_each_tensor(params, [&](const std::string& name, const auto&) { out.push_back(name); });
  return out;
}

// ---------------------------------------------------------------------------
// Objective and gradients.

template <class P>
struct GradientResult {
  using T = scalar_t<P>;
  P grads;
  T loss = 0;                // batch mean of L_y + alpha * L_t
  std::vector<T> list_ly;    // per-list L_y (0 for lists with t = 0)
  std::vector<T> list_lt;    // per-list L_t (0 when alpha = 0 or no listwide head)
};

namespace detail {

template <class T>
void check_batch_labels(const Batch<T>& batch) {
  for (std::size_t b = 0; b < batch.num_lists; ++b)
    if (batch.listwide[b] < 0) throw Error("training: list '" + batch.list_key(b) + "' has no implicit labels");
}

}  // namespace detail

template <class T>
struct ObjectiveValue {
  T loss = 0;
  std::vector<T> ly, lt;
  Matrix<T> dscores, dlistwide;
};

/// Evaluates the batch-mean objective from model outputs; fills the output
/// gradients when `with_grad` is set. `listwide` may be null (MLP).
template <class T>
ObjectiveValue<T> batch_objective(const Batch<T>& batch, const Matrix<T>& scores, const Matrix<T>* listwide, T alpha,
                                  bool with_grad) {
  if (alpha < T(0)) throw Error("training: alpha must be >= 0");
  detail::check_batch_labels(batch);
  const std::size_t B = batch.num_lists;
  const std::size_t L = batch.max_len;
  const T inv_b = T(1) / static_cast<T>(B);
  ObjectiveValue<T> out;
  out.ly.assign(B, T(0));
  out.lt.assign(B, T(0));
  if (with_grad) {
    out.dscores = Matrix<T>::Zero(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(L));
    if (listwide) out.dlistwide = Matrix<T>::Zero(listwide->rows(), listwide->cols());
  }
  std::vector<T> s, y, d;
  for (std::size_t b = 0; b < B; ++b) {
    const auto row = static_cast<Eigen::Index>(b);
    const std::size_t n = batch.lengths[b];
    const int t = batch.listwide[b];
    if (t > 0) {
      s.assign(scores.row(row).data(), scores.row(row).data() + n);
      y.assign(batch.implicit.row(row).data(), batch.implicit.row(row).data() + n);
      out.ly[b] = softmax_loss<T>(s, y);
      if (with_grad) {
        const auto g = softmax_loss_grad<T>(s, y);
        for (std::size_t i = 0; i < n; ++i) out.dscores(row, static_cast<Eigen::Index>(i)) = g[i] * inv_b;
      }
    }
    if (listwide && alpha != T(0)) {
      d.assign(listwide->row(row).data(), listwide->row(row).data() + listwide->cols());
      out.lt[b] = ordinal_loss<T>(d, t);
      if (with_grad) {
        const auto g = ordinal_loss_grad<T>(d, t);
        for (std::size_t k = 0; k < g.size(); ++k)
          out.dlistwide(row, static_cast<Eigen::Index>(k)) = alpha * g[k] * inv_b;
      }
    }
    const T list_loss = out.ly[b] + alpha * out.lt[b];
    if (!std::isfinite(static_cast<double>(list_loss)))
      throw Error("training: non-finite loss on list '" + batch.list_key(b) + "'");
    out.loss += list_loss;
  }
  out.loss *= inv_b;
  return out;
}

template <class T>
GradientResult<RankFormerParams<T>> compute_gradients(const RankFormerParams<T>& params, const Batch<T>& batch,
                                                       T alpha, const ForwardOptions& opt = {}) {
  RankFormerTape<T> tape;
  auto out = rankformer_forward(batch, params, opt, &tape);
  auto obj = batch_objective(batch, out.scores, &out.listwide, alpha, true);
  GradientResult<RankFormerParams<T>> res;
  res.grads = zeros_like(params);
  rankformer_backward(obj.dscores, obj.dlistwide, params, tape, res.grads);
  res.loss = obj.loss;
  res.list_ly = std::move(obj.ly);
  res.list_lt = std::move(obj.lt);
  return res;
}

/// The MLP has no listwide head, so only L_y enters its objective.
template <class T>
GradientResult<MLPParams<T>> compute_gradients(const MLPParams<T>& params, const Batch<T>& batch, T alpha,
                                                const ForwardOptions& opt = {}) {
  MLPTape<T> tape;
  Matrix<T> scores = mlp_forward(batch, params, opt, &tape);
  auto obj = batch_objective(batch, scores, static_cast<const Matrix<T>*>(nullptr), alpha, true);
  GradientResult<MLPParams<T>> res;
  res.grads = zeros_like(params);
  mlp_backward(obj.dscores, params, tape, res.grads);
  res.loss = obj.loss;
  res.list_ly = std::move(obj.ly);
  res.list_lt = std::move(obj.lt);
  return res;
}

/// Forward-only batch-mean objective.
template <class T>
T batch_loss(const RankFormerParams<T>& params, const Batch<T>& batch, T alpha, const ForwardOptions& opt = {}) {
  auto out = rankformer_forward(batch, params, opt);
  return batch_objective(batch, out.scores, &out.listwide, alpha, false).loss;
}

template <class T>
T batch_loss(const MLPParams<T>& params, const Batch<T>& batch, T alpha, const ForwardOptions& opt = {}) {
  Matrix<T> scores = mlp_forward(batch, params, opt);
  return batch_objective(batch, scores, static_cast<const Matrix<T>*>(nullptr), alpha, false).loss;
}

// ---------------------------------------------------------------------------
// Adam with decoupled weight decay.

template <class P>
struct OptimizerState {
  P m, v;
  std::size_t step = 0;

  static OptimizerState init(const P& params) { return {zeros_like(params), zeros_like(params), 0}; }
};

/// theta <- theta * (1 - lr_t * lambda), then the bias-corrected Adam delta.
template <class P>
void adam_step(P& params, const P& grads, OptimizerState<P>& state, double lr_t, const TrainConfig& cfg) {
  using T = scalar_t<P>;
  auto theta = tensor_list(params);
  auto g = tensor_list(grads);
  auto m = tensor_list(state.m);
  auto v = tensor_list(state.v);
  if (g.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size())
    throw Error("adam_step: tensor count mismatch");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const auto same = [&](const auto* x) { return x->rows() == theta[i]->rows() && x->cols() == theta[i]->cols(); };
    if (!same(g[i]) || !same(m[i]) || !same(v[i])) throw Error("adam_step: shape mismatch at tensor " + std::to_string(i));
  }
  ++state.step;
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T c1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(state.step)));
  const T c2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(state.step)));
  const T lr = static_cast<T>(lr_t);
  const T decay = static_cast<T>(1.0 - lr_t * cfg.weight_decay);
  const T eps = static_cast<T>(cfg.adam_eps);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    auto th = theta[i]->array();
    const auto gr = g[i]->array();
    auto mm = m[i]->array();
    auto vv = v[i]->array();
    th *= decay;
    mm = b1 * mm + (T(1) - b1) * gr;
    vv = b2 * vv + (T(1) - b2) * gr.square();
    th -= lr * (mm / c1) / ((vv / c2).sqrt() + eps);
  }
}

/// Plain gradient step theta <- theta - lr * g.
template <class P>
void sgd_step(P& params, const P& grads, double lr) {
  auto theta = tensor_list(params);
  auto g = tensor_list(grads);
  if (g.size() != theta.size()) throw Error("sgd_step: tensor count mismatch");
  for (std::size_t i = 0; i < theta.size(); ++i) *theta[i] -= static_cast<scalar_t<P>>(lr) * *g[i];
}

template <class P>
double squared_norm(const P& params) {
  double s = 0.0;
  for (const auto* t : tensor_list(params)) s += static_cast<double>(t->squaredNorm());
  return s;
}

// ---------------------------------------------------------------------------
// Scoring and the training loop.

template <class T>
std::vector<std::vector<double>> score_split(const RankFormerParams<T>& params, const Split& split,
                                             std::size_t batch_size = 256) {
  std::vector<std::vector<double>> out;
  out.reserve(split.lists.size());
  for (const auto& batch : batch_lists<T>(split.lists, batch_size)) {
    auto res = rankformer_forward(batch, params);
    for (std::size_t b = 0; b < batch.num_lists; ++b) {
      std::vector<double> s(batch.lengths[b]);
      for (std::size_t i = 0; i < s.size(); ++i)
        s[i] = static_cast<double>(res.scores(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)));
      out.push_back(std::move(s));
    }
  }
  return out;
}

template <class T>
std::vector<std::vector<double>> score_split(const MLPParams<T>& params, const Split& split,
                                             std::size_t batch_size = 256) {
  std::vector<std::vector<double>> out;
  out.reserve(split.lists.size());
  for (const auto& batch : batch_lists<T>(split.lists, batch_size)) {
    Matrix<T> scores = mlp_forward(batch, params);
    for (std::size_t b = 0; b < batch.num_lists; ++b) {
      std::vector<double> s(batch.lengths[b]);
      for (std::size_t i = 0; i < s.size(); ++i)
        s[i] = static_cast<double>(scores(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)));
      out.push_back(std::move(s));
    }
  }
  return out;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> valid_ndcg_y;
  double lr = 0.0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["train_loss"] = train_loss;
    if (valid_ndcg_y)
      j["valid_ndcg_y"] = *valid_ndcg_y;
    else
      j["valid_ndcg_y"] = nullptr;
    j["lr"] = lr;
    return j;
  }
};

template <class P>
struct TrainResult {
  P final_params;
  P best_params;
  std::size_t best_epoch = 0;
  std::size_t num_train_lists = 0;
  std::vector<EpochRecord> history;
};

/// Lists with t = 0 carry no L_y signal; they are trained on only when the
/// model has a listwide head and alpha > 0.
template <class P>
bool trains_on_empty_lists(double alpha) {
  return is_rankformer_v<P> && alpha > 0.0;
}

template <class P>
std::vector<const RankedList*> training_lists(const Split& train, double alpha) {
  std::vector<const RankedList*> out;
  const bool keep_empty = trains_on_empty_lists<P>(alpha);
  for (const auto& list : train.lists) {
    if (!list.has_implicit() || !list.listwide)
      throw Error("train: list '" + list.key() + "' has no implicit labels");
    if (*list.listwide > 0 || keep_empty) out.push_back(&list);
  }
  return out;
}

template <class P>
TrainResult<P> train(const Split& train_split, const Split& valid_split, P params, const TrainConfig& cfg,
                     int y_max = 2, const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  using T = scalar_t<P>;
  cfg.validate();
  params.dims.dropout = cfg.dropout;
  for (const auto& list : valid_split.lists)
    if (!list.has_implicit()) throw Error("train: validation list '" + list.key() + "' has no implicit labels");

  auto lists = training_lists<P>(train_split, cfg.alpha);
  if (lists.empty()) throw Error("train: no training lists");
  TrainResult<P> result;
  result.num_train_lists = lists.size();
  auto state = OptimizerState<P>::init(params);
  double best_ndcg = -std::numeric_limits<double>::infinity();
  const std::size_t d = train_split.num_features;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = lists;
    auto shuffle = CounterRng::derive(cfg.seed, hash_string("shuffle"), epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.uniform_int(i)]);

    const double lr_t = lr_schedule(epoch, cfg);
    double loss_sum = 0.0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      auto batch = make_batch<T>(std::span<const RankedList* const>(order.data() + start, end - start), d);
      ForwardOptions fo{true, mix_keys(mix_keys(cfg.seed, epoch), step)};
      auto res = compute_gradients(params, batch, static_cast<T>(cfg.alpha), fo);
      loss_sum += static_cast<double>(res.loss) * static_cast<double>(batch.num_lists);
      adam_step(params, res.grads, state, lr_t, cfg);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.lr = lr_t;
    if (!valid_split.lists.empty())
      rec.valid_ndcg_y = evaluate(valid_split, score_split(params, valid_split), cfg.eval_k, y_max).ndcg_y;
    const double v = rec.valid_ndcg_y.value_or(-std::numeric_limits<double>::infinity());
    if (epoch == 1 || v > best_ndcg) {
      best_ndcg = v;
      result.best_epoch = epoch;
      result.best_params = params;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.final_params = std::move(params);
  return result;
}

}  // namespace rankformer
