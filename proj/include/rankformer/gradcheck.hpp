#pragma once

// Central finite-difference check of the analytic gradients of the
// batch-mean objective, dropout off.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rankformer/dataset.hpp"
#include "rankformer/model.hpp"
#include "rankformer/rng.hpp"
#include "rankformer/training.hpp"

namespace rankformer {

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kGradcheckTolerance = 1e-4;

struct TensorCheck {
  std::string name;
  std::size_t size = 0;
  double rel_error = 0.0;     // ||a - n|| / max(||a|| + ||n||, 1e-8)
  double max_abs_diff = 0.0;
};

struct GradcheckReport {
  std::vector<TensorCheck> tensors;
  double loss = 0.0;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto& t : tensors) m = std::max(m, t.rel_error);
    return m;
  }

  bool passed(double tol = kGradcheckTolerance) const { return max_rel_error() < tol; }

  std::vector<TensorCheck> failures(double tol = kGradcheckTolerance) const {
    std::vector<TensorCheck> out;
    for (const auto& t : tensors)
      if (!(t.rel_error < tol)) out.push_back(t);
    return out;
  }
};

/// Random lists with lengths in [min_len, max_len], N(0, 1) features and
/// uniform labels in {0..y_max}. The first list is forced to t = 0 and the
/// second to t = y_max when there is room, so both objective branches run.
inline Split random_labelled_split(std::size_t num_lists, std::size_t min_len, std::size_t max_len,
                                   std::size_t num_features, int y_max, int r_max, std::uint64_t seed) {
  auto rng = CounterRng::derive(seed, hash_string("gradcheck-data"));
  Split split;
  split.num_features = num_features;
  for (std::size_t b = 0; b < num_lists; ++b) {
    RankedList list;
    list.query_id = "g" + std::to_string(b);
    const std::size_t n = min_len + rng.uniform_int(max_len - min_len + 1);
    for (std::size_t i = 0; i < n; ++i) {
      Item it;
      for (std::size_t f = 0; f < num_features; ++f) it.features.push_back(rng.normal());
      it.relevance = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(r_max) + 1));
      int y = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(y_max) + 1));
      if (b == 0) y = 0;
      if (b == 1 && i == 0) y = y_max;
      it.implicit = y;
      list.items.push_back(std::move(it));
    }
    list.refresh_listwide();
    split.lists.push_back(std::move(list));
  }
  return split;
}

template <class P>
GradcheckReport gradient_check(const P& params, const Batch<double>& batch, double alpha, double h = kGradcheckStep) {
  static_assert(std::is_same_v<scalar_t<P>, double>, "gradient checks run in double precision");
  const ForwardOptions off{false, 0};
  auto analytic = compute_gradients(params, batch, alpha, off);
  GradcheckReport report;
  report.loss = analytic.loss;

  P probe = params;
  auto probe_tensors = tensor_list(probe);
  auto grad_tensors = tensor_list(std::as_const(analytic.grads));
  auto names = tensor_names(params);
  for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
    Matrix<double>& w = *probe_tensors[t];
    const Matrix<double>& a = *grad_tensors[t];
    Matrix<double> numeric(w.rows(), w.cols());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double saved = w.data()[i];
      w.data()[i] = saved + h;
      const double up = batch_loss(probe, batch, alpha, off);
      w.data()[i] = saved - h;
      const double down = batch_loss(probe, batch, alpha, off);
      w.data()[i] = saved;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    TensorCheck c;
    c.name = names[t];
    c.size = static_cast<std::size_t>(w.size());
    const double diff = (a - numeric).norm();
    c.rel_error = diff / std::max(a.norm() + numeric.norm(), 1e-8);
    c.max_abs_diff = (a - numeric).cwiseAbs().maxCoeff();
    report.tensors.push_back(std::move(c));
  }
  return report;
}

struct GradcheckCase {
  std::string model;
  double alpha = 0.0;
  GradcheckReport report;
};

/// The standard suite: RankFormer (d_x = 8, two layers, two heads) and the MLP
/// on a random 3-list batch with lengths 3..5, for alpha in {0, 0.25, 1}.
inline std::vector<GradcheckCase> run_gradcheck_suite(std::uint64_t seed) {
  constexpr std::size_t d = 8;
  const Split split = random_labelled_split(3, 3, 5, d, 2, 4, seed);
  const auto batch = batch_lists<double>(split.lists, split.lists.size()).front();

  RankFormerDims rd;
  rd.num_features = d;
  rd.num_layers = 2;
  rd.num_heads = 2;
  rd.dim_ff = 32;
  rd.head_hidden = 16;
  rd.dropout = 0.0;
  auto rf = init_rankformer<double>(rd, seed);
  MLPDims md;
  md.num_features = d;
  md.hidden = {32, 16};
  md.dropout = 0.0;
  auto mlp = init_mlp<double>(md, seed);

  std::vector<GradcheckCase> out;
  for (double alpha : {0.0, 0.25, 1.0}) {
    out.push_back({"rankformer", alpha, gradient_check(rf, batch, alpha)});
    out.push_back({"mlp", alpha, gradient_check(mlp, batch, alpha)});
  }
  return out;
}

}  // namespace rankformer
