#pragma once

// Reference computations written independently of the library, shared by the
// unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

namespace oracle {

/// -sum y_i log(exp(s_i) / sum_j exp(s_j)), direct evaluation.
inline double softmax_loss(const std::vector<double>& s, const std::vector<double>& y) {
  double z = 0;
  for (double v : s) z += std::exp(v);
  double loss = 0;
  for (std::size_t i = 0; i < s.size(); ++i) loss -= y[i] * std::log(std::exp(s[i]) / z);
  return loss;
}

/// Sum of binary cross-entropies against the "t >= k" targets, clamped.
inline double ordinal_loss(const std::vector<double>& d, int t) {
  double loss = 0;
  for (std::size_t k = 1; k <= d.size(); ++k) {
    const double p = std::min(std::max(d[k - 1], 1e-7), 1.0 - 1e-7);
    loss -= t >= static_cast<int>(k) ? std::log(p) : std::log(1.0 - p);
  }
  return loss;
}

/// NDCG@k by explicit sort; nullopt for constant labels.
inline std::optional<double> ndcg(const std::vector<double>& scores, const std::vector<int>& labels, std::size_t k) {
  bool constant = true;
  for (int l : labels) constant = constant && l == labels[0];
  if (constant) return std::nullopt;
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < scores.size(); ++i) order.push_back({-scores[i], i});
  std::sort(order.begin(), order.end());
  std::vector<int> ideal = labels;
  std::sort(ideal.rbegin(), ideal.rend());
  double dcg = 0, idcg = 0;
  for (std::size_t r = 0; r < std::min(k, labels.size()); ++r) {
    dcg += (std::pow(2.0, labels[order[r].second]) - 1.0) / std::log2(static_cast<double>(r) + 2.0);
    idcg += (std::pow(2.0, ideal[r]) - 1.0) / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg / idcg;
}

/// Adam with decoupled decay on f(x) = a/2 (x - c)^2; returns x after each step.
inline std::vector<double> adam_quadratic(double x, double a, double c, double lr, double decay, int steps) {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0, v = 0;
  std::vector<double> out;
  for (int t = 1; t <= steps; ++t) {
    const double g = a * (x - c);
    x = x - lr * decay * x;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    x = x - lr * mhat / (std::sqrt(vhat) + eps);
    out.push_back(x);
  }
  return out;
}

}  // namespace oracle
