#pragma once

// Listwise Softmax loss, listwide labels, ordinal encoding and the ordinal
// (summed binary cross-entropy) listwide loss.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "rankformer/common.hpp"

namespace rankformer {

inline constexpr double kProbClamp = 1e-7;

/// Softmax with max subtraction.
template <class T>
std::vector<T> softmax(std::span<const T> s) {
  std::vector<T> out(s.size());
  if (s.empty()) return out;
  const T m = *std::max_element(s.begin(), s.end());
  T z = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    out[i] = std::exp(s[i] - m);
    z += out[i];
  }
  for (auto& v : out) v /= z;
  return out;
}

/// L_y = -sum_i y_i log softmax(s)_i. Zero for an all-zero label vector.
template <class T>
T softmax_loss(std::span<const T> scores, std::span<const T> labels) {
  if (scores.size() != labels.size())
    throw Error("softmax_loss: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) + " labels");
  if (scores.empty()) throw Error("softmax_loss: empty list");
  const T m = *std::max_element(scores.begin(), scores.end());
  T z = 0;
  for (T s : scores) z += std::exp(s - m);
  const T log_z = m + std::log(z);
  T loss = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (labels[i] != T(0)) loss -= labels[i] * (scores[i] - log_z);
  return loss;
}

/// dL_y/ds = (sum_i y_i) softmax(s) - y.
template <class T>
std::vector<T> softmax_loss_grad(std::span<const T> scores, std::span<const T> labels) {
  if (scores.size() != labels.size()) throw Error("softmax_loss_grad: length mismatch");
  auto p = softmax(scores);
  T total = 0;
  for (T y : labels) total += y;
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = total * p[i] - labels[i];
  return p;
}

/// t = max_i y_i.
template <class Label>
Label listwide_label(std::span<const Label> labels) {
  if (labels.empty()) throw Error("listwide_label: empty list");
  return *std::max_element(labels.begin(), labels.end());
}

/// omega(t)_k = 1 iff t >= k, for k = 1..y_max.
inline std::vector<int> ordinal_encode(int t, int y_max) {
  if (y_max < 1) throw Error("ordinal_encode: y_max must be >= 1");
  if (t < 0 || t > y_max)
    throw Error("ordinal_encode: label " + std::to_string(t) + " outside [0, " + std::to_string(y_max) + "]");
  std::vector<int> out(static_cast<std::size_t>(y_max));
  for (int k = 1; k <= y_max; ++k) out[static_cast<std::size_t>(k - 1)] = t >= k ? 1 : 0;
  return out;
}

template <class T>
T binary_cross_entropy(T p, T target) {
  const T c = std::clamp(p, T(kProbClamp), T(1.0 - kProbClamp));
  return -(target * std::log(c) + (T(1) - target) * std::log(T(1) - c));
}

/// L_t = sum_k BCE(d_k, omega(t)_k), predictions clamped to [1e-7, 1 - 1e-7].
template <class T>
T ordinal_loss(std::span<const T> d, int t) {
  const auto omega = ordinal_encode(t, static_cast<int>(d.size()));
  T loss = 0;
  for (std::size_t k = 0; k < d.size(); ++k) loss += binary_cross_entropy(d[k], static_cast<T>(omega[k]));
  return loss;
}

/// dL_t/dd; zero where the clamp is active.
template <class T>
std::vector<T> ordinal_loss_grad(std::span<const T> d, int t) {
  const auto omega = ordinal_encode(t, static_cast<int>(d.size()));
  std::vector<T> g(d.size(), T(0));
  for (std::size_t k = 0; k < d.size(); ++k) {
    const T p = d[k];
    if (p < T(kProbClamp) || p > T(1.0 - kProbClamp)) continue;
    const T w = static_cast<T>(omega[k]);
    g[k] = -w / p + (T(1) - w) / (T(1) - p);
  }
  return g;
}

/// Per-list objective L_y + alpha * L_t.
template <class T>
T combined_objective(std::span<const T> scores, std::span<const T> labels, std::span<const T> d, int t, T alpha) {
  if (alpha < T(0)) throw Error("combined_objective: alpha must be >= 0");
  T loss = softmax_loss(scores, labels);
  if (alpha != T(0)) loss += alpha * ordinal_loss(d, t);
  return loss;
}

}  // namespace rankformer
