#pragma once

// Dense building blocks with hand-written reverse-mode backward passes.
// Backward functions accumulate (+=) into parameter gradients and return the
// gradient with respect to the block input.

#include <cmath>
#include <numbers>

#include "rankformer/common.hpp"
#include "rankformer/rng.hpp"

namespace rankformer {

inline constexpr double kLayerNormEps = 1e-5;

/// y = x W + b, with W stored (in x out) and b as a 1 x out row.
template <class T>
Matrix<T> linear(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b) {
  Matrix<T> y(x.rows(), w.cols());
  y.noalias() = x * w;
  y.rowwise() += b.row(0);
  return y;
}

template <class T>
Matrix<T> linear_backward(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& dy, Matrix<T>& dw, Matrix<T>& db) {
  dw.noalias() += x.transpose() * dy;
  db += dy.colwise().sum();
  Matrix<T> dx(dy.rows(), w.rows());
  dx.noalias() = dy * w.transpose();
  return dx;
}

template <class T>
struct LayerNormCache {
  Matrix<T> normalized;
  Vector<T> inv_std;
};

template <class T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& scale, const Matrix<T>& shift, LayerNormCache<T>* cache) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Matrix<T> xhat(n, d);
  Vector<T> inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const T mu = x.row(r).mean();
    const T var = (x.row(r).array() - mu).square().mean();
    inv_std(r) = T(1) / std::sqrt(var + T(kLayerNormEps));
    xhat.row(r) = (x.row(r).array() - mu) * inv_std(r);
  }
  Matrix<T> y = (xhat.array().rowwise() * scale.row(0).array()).rowwise() + shift.row(0).array();
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <class T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& scale, const LayerNormCache<T>& cache,
                              Matrix<T>& dscale, Matrix<T>& dshift) {
  const auto& xhat = cache.normalized;
  dscale += (dy.array() * xhat.array()).colwise().sum().matrix();
  dshift += dy.colwise().sum();
  Matrix<T> dxhat = dy.array().rowwise() * scale.row(0).array();
  Matrix<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const T mean_d = dxhat.row(r).mean();
    const T mean_dx = (dxhat.row(r).array() * xhat.row(r).array()).mean();
    dx.row(r) = cache.inv_std(r) * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx);
  }
  return dx;
}

/// Exact (erf) GELU.
template <class T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
}

template <class T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  return cdf + x * pdf;
}

template <class T>
Matrix<T> gelu(const Matrix<T>& x) {
  return x.unaryExpr([](T v) { return gelu(v); });
}

/// Phi(x), the factor GELU multiplies x by; cached by callers for backward.
template <class T>
Matrix<T> normal_cdf(const Matrix<T>& x) {
  return x.unaryExpr([](T v) { return T(0.5) * (T(1) + std::erf(v * T(std::numbers::sqrt2 / 2))); });
}

template <class T>
Matrix<T> gelu_backward(const Matrix<T>& pre, const Matrix<T>& cdf, const Matrix<T>& dy) {
  const T c = T(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  return dy.array() * (cdf.array() + pre.array() * (T(-0.5) * pre.array().square()).exp() * c);
}

template <class T>
Matrix<T> gelu_backward(const Matrix<T>& pre, const Matrix<T>& dy) {
  return gelu_backward(pre, normal_cdf(pre), dy);
}

template <class T>
Matrix<T> relu(const Matrix<T>& x) {
  return x.cwiseMax(T(0));
}

template <class T>
Matrix<T> relu_backward(const Matrix<T>& pre, const Matrix<T>& dy) {
  return (pre.array() > T(0)).select(dy, T(0));
}

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

/// Inverted dropout mask: entries are 0 or 1/(1-p). Empty when inactive.
template <class T>
Matrix<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, CounterRng* rng) {
  if (!rng || p <= 0.0) return {};
  if (p >= 1.0) return Matrix<T>::Zero(rows, cols);
  const T keep = T(1) / T(1.0 - p);
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng->uniform() < p ? T(0) : keep;
  return m;
}

template <class T>
void apply_mask(Matrix<T>& x, const Matrix<T>& mask) {
  if (mask.size() != 0) x.array() *= mask.array();
}

}  // namespace rankformer
