#pragma once

// RankFormer: a listwise Transformer encoder over the items of a list plus a
// learnable CLS row. Item scores come from h_s(z_i || z_CLS), the listwide
// ordinal prediction from h_d(z_CLS). No positional information is used, so
// scores are permutation-equivariant and the listwide prediction invariant.
//
// Also the pointwise MLP baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <type_traits>
#include <string>
#include <utility>
#include <vector>

#include "rankformer/common.hpp"
#include "rankformer/dataset.hpp"
#include "rankformer/layers.hpp"
#include "rankformer/rng.hpp"

namespace rankformer {

enum class ResidualForm {
  printed,   // X + FF~(X + SA~(X)): the SA branch reaches the output only through FF
  standard,  // U + FF~(U) with U = X + SA~(X)
};

inline std::string to_string(ResidualForm r) { return r == ResidualForm::printed ? "printed" : "standard"; }

inline ResidualForm parse_residual_form(std::string_view s) {
  if (s == "printed") return ResidualForm::printed;
  if (s == "standard") return ResidualForm::standard;
  throw Error("unknown residual form '" + std::string(s) + "'");
}

struct RankFormerDims {
  std::size_t num_features = 0;
  std::size_t num_layers = 3;
  std::size_t num_heads = 1;
  std::size_t dim_ff = 512;
  std::size_t head_hidden = 128;
  std::size_t y_max = 2;
  double dropout = 0.25;
  ResidualForm residual = ResidualForm::printed;

  void validate() const {
    if (num_features == 0) throw Error("rankformer: num_features must be positive");
    if (num_heads == 0 || num_features % num_heads != 0)
      throw Error("rankformer: num_features (" + std::to_string(num_features) + ") must be divisible by num_heads (" +
                  std::to_string(num_heads) + ")");
    if (dim_ff == 0 || head_hidden == 0 || y_max == 0) throw Error("rankformer: layer widths must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("rankformer: dropout must lie in [0, 1)");
  }

  bool operator==(const RankFormerDims&) const = default;
};

struct MLPDims {
  std::size_t num_features = 0;
  std::vector<std::size_t> hidden{512, 256, 128};
  double dropout = 0.25;

  void validate() const {
    if (num_features == 0) throw Error("mlp: num_features must be positive");
    for (auto h : hidden)
      if (h == 0) throw Error("mlp: hidden widths must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("mlp: dropout must lie in [0, 1)");
  }

  bool operator==(const MLPDims&) const = default;
};

template <class T>
struct AttentionParams {
  Matrix<T> wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t num_heads = 1;

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "wq", self.wq);
    f(prefix + "bq", self.bq);
    f(prefix + "wk", self.wk);
    f(prefix + "bk", self.bk);
    f(prefix + "wv", self.wv);
    f(prefix + "bv", self.bv);
    f(prefix + "wo", self.wo);
    f(prefix + "bo", self.bo);
  }
};

template <class T>
struct TransformerLayerParams {
  AttentionParams<T> attn;
  Matrix<T> ff1_w, ff1_b, ff2_w, ff2_b;
  Matrix<T> ln1_scale, ln1_shift, ln2_scale, ln2_shift;

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    AttentionParams<T>::visit(self.attn, prefix + "attn.", f);
    f(prefix + "ff1_w", self.ff1_w);
    f(prefix + "ff1_b", self.ff1_b);
    f(prefix + "ff2_w", self.ff2_w);
    f(prefix + "ff2_b", self.ff2_b);
    f(prefix + "ln1_scale", self.ln1_scale);
    f(prefix + "ln1_shift", self.ln1_shift);
    f(prefix + "ln2_scale", self.ln2_scale);
    f(prefix + "ln2_shift", self.ln2_shift);
  }
};

template <class T>
struct RankFormerParams {
  RankFormerDims dims;
  Matrix<T> cls;  // 1 x d_x
  std::vector<TransformerLayerParams<T>> layers;
  Matrix<T> score_w1, score_b1, score_w2, score_b2;        // 2 d_x -> hidden -> 1
  Matrix<T> listwide_w1, listwide_b1, listwide_w2, listwide_b2;  // d_x -> hidden -> y_max

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f(std::string("cls"), self.cls);
    for (std::size_t l = 0; l < self.layers.size(); ++l)
      TransformerLayerParams<T>::visit(self.layers[l], "layers." + std::to_string(l) + ".", f);
    f(std::string("score_w1"), self.score_w1);
    f(std::string("score_b1"), self.score_b1);
    f(std::string("score_w2"), self.score_w2);
    f(std::string("score_b2"), self.score_b2);
    f(std::string("listwide_w1"), self.listwide_w1);
    f(std::string("listwide_b1"), self.listwide_b1);
    f(std::string("listwide_w2"), self.listwide_w2);
    f(std::string("listwide_b2"), self.listwide_b2);
  }
};

template <class T>
struct MLPParams {
  MLPDims dims;
  std::vector<Matrix<T>> weights;  // hidden layers then the output layer
  std::vector<Matrix<T>> biases;

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    for (std::size_t l = 0; l < self.weights.size(); ++l) {
      f("dense." + std::to_string(l) + ".w", self.weights[l]);
      f("dense." + std::to_string(l) + ".b", self.biases[l]);
    }
  }
};

/// Calls f(name, tensor) for every learnable tensor in a fixed order.
template <class P, class F>
void for_each_tensor(P& params, F&& f) {
  std::remove_const_t<P>::visit(params, f);
}

template <class P>
P zeros_like(const P& params) {
  P out = params;
  for_each_tensor(out, [](const std::string&, auto& t) { t.setZero(); });
  return out;
}

template <class P>
std::size_t parameter_count(const P& params) {
  std::size_t n = 0;
  for_each_tensor(params, [&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

// ---------------------------------------------------------------------------
// Initialization: weights ~ U(-sqrt(1/fan_in), sqrt(1/fan_in)), biases 0,
// layer-norm scale 1 / shift 0, CLS ~ N(0, 0.02^2). Each tensor draws from its
// own stream keyed by (seed, tensor name).

namespace detail {

template <class T>
Matrix<T> uniform_weight(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed, const std::string& name) {
  auto rng = CounterRng::derive(seed, hash_string(name));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  Matrix<T> w(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
  return w;
}

template <class T>
Matrix<T> zero_row(std::size_t n) {
  return Matrix<T>::Zero(1, static_cast<Eigen::Index>(n));
}

template <class T>
Matrix<T> one_row(std::size_t n) {
  return Matrix<T>::Ones(1, static_cast<Eigen::Index>(n));
}

}  // namespace detail

template <class T>
RankFormerParams<T> init_rankformer(const RankFormerDims& dims, std::uint64_t seed) {
  dims.validate();
  using detail::one_row;
  using detail::uniform_weight;
  using detail::zero_row;
  const std::size_t d = dims.num_features;
  RankFormerParams<T> p;
  p.dims = dims;
  {
    auto rng = CounterRng::derive(seed, hash_string("cls"));
    p.cls.resize(1, static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < p.cls.size(); ++i) p.cls.data()[i] = static_cast<T>(rng.normal(0.0, 0.02));
  }
  for (std::size_t l = 0; l < dims.num_layers; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    TransformerLayerParams<T> layer;
    layer.attn.num_heads = dims.num_heads;
    layer.attn.wq = uniform_weight<T>(d, d, seed, pre + "attn.wq");
    layer.attn.wk = uniform_weight<T>(d, d, seed, pre + "attn.wk");
    layer.attn.wv = uniform_weight<T>(d, d, seed, pre + "attn.wv");
    layer.attn.wo = uniform_weight<T>(d, d, seed, pre + "attn.wo");
    layer.attn.bq = zero_row<T>(d);
    layer.attn.bk = zero_row<T>(d);
    layer.attn.bv = zero_row<T>(d);
    layer.attn.bo = zero_row<T>(d);
    layer.ff1_w = uniform_weight<T>(d, dims.dim_ff, seed, pre + "ff1_w");
    layer.ff1_b = zero_row<T>(dims.dim_ff);
    layer.ff2_w = uniform_weight<T>(dims.dim_ff, d, seed, pre + "ff2_w");
    layer.ff2_b = zero_row<T>(d);
    layer.ln1_scale = one_row<T>(d);
    layer.ln1_shift = zero_row<T>(d);
    layer.ln2_scale = one_row<T>(d);
    layer.ln2_shift = zero_row<T>(d);
    p.layers.push_back(std::move(layer));
  }
  p.score_w1 = uniform_weight<T>(2 * d, dims.head_hidden, seed, "score_w1");
  p.score_b1 = zero_row<T>(dims.head_hidden);
  p.score_w2 = uniform_weight<T>(dims.head_hidden, 1, seed, "score_w2");
  p.score_b2 = zero_row<T>(1);
  p.listwide_w1 = uniform_weight<T>(d, dims.head_hidden, seed, "listwide_w1");
  p.listwide_b1 = zero_row<T>(dims.head_hidden);
  p.listwide_w2 = uniform_weight<T>(dims.head_hidden, dims.y_max, seed, "listwide_w2");
  p.listwide_b2 = zero_row<T>(dims.y_max);
  return p;
}

template <class T>
MLPParams<T> init_mlp(const MLPDims& dims, std::uint64_t seed) {
  dims.validate();
  MLPParams<T> p;
  p.dims = dims;
  std::size_t in = dims.num_features;
  std::vector<std::size_t> widths = dims.hidden;
  widths.push_back(1);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    p.weights.push_back(detail::uniform_weight<T>(in, widths[l], seed, "dense." + std::to_string(l) + ".w"));
    p.biases.push_back(detail::zero_row<T>(widths[l]));
    in = widths[l];
  }
  return p;
}

// ---------------------------------------------------------------------------
// Masked multi-head self-attention over a stack of equally sized lists.

/// Rows [b * rows_per_list, (b + 1) * rows_per_list) belong to list b; mask
/// marks real rows.
struct ListLayout {
  std::size_t num_lists = 0;
  std::size_t rows_per_list = 0;
  std::vector<unsigned char> mask;

  bool valid(std::size_t row) const { return mask[row] != 0; }
};

template <class T>
struct AttentionTape {
  Matrix<T> input, q, k, v, heads;
  std::vector<Matrix<T>> probs;  // index b * num_heads + h, rows_per_list x rows_per_list
};

template <class T>
void zero_masked_rows(Matrix<T>& x, const ListLayout& layout) {
  for (std::size_t r = 0; r < layout.mask.size(); ++r)
    if (!layout.mask[r]) x.row(static_cast<Eigen::Index>(r)).setZero();
}

/// SA(X)_i = v(X)^T softmax(k(X) q(x_i) / sqrt(d_head)) per head, heads
/// concatenated then projected. Masked keys get -inf logits (weight exactly 0)
/// and masked rows of the output are zero.
template <class T>
Matrix<T> attention_forward(const Matrix<T>& x, const ListLayout& layout, const AttentionParams<T>& p,
                            AttentionTape<T>* tape) {
  const Eigen::Index d = x.cols();
  const auto H = static_cast<Eigen::Index>(p.num_heads);
  if (H <= 0 || d % H != 0) throw Error("attention: feature dimension not divisible by head count");
  const Eigen::Index dh = d / H;
  const auto n = static_cast<Eigen::Index>(layout.rows_per_list);
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  Matrix<T> q = linear(x, p.wq, p.bq);
  Matrix<T> k = linear(x, p.wk, p.bk);
  Matrix<T> v = linear(x, p.wv, p.bv);
  Matrix<T> heads = Matrix<T>::Zero(x.rows(), d);
  std::vector<Matrix<T>> probs;
  if (tape) probs.reserve(layout.num_lists * p.num_heads);

  Matrix<T> logits(n, n), weights(n, n);
  for (std::size_t b = 0; b < layout.num_lists; ++b) {
    const Eigen::Index base = static_cast<Eigen::Index>(b) * n;
    bool any = false;
    for (Eigen::Index i = 0; i < n; ++i) any = any || layout.valid(static_cast<std::size_t>(base + i));
    if (!any) throw Error("attention: list " + std::to_string(b) + " has no unmasked rows");
    for (Eigen::Index h = 0; h < H; ++h) {
      logits.noalias() = q.block(base, h * dh, n, dh) * k.block(base, h * dh, n, dh).transpose();
      weights.setZero();
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!layout.valid(static_cast<std::size_t>(base + i))) continue;
        T m = -std::numeric_limits<T>::infinity();
        for (Eigen::Index j = 0; j < n; ++j)
          if (layout.valid(static_cast<std::size_t>(base + j))) m = std::max(m, logits(i, j) * scale);
        T z = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
          if (!layout.valid(static_cast<std::size_t>(base + j))) continue;
          weights(i, j) = std::exp(logits(i, j) * scale - m);
          z += weights(i, j);
        }
        weights.row(i) /= z;
      }
      heads.block(base, h * dh, n, dh).noalias() = weights * v.block(base, h * dh, n, dh);
      if (tape) probs.push_back(weights);
    }
  }
  Matrix<T> out = linear(heads, p.wo, p.bo);
  zero_masked_rows(out, layout);
  if (tape) {
    tape->input = x;
    tape->q = std::move(q);
    tape->k = std::move(k);
    tape->v = std::move(v);
    tape->heads = std::move(heads);
    tape->probs = std::move(probs);
  }
  return out;
}

template <class T>
Matrix<T> attention_backward(Matrix<T> dout, const ListLayout& layout, const AttentionParams<T>& p,
                             const AttentionTape<T>& tape, AttentionParams<T>& g) {
  zero_masked_rows(dout, layout);
  const Eigen::Index d = tape.input.cols();
  const auto H = static_cast<Eigen::Index>(p.num_heads);
  const Eigen::Index dh = d / H;
  const auto n = static_cast<Eigen::Index>(layout.rows_per_list);
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  Matrix<T> dheads = linear_backward(tape.heads, p.wo, dout, g.wo, g.bo);
  Matrix<T> dq = Matrix<T>::Zero(tape.input.rows(), d);
  Matrix<T> dk = Matrix<T>::Zero(tape.input.rows(), d);
  Matrix<T> dv = Matrix<T>::Zero(tape.input.rows(), d);
  Matrix<T> dP(n, n), dS(n, n);
  for (std::size_t b = 0; b < layout.num_lists; ++b) {
    const Eigen::Index base = static_cast<Eigen::Index>(b) * n;
    for (Eigen::Index h = 0; h < H; ++h) {
      const Matrix<T>& P = tape.probs[b * p.num_heads + static_cast<std::size_t>(h)];
      auto dO = dheads.block(base, h * dh, n, dh);
      dv.block(base, h * dh, n, dh).noalias() += P.transpose() * dO;
      dP.noalias() = dO * tape.v.block(base, h * dh, n, dh).transpose();
      for (Eigen::Index i = 0; i < n; ++i) {
        const T dot = P.row(i).dot(dP.row(i));
        dS.row(i) = P.row(i).array() * (dP.row(i).array() - dot);
      }
      dS *= scale;
      dq.block(base, h * dh, n, dh).noalias() += dS * tape.k.block(base, h * dh, n, dh);
      dk.block(base, h * dh, n, dh).noalias() += dS.transpose() * tape.q.block(base, h * dh, n, dh);
    }
  }
  Matrix<T> dx = linear_backward(tape.input, p.wq, dq, g.wq, g.bq);
  dx += linear_backward(tape.input, p.wk, dk, g.wk, g.bk);
  dx += linear_backward(tape.input, p.wv, dv, g.wv, g.bv);
  return dx;
}

/// Single-list convenience: X is (n x d), mask has n entries. Optionally
/// returns the attention weights of every head.
template <class T>
Matrix<T> self_attention(const Matrix<T>& x, std::span<const unsigned char> mask, const AttentionParams<T>& p,
                         std::vector<Matrix<T>>* weights = nullptr) {
  if (mask.size() != static_cast<std::size_t>(x.rows())) throw Error("self_attention: mask length mismatch");
  ListLayout layout{1, static_cast<std::size_t>(x.rows()), std::vector<unsigned char>(mask.begin(), mask.end())};
  AttentionTape<T> tape;
  Matrix<T> out = attention_forward(x, layout, p, weights ? &tape : nullptr);
  if (weights) *weights = std::move(tape.probs);
  return out;
}

// ---------------------------------------------------------------------------
// Transformer layer: pre-LayerNorm blocks, GELU feed-forward, dropout on the
// attention and feed-forward outputs before their residual adds.

struct LayerOptions {
  ResidualForm residual = ResidualForm::printed;
  double dropout = 0.0;
  CounterRng* rng = nullptr;  // non-null enables dropout (train mode)
};

template <class T>
struct LayerTape {
  LayerNormCache<T> ln1, ln2;
  AttentionTape<T> attn;
  Matrix<T> h2, ff_pre, ff_cdf, ff_act;
  Matrix<T> drop_attn, drop_ff;
};

template <class T>
Matrix<T> transformer_layer_forward(const Matrix<T>& x, const ListLayout& layout, const TransformerLayerParams<T>& p,
                                    const LayerOptions& opt, LayerTape<T>* tape) {
  LayerNormCache<T> ln1, ln2;
  Matrix<T> h1 = layer_norm(x, p.ln1_scale, p.ln1_shift, tape ? &ln1 : nullptr);
  Matrix<T> a = attention_forward(h1, layout, p.attn, tape ? &tape->attn : nullptr);
  Matrix<T> drop_attn = dropout_mask<T>(a.rows(), a.cols(), opt.dropout, opt.rng);
  apply_mask(a, drop_attn);
  Matrix<T> u = x + a;
  Matrix<T> h2 = layer_norm(u, p.ln2_scale, p.ln2_shift, tape ? &ln2 : nullptr);
  Matrix<T> ff_pre = linear(h2, p.ff1_w, p.ff1_b);
  Matrix<T> ff_cdf = normal_cdf(ff_pre);
  Matrix<T> ff_act = ff_pre.cwiseProduct(ff_cdf);
  Matrix<T> f = linear(ff_act, p.ff2_w, p.ff2_b);
  Matrix<T> drop_ff = dropout_mask<T>(f.rows(), f.cols(), opt.dropout, opt.rng);
  apply_mask(f, drop_ff);
  Matrix<T> out = opt.residual == ResidualForm::printed ? Matrix<T>(x + f) : Matrix<T>(u + f);
  zero_masked_rows(out, layout);
  if (tape) {
    tape->ln1 = std::move(ln1);
    tape->ln2 = std::move(ln2);
    tape->h2 = std::move(h2);
    tape->ff_pre = std::move(ff_pre);
    tape->ff_cdf = std::move(ff_cdf);
    tape->ff_act = std::move(ff_act);
    tape->drop_attn = std::move(drop_attn);
    tape->drop_ff = std::move(drop_ff);
  }
  return out;
}

template <class T>
Matrix<T> transformer_layer_backward(Matrix<T> dout, const ListLayout& layout, const TransformerLayerParams<T>& p,
                                     const LayerOptions& opt, const LayerTape<T>& tape, TransformerLayerParams<T>& g) {
  zero_masked_rows(dout, layout);
  const bool printed = opt.residual == ResidualForm::printed;
  // printed: out = x + f(u); standard: out = u + f(u), so x only reaches out through u
  Matrix<T> dx = printed ? dout : Matrix<T>::Zero(dout.rows(), dout.cols());
  Matrix<T> du = printed ? Matrix<T>::Zero(dout.rows(), dout.cols()) : dout;
  Matrix<T> df = std::move(dout);
  apply_mask(df, tape.drop_ff);
  Matrix<T> dact = linear_backward(tape.ff_act, p.ff2_w, df, g.ff2_w, g.ff2_b);
  Matrix<T> dpre = gelu_backward(tape.ff_pre, tape.ff_cdf, dact);
  Matrix<T> dh2 = linear_backward(tape.h2, p.ff1_w, dpre, g.ff1_w, g.ff1_b);
  du += layer_norm_backward(dh2, p.ln2_scale, tape.ln2, g.ln2_scale, g.ln2_shift);
  dx += du;
  Matrix<T> da = std::move(du);
  apply_mask(da, tape.drop_attn);
  Matrix<T> dh1 = attention_backward(std::move(da), layout, p.attn, tape.attn, g.attn);
  dx += layer_norm_backward(dh1, p.ln1_scale, tape.ln1, g.ln1_scale, g.ln1_shift);
  return dx;
}

/// Single-list convenience for one layer.
template <class T>
Matrix<T> transformer_layer(const Matrix<T>& x, std::span<const unsigned char> mask, const TransformerLayerParams<T>& p,
                            const LayerOptions& opt = {}) {
  ListLayout layout{1, static_cast<std::size_t>(x.rows()), std::vector<unsigned char>(mask.begin(), mask.end())};
  return transformer_layer_forward(x, layout, p, opt, static_cast<LayerTape<T>*>(nullptr));
}

// ---------------------------------------------------------------------------
// RankFormer forward/backward over a padded batch.

struct ForwardOptions {
  bool train = false;
  std::uint64_t dropout_seed = 0;
};

template <class T>
struct RankFormerOutput {
  Matrix<T> scores;    // num_lists x max_len, zero at padded positions
  Matrix<T> listwide;  // num_lists x y_max, entries in (0, 1)
};

template <class T>
struct RankFormerTape {
  ListLayout layout;
  std::size_t max_len = 0;
  std::vector<Matrix<T>> layer_inputs;
  std::vector<LayerTape<T>> layers;
  Matrix<T> item_in, s_pre, s_cdf, s_act;
  Matrix<T> cls_in, d_pre, d_cdf, d_act;
  Matrix<T> listwide;
  LayerOptions layer_options;
};

template <class T>
RankFormerOutput<T> rankformer_forward(const Matrix<T>& features, std::span<const unsigned char> mask,
                                       std::size_t num_lists, std::size_t max_len, const RankFormerParams<T>& p,
                                       const ForwardOptions& opt, RankFormerTape<T>* tape = nullptr) {
  const auto d = static_cast<Eigen::Index>(p.dims.num_features);
  if (features.cols() != d)
    throw Error("rankformer: expected " + std::to_string(d) + " features, got " + std::to_string(features.cols()));
  if (max_len == 0) throw Error("rankformer: empty list");
  const std::size_t n = max_len + 1;  // items then CLS
  const auto L = static_cast<Eigen::Index>(max_len);
  const auto N = static_cast<Eigen::Index>(num_lists * n);

  ListLayout layout{num_lists, n, std::vector<unsigned char>(num_lists * n, 1)};
  Matrix<T> x(N, d);
  for (std::size_t b = 0; b < num_lists; ++b) {
    const auto base = static_cast<Eigen::Index>(b * n);
    x.block(base, 0, L, d) = features.block(static_cast<Eigen::Index>(b * max_len), 0, L, d);
    x.row(base + L) = p.cls.row(0);
    for (std::size_t i = 0; i < max_len; ++i) {
      layout.mask[b * n + i] = mask[b * max_len + i];
      if (!mask[b * max_len + i]) x.row(base + static_cast<Eigen::Index>(i)).setZero();
    }
  }

  CounterRng rng(opt.dropout_seed);
  LayerOptions lopt{p.dims.residual, p.dims.dropout, opt.train ? &rng : nullptr};
  if (tape) {
    tape->layer_inputs.clear();
    tape->layers.assign(p.layers.size(), LayerTape<T>{});
  }
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    if (tape) tape->layer_inputs.push_back(x);
    x = transformer_layer_forward(x, layout, p.layers[l], lopt, tape ? &tape->layers[l] : nullptr);
  }

  Matrix<T> item_in(static_cast<Eigen::Index>(num_lists * max_len), 2 * d);
  Matrix<T> cls_in(static_cast<Eigen::Index>(num_lists), d);
  for (std::size_t b = 0; b < num_lists; ++b) {
    const auto base = static_cast<Eigen::Index>(b * n);
    const auto out_base = static_cast<Eigen::Index>(b * max_len);
    item_in.block(out_base, 0, L, d) = x.block(base, 0, L, d);
    item_in.block(out_base, d, L, d) = x.row(base + L).replicate(L, 1);
    cls_in.row(static_cast<Eigen::Index>(b)) = x.row(base + L);
  }
  Matrix<T> s_pre = linear(item_in, p.score_w1, p.score_b1);
  Matrix<T> s_cdf = normal_cdf(s_pre);
  Matrix<T> s_act = s_pre.cwiseProduct(s_cdf);
  Matrix<T> s = linear(s_act, p.score_w2, p.score_b2);
  Matrix<T> d_pre = linear(cls_in, p.listwide_w1, p.listwide_b1);
  Matrix<T> d_cdf = normal_cdf(d_pre);
  Matrix<T> d_act = d_pre.cwiseProduct(d_cdf);
  Matrix<T> logits = linear(d_act, p.listwide_w2, p.listwide_b2);

  RankFormerOutput<T> out;
  out.scores = Matrix<T>::Zero(static_cast<Eigen::Index>(num_lists), L);
  for (std::size_t b = 0; b < num_lists; ++b)
    for (std::size_t i = 0; i < max_len; ++i)
      if (mask[b * max_len + i])
        out.scores(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)) =
            s(static_cast<Eigen::Index>(b * max_len + i), 0);
  out.listwide = logits.unaryExpr([](T v) { return sigmoid(v); });

  if (tape) {
    tape->layout = std::move(layout);
    tape->max_len = max_len;
    tape->item_in = std::move(item_in);
    tape->s_pre = std::move(s_pre);
    tape->s_cdf = std::move(s_cdf);
    tape->s_act = std::move(s_act);
    tape->cls_in = std::move(cls_in);
    tape->d_pre = std::move(d_pre);
    tape->d_cdf = std::move(d_cdf);
    tape->d_act = std::move(d_act);
    tape->listwide = out.listwide;
    tape->layer_options = LayerOptions{p.dims.residual, p.dims.dropout, nullptr};
  }
  return out;
}

template <class T>
RankFormerOutput<T> rankformer_forward(const Batch<T>& batch, const RankFormerParams<T>& p, const ForwardOptions& opt = {},
                                       RankFormerTape<T>* tape = nullptr) {
  return rankformer_forward(batch.features, batch.mask, batch.num_lists, batch.max_len, p, opt, tape);
}

/// Forward pass for a single unpadded list (n x d_x).
template <class T>
std::pair<Vector<T>, Vector<T>> rankformer_forward(const Matrix<T>& list_features, const RankFormerParams<T>& p,
                                                   const ForwardOptions& opt = {}) {
  if (list_features.rows() == 0) throw Error("rankformer: empty list");
  std::vector<unsigned char> mask(static_cast<std::size_t>(list_features.rows()), 1);
  auto out = rankformer_forward(list_features, mask, 1, mask.size(), p, opt);
  return {out.scores.row(0).transpose(), out.listwide.row(0).transpose()};
}

/// Backpropagates dL/dscores (num_lists x max_len) and dL/dlistwide
/// (num_lists x y_max) into `g`, which must be shaped like `p`.
template <class T>
void rankformer_backward(const Matrix<T>& dscores, const Matrix<T>& dlistwide, const RankFormerParams<T>& p,
                         const RankFormerTape<T>& tape, RankFormerParams<T>& g) {
  const auto d = static_cast<Eigen::Index>(p.dims.num_features);
  const std::size_t num_lists = tape.layout.num_lists;
  const std::size_t n = tape.layout.rows_per_list;
  const std::size_t max_len = tape.max_len;
  const auto L = static_cast<Eigen::Index>(max_len);

  Matrix<T> dlogits = dlistwide.array() * tape.listwide.array() * (T(1) - tape.listwide.array());
  Matrix<T> dd_act = linear_backward(tape.d_act, p.listwide_w2, dlogits, g.listwide_w2, g.listwide_b2);
  Matrix<T> dd_pre = gelu_backward(tape.d_pre, tape.d_cdf, dd_act);
  Matrix<T> dcls_in = linear_backward(tape.cls_in, p.listwide_w1, dd_pre, g.listwide_w1, g.listwide_b1);

  Matrix<T> ds(static_cast<Eigen::Index>(num_lists * max_len), 1);
  for (std::size_t b = 0; b < num_lists; ++b)
    for (std::size_t i = 0; i < max_len; ++i)
      ds(static_cast<Eigen::Index>(b * max_len + i), 0) =
          tape.layout.mask[b * n + i] ? dscores(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)) : T(0);
  Matrix<T> ds_act = linear_backward(tape.s_act, p.score_w2, ds, g.score_w2, g.score_b2);
  Matrix<T> ds_pre = gelu_backward(tape.s_pre, tape.s_cdf, ds_act);
  Matrix<T> ditem_in = linear_backward(tape.item_in, p.score_w1, ds_pre, g.score_w1, g.score_b1);

  Matrix<T> dx = Matrix<T>::Zero(static_cast<Eigen::Index>(num_lists * n), d);
  for (std::size_t b = 0; b < num_lists; ++b) {
    const auto base = static_cast<Eigen::Index>(b * n);
    const auto in_base = static_cast<Eigen::Index>(b * max_len);
    dx.block(base, 0, L, d) = ditem_in.block(in_base, 0, L, d);
    dx.row(base + L) = ditem_in.block(in_base, d, L, d).colwise().sum() + dcls_in.row(static_cast<Eigen::Index>(b));
  }
  for (std::size_t l = p.layers.size(); l-- > 0;)
    dx = transformer_layer_backward(std::move(dx), tape.layout, p.layers[l], tape.layer_options, tape.layers[l],
                                    g.layers[l]);
  for (std::size_t b = 0; b < num_lists; ++b) g.cls.row(0) += dx.row(static_cast<Eigen::Index>(b * n + max_len));
}

// ---------------------------------------------------------------------------
// MLP baseline: pointwise ReLU stack with dropout after each hidden layer.

template <class T>
struct MLPTape {
  std::vector<Matrix<T>> inputs, pre, drop;
  std::size_t num_lists = 0, max_len = 0;
  std::vector<unsigned char> mask;
};

template <class T>
Matrix<T> mlp_forward(const Matrix<T>& features, std::span<const unsigned char> mask, std::size_t num_lists,
                      std::size_t max_len, const MLPParams<T>& p, const ForwardOptions& opt, MLPTape<T>* tape = nullptr) {
  if (features.cols() != static_cast<Eigen::Index>(p.dims.num_features))
    throw Error("mlp: expected " + std::to_string(p.dims.num_features) + " features, got " +
                std::to_string(features.cols()));
  CounterRng rng(opt.dropout_seed);
  Matrix<T> h = features;
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
    tape->drop.clear();
  }
  const std::size_t last = p.weights.size() - 1;
  for (std::size_t l = 0; l < last; ++l) {
    Matrix<T> pre = linear(h, p.weights[l], p.biases[l]);
    Matrix<T> act = relu(pre);
    Matrix<T> drop = dropout_mask<T>(act.rows(), act.cols(), p.dims.dropout, opt.train ? &rng : nullptr);
    apply_mask(act, drop);
    if (tape) {
      tape->inputs.push_back(std::move(h));
      tape->pre.push_back(std::move(pre));
      tape->drop.push_back(std::move(drop));
    }
    h = std::move(act);
  }
  Matrix<T> s = linear(h, p.weights[last], p.biases[last]);
  if (tape) {
    tape->inputs.push_back(std::move(h));
    tape->num_lists = num_lists;
    tape->max_len = max_len;
    tape->mask.assign(mask.begin(), mask.end());
  }
  Matrix<T> scores = Matrix<T>::Zero(static_cast<Eigen::Index>(num_lists), static_cast<Eigen::Index>(max_len));
  for (std::size_t b = 0; b < num_lists; ++b)
    for (std::size_t i = 0; i < max_len; ++i)
      if (mask[b * max_len + i])
        scores(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)) = s(static_cast<Eigen::Index>(b * max_len + i), 0);
  return scores;
}

template <class T>
Matrix<T> mlp_forward(const Batch<T>& batch, const MLPParams<T>& p, const ForwardOptions& opt = {},
                      MLPTape<T>* tape = nullptr) {
  return mlp_forward(batch.features, batch.mask, batch.num_lists, batch.max_len, p, opt, tape);
}

template <class T>
Vector<T> mlp_forward(const Matrix<T>& list_features, const MLPParams<T>& p, const ForwardOptions& opt = {}) {
  std::vector<unsigned char> mask(static_cast<std::size_t>(list_features.rows()), 1);
  return mlp_forward(list_features, mask, 1, mask.size(), p, opt).row(0).transpose();
}

template <class T>
void mlp_backward(const Matrix<T>& dscores, const MLPParams<T>& p, const MLPTape<T>& tape, MLPParams<T>& g) {
  Matrix<T> dh(static_cast<Eigen::Index>(tape.num_lists * tape.max_len), 1);
  for (std::size_t b = 0; b < tape.num_lists; ++b)
    for (std::size_t i = 0; i < tape.max_len; ++i)
      dh(static_cast<Eigen::Index>(b * tape.max_len + i), 0) =
          tape.mask[b * tape.max_len + i] ? dscores(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)) : T(0);
  const std::size_t last = p.weights.size() - 1;
  dh = linear_backward(tape.inputs[last], p.weights[last], dh, g.weights[last], g.biases[last]);
  for (std::size_t l = last; l-- > 0;) {
    apply_mask(dh, tape.drop[l]);
    dh = relu_backward(tape.pre[l], dh);
    dh = linear_backward(tape.inputs[l], p.weights[l], dh, g.weights[l], g.biases[l]);
  }
}

}  // namespace rankformer
