#pragma once

// Versioned text checkpoints: a header with the model dimensions, then one
// line per tensor `name rows cols values...` in shortest round-trip form.

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>

#include "rankformer/common.hpp"
#include "rankformer/model.hpp"

namespace rankformer {

enum class Precision { single, double_ };

inline std::string to_string(Precision p) { return p == Precision::single ? "single" : "double"; }

inline Precision parse_precision(std::string_view s) {
  if (s == "single") return Precision::single;
  if (s == "double") return Precision::double_;
  throw Error("unknown precision '" + std::string(s) + "'");
}

template <class T>
constexpr Precision precision_of() {
  return std::is_same_v<T, float> ? Precision::single : Precision::double_;
}

using AnyModel = std::variant<RankFormerParams<float>, RankFormerParams<double>, MLPParams<float>, MLPParams<double>>;

namespace detail {

template <class P>
void write_tensors(std::ostream& out, const P& params) {
  out << "tensors " << parameter_count(params) << '\n';
  for_each_tensor(params, [&](const std::string& name, const auto& t) {
    out << name << ' ' << t.rows() << ' ' << t.cols();
    for (Eigen::Index i = 0; i < t.size(); ++i) out << ' ' << format_exact(t.data()[i]);
    out << '\n';
  });
}

template <class P>
void read_tensors(std::istream& in, P& params) {
  std::string word;
  std::size_t total = 0;
  if (!(in >> word >> total) || word != "tensors") throw Error("checkpoint: missing tensor section");
  if (total != parameter_count(params))
    throw Error("checkpoint: " + std::to_string(total) + " values stored, model expects " +
                std::to_string(parameter_count(params)));
  for_each_tensor(params, [&](const std::string& name, auto& t) {
    std::string got;
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> got >> rows >> cols)) throw Error("checkpoint: truncated before tensor '" + name + "'");
    if (got != name) throw Error("checkpoint: expected tensor '" + name + "', found '" + got + "'");
    if (rows != t.rows() || cols != t.cols())
      throw Error("checkpoint: tensor '" + name + "' has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                  ", expected " + std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
    std::string token;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      if (!(in >> token)) throw Error("checkpoint: truncated inside tensor '" + name + "'");
      if (!parse_number(token, t.data()[i])) throw Error("checkpoint: bad value '" + token + "' in '" + name + "'");
    }
  });
}

template <class V>
V expect_field(std::istream& in, const char* key) {
  std::string word;
  V value{};
  if (!(in >> word) || word != key) throw Error(std::string("checkpoint: expected field '") + key + "'");
  if (!(in >> value)) throw Error(std::string("checkpoint: bad value for '") + key + "'");
  return value;
}

}  // namespace detail

template <class T>
void write_checkpoint(std::ostream& out, const RankFormerParams<T>& p) {
  const auto& d = p.dims;
  out << "rankformer-checkpoint 1\n";
  out << "model rankformer\n";
  out << "precision " << to_string(precision_of<T>()) << '\n';
  out << "num_features " << d.num_features << '\n';
  out << "num_layers " << d.num_layers << '\n';
  out << "num_heads " << d.num_heads << '\n';
  out << "dim_ff " << d.dim_ff << '\n';
  out << "head_hidden " << d.head_hidden << '\n';
  out << "y_max " << d.y_max << '\n';
  out << "dropout " << format_exact(d.dropout) << '\n';
  out << "residual " << to_string(d.residual) << '\n';
  detail::write_tensors(out, p);
}

template <class T>
void write_checkpoint(std::ostream& out, const MLPParams<T>& p) {
  out << "rankformer-checkpoint 1\n";
  out << "model mlp\n";
  out << "precision " << to_string(precision_of<T>()) << '\n';
  out << "num_features " << p.dims.num_features << '\n';
  out << "hidden " << p.dims.hidden.size();
  for (auto h : p.dims.hidden) out << ' ' << h;
  out << '\n';
  out << "dropout " << format_exact(p.dims.dropout) << '\n';
  detail::write_tensors(out, p);
}

inline void write_checkpoint(std::ostream& out, const AnyModel& m) {
  std::visit([&](const auto& p) { write_checkpoint(out, p); }, m);
}

template <class P>
void write_checkpoint_file(const std::string& path, const P& params) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_checkpoint(out, params);
  if (!out) throw Error("write failed for '" + path + "'");
}

inline AnyModel read_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "rankformer-checkpoint")
    throw Error("checkpoint: not a rankformer checkpoint");
  if (version != 1) throw Error("checkpoint: unsupported version " + std::to_string(version));
  const auto kind = detail::expect_field<std::string>(in, "model");
  const auto precision = parse_precision(detail::expect_field<std::string>(in, "precision"));
  if (kind == "rankformer") {
    RankFormerDims d;
    d.num_features = detail::expect_field<std::size_t>(in, "num_features");
    d.num_layers = detail::expect_field<std::size_t>(in, "num_layers");
    d.num_heads = detail::expect_field<std::size_t>(in, "num_heads");
    d.dim_ff = detail::expect_field<std::size_t>(in, "dim_ff");
    d.head_hidden = detail::expect_field<std::size_t>(in, "head_hidden");
    d.y_max = detail::expect_field<std::size_t>(in, "y_max");
    if (!parse_number(detail::expect_field<std::string>(in, "dropout"), d.dropout))
      throw Error("checkpoint: bad dropout");
    d.residual = parse_residual_form(detail::expect_field<std::string>(in, "residual"));
    if (precision == Precision::single) {
      auto p = init_rankformer<float>(d, 0);
      detail::read_tensors(in, p);
      return p;
    }
    auto p = init_rankformer<double>(d, 0);
    detail::read_tensors(in, p);
    return p;
  }
  if (kind == "mlp") {
    MLPDims d;
    d.num_features = detail::expect_field<std::size_t>(in, "num_features");
    const auto n = detail::expect_field<std::size_t>(in, "hidden");
    d.hidden.resize(n);
    for (auto& h : d.hidden)
      if (!(in >> h)) throw Error("checkpoint: bad hidden widths");
    if (!parse_number(detail::expect_field<std::string>(in, "dropout"), d.dropout))
      throw Error("checkpoint: bad dropout");
    if (precision == Precision::single) {
      auto p = init_mlp<float>(d, 0);
      detail::read_tensors(in, p);
      return p;
    }
    auto p = init_mlp<double>(d, 0);
    detail::read_tensors(in, p);
    return p;
  }
  throw Error("checkpoint: unknown model kind '" + kind + "'");
}

inline AnyModel read_checkpoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return read_checkpoint(in);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

inline std::string checkpoint_string(const AnyModel& m) {
  std::ostringstream out;
  write_checkpoint(out, m);
  return out.str();
}

}  // namespace rankformer
