#pragma once

// Ranking data: LETOR text parsing, the auxiliary implicit-labels file,
// per-feature transforms fitted on the training split, and padded batches.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "rankformer/common.hpp"
#include "rankformer/rng.hpp"

namespace rankformer {

struct Item {
  std::vector<double> features;
  int relevance = 0;              // explicit grade r
  std::optional<int> implicit;    // simulated feedback y

  bool operator==(const Item&) const = default;
};

struct RankedList {
  std::string query_id;
  std::optional<int> bootstrap;   // set for lists produced by the simulator
  std::vector<Item> items;
  std::optional<int> listwide;    // t = max_i y_i

  std::size_t size() const { return items.size(); }

  /// Identifier used in LETOR files: "<qid>" or "<qid>/<bootstrap>".
  std::string key() const {
    return bootstrap ? query_id + "/" + std::to_string(*bootstrap) : query_id;
  }

  bool has_implicit() const {
    return !items.empty() &&
           std::all_of(items.begin(), items.end(), [](const Item& it) { return it.implicit.has_value(); });
  }

  /// Recomputes t from the item labels; clears it if any label is missing.
  void refresh_listwide() {
    if (!has_implicit()) {
      listwide.reset();
      return;
    }
    int t = 0;
    for (const auto& it : items) t = std::max(t, *it.implicit);
    listwide = t;
  }

  bool operator==(const RankedList&) const = default;
};

struct Split {
  std::vector<RankedList> lists;
  std::size_t num_features = 0;

  std::size_t num_items() const {
    std::size_t n = 0;
    for (const auto& l : lists) n += l.size();
    return n;
  }

  bool operator==(const Split&) const = default;
};

struct Dataset {
  std::map<std::string, Split> splits;
  std::size_t num_features = 0;
  int r_max = 4;
  int y_max = 2;

  const Split& at(const std::string& name) const {
    auto it = splits.find(name);
    if (it == splits.end()) throw Error("dataset has no split named '" + name + "'");
    return it->second;
  }

  bool operator==(const Dataset&) const = default;
};

/// Pads every item of the split to `num_features` columns with zeros.
inline void resize_features(Split& split, std::size_t num_features) {
  if (num_features < split.num_features)
    throw Error("cannot shrink feature dimension from " + std::to_string(split.num_features) + " to " +
                std::to_string(num_features));
  for (auto& list : split.lists)
    for (auto& item : list.items) item.features.resize(num_features, 0.0);
  split.num_features = num_features;
}

/// Makes d_x identical across all splits (the largest seen).
inline void harmonize_features(Dataset& ds) {
  std::size_t d = ds.num_features;
  for (const auto& [_, s] : ds.splits) d = std::max(d, s.num_features);
  for (auto& [_, s] : ds.splits) resize_features(s, d);
  ds.num_features = d;
}

inline void validate_labels(const Split& split, int r_max, int y_max) {
  std::unordered_map<std::string, int> seen;
  for (const auto& list : split.lists) {
    if (list.items.empty()) throw Error("list '" + list.key() + "' is empty");
    if (!seen.emplace(list.key(), 0).second) throw Error("duplicate list id '" + list.key() + "'");
    for (const auto& item : list.items) {
      if (item.features.size() != split.num_features)
        throw Error("list '" + list.key() + "' has an item with the wrong feature count");
      for (double v : item.features)
        if (!std::isfinite(v)) throw Error("list '" + list.key() + "' has a non-finite feature");
      if (item.relevance < 0 || item.relevance > r_max)
        throw Error("list '" + list.key() + "': explicit label " + std::to_string(item.relevance) +
                    " outside [0, " + std::to_string(r_max) + "]");
      if (item.implicit && (*item.implicit < 0 || *item.implicit > y_max))
        throw Error("list '" + list.key() + "': implicit label " + std::to_string(*item.implicit) +
                    " outside [0, " + std::to_string(y_max) + "]");
    }
  }
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline void split_list_key(std::string_view token, std::string& qid, std::optional<int>& boot) {
  boot.reset();
  auto slash = token.rfind('/');
  if (slash != std::string_view::npos && slash > 0 && slash + 1 < token.size()) {
    int b = 0;
    if (parse_number(token.substr(slash + 1), b) && b >= 0) {
      qid = std::string(token.substr(0, slash));
      boot = b;
      return;
    }
  }
  qid = std::string(token);
}

}  // namespace detail

/// Parses `<label> qid:<id> <fid>:<val> ...` lines. Items are grouped by qid
/// in order of first appearance; absent features are 0.0; d_x is the largest
/// feature id seen (or `min_features` if larger). Text after '#' is ignored.
inline Split parse_letor(std::istream& in, std::size_t min_features = 0) {
  Split split;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::vector<std::pair<std::size_t, double>>> sparse_rows;
  std::vector<std::pair<std::size_t, std::size_t>> row_owner;  // (list, item)
  std::size_t max_fid = 0;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    auto tokens = detail::split_ws(view);
    if (tokens.empty()) continue;
    if (tokens.size() < 2) throw ParseError(line_no, "expected '<label> qid:<id> ...'");

    int label = 0;
    if (!parse_number(tokens[0], label)) throw ParseError(line_no, "invalid label '" + std::string(tokens[0]) + "'");
    if (label < 0) throw ParseError(line_no, "negative label");
    if (tokens[1].substr(0, 4) != "qid:" || tokens[1].size() == 4)
      throw ParseError(line_no, "expected 'qid:<id>', got '" + std::string(tokens[1]) + "'");

    std::string qid;
    std::optional<int> boot;
    detail::split_list_key(tokens[1].substr(4), qid, boot);
    const std::string key = boot ? qid + "/" + std::to_string(*boot) : qid;

    std::vector<std::pair<std::size_t, double>> row;
    for (std::size_t t = 2; t < tokens.size(); ++t) {
      auto colon = tokens[t].find(':');
      if (colon == std::string_view::npos) throw ParseError(line_no, "malformed feature '" + std::string(tokens[t]) + "'");
      std::size_t fid = 0;
      double val = 0.0;
      if (!parse_number(tokens[t].substr(0, colon), fid) || fid == 0)
        throw ParseError(line_no, "invalid feature id in '" + std::string(tokens[t]) + "'");
      if (!parse_number(tokens[t].substr(colon + 1), val) || !std::isfinite(val))
        throw ParseError(line_no, "invalid feature value in '" + std::string(tokens[t]) + "'");
      for (const auto& [f, _] : row)
        if (f == fid) throw ParseError(line_no, "duplicate feature id " + std::to_string(fid));
      row.emplace_back(fid, val);
      max_fid = std::max(max_fid, fid);
    }

    auto [it, inserted] = index.emplace(key, split.lists.size());
    if (inserted) {
      RankedList list;
      list.query_id = qid;
      list.bootstrap = boot;
      split.lists.push_back(std::move(list));
    }
    auto& list = split.lists[it->second];
    list.items.push_back(Item{{}, label, std::nullopt});
    row_owner.emplace_back(it->second, list.items.size() - 1);
    sparse_rows.push_back(std::move(row));
  }

  split.num_features = std::max(max_fid, min_features);
  for (std::size_t r = 0; r < sparse_rows.size(); ++r) {
    auto& item = split.lists[row_owner[r].first].items[row_owner[r].second];
    item.features.assign(split.num_features, 0.0);
    for (const auto& [fid, val] : sparse_rows[r]) item.features[fid - 1] = val;
  }
  return split;
}

inline Split parse_letor(std::string_view text, std::size_t min_features = 0) {
  std::istringstream in{std::string(text)};
  return parse_letor(in, min_features);
}

inline Split read_letor_file(const std::string& path, std::size_t min_features = 0) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return parse_letor(in, min_features);
  } catch (const ParseError& e) {
    throw e.in_file(path);
  }
}

/// Dense LETOR output; values use the shortest exact decimal form.
inline void write_letor(std::ostream& out, const Split& split) {
  std::string buf;
  for (const auto& list : split.lists) {
    const std::string key = list.key();
    for (const auto& item : list.items) {
      buf.clear();
      buf += std::to_string(item.relevance);
      buf += " qid:";
      buf += key;
      for (std::size_t f = 0; f < item.features.size(); ++f) {
        buf += ' ';
        buf += std::to_string(f + 1);
        buf += ':';
        buf += format_exact(item.features[f]);
      }
      buf += '\n';
      out << buf;
    }
  }
}

inline void write_letor_file(const std::string& path, const Split& split) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_letor(out, split);
}

// ---------------------------------------------------------------------------
// Implicit-labels file: one line per list, `<qid> <bootstrap_idx> <y_1> ... <y_n>`.

using ImplicitLabels = std::map<std::pair<std::string, int>, std::vector<int>>;

inline void write_implicit_labels(std::ostream& out, const Split& split) {
  for (const auto& list : split.lists) {
    if (!list.has_implicit()) throw Error("list '" + list.key() + "' has no implicit labels to write");
    out << list.query_id << ' ' << list.bootstrap.value_or(0);
    for (const auto& item : list.items) out << ' ' << *item.implicit;
    out << '\n';
  }
}

inline ImplicitLabels parse_implicit_labels(std::istream& in) {
  ImplicitLabels labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = detail::split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.size() < 3) throw ParseError(line_no, "expected '<qid> <bootstrap> <y_1> ...'");
    int boot = 0;
    if (!parse_number(tokens[1], boot) || boot < 0) throw ParseError(line_no, "invalid bootstrap index");
    std::vector<int> ys;
    for (std::size_t t = 2; t < tokens.size(); ++t) {
      int y = 0;
      if (!parse_number(tokens[t], y) || y < 0) throw ParseError(line_no, "invalid implicit label '" + std::string(tokens[t]) + "'");
      ys.push_back(y);
    }
    if (!labels.emplace(std::make_pair(std::string(tokens[0]), boot), std::move(ys)).second)
      throw ParseError(line_no, "duplicate entry for list " + std::string(tokens[0]) + "/" + std::to_string(boot));
  }
  return labels;
}

inline ImplicitLabels read_implicit_labels_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return parse_implicit_labels(in);
  } catch (const ParseError& e) {
    throw e.in_file(path);
  }
}

/// Joins labels onto the split by (query_id, bootstrap index) and sets t.
inline void attach_implicit_labels(Split& split, const ImplicitLabels& labels) {
  for (auto& list : split.lists) {
    auto it = labels.find({list.query_id, list.bootstrap.value_or(0)});
    if (it == labels.end()) throw Error("no implicit labels for list '" + list.key() + "'");
    if (it->second.size() != list.size())
      throw Error("implicit labels for list '" + list.key() + "' have length " + std::to_string(it->second.size()) +
                  ", expected " + std::to_string(list.size()));
    for (std::size_t i = 0; i < list.size(); ++i) list.items[i].implicit = it->second[i];
    list.refresh_listwide();
  }
}

// ---------------------------------------------------------------------------
// Feature transforms.

enum class TransformMode { none, standardize, quantile_normal };

inline std::string to_string(TransformMode m) {
  switch (m) {
    case TransformMode::none: return "none";
    case TransformMode::standardize: return "standardize";
    case TransformMode::quantile_normal: return "quantile_normal";
  }
  return "none";
}

inline TransformMode parse_transform_mode(std::string_view s) {
  if (s == "none") return TransformMode::none;
  if (s == "standardize") return TransformMode::standardize;
  if (s == "quantile_normal") return TransformMode::quantile_normal;
  throw Error("unknown transform mode '" + std::string(s) + "'");
}

inline constexpr double kStdFloor = 1e-8;

struct FeatureTransform {
  TransformMode mode = TransformMode::none;
  std::string fitted_on;
  std::size_t num_features = 0;

  // standardize
  std::vector<double> mean;
  std::vector<double> scale;

  // quantile_normal: sorted distinct training values per feature and the
  // number of training values <= each of them.
  std::size_t sample_count = 0;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<std::size_t>> cumulative;

  double apply(std::size_t f, double x) const {
    switch (mode) {
      case TransformMode::none:
        return x;
      case TransformMode::standardize:
        return (x - mean[f]) / scale[f];
      case TransformMode::quantile_normal: {
        const auto& v = values[f];
        const auto& c = cumulative[f];
        const auto lo = static_cast<std::size_t>(std::lower_bound(v.begin(), v.end(), x) - v.begin());
        const double less = lo == 0 ? 0.0 : static_cast<double>(c[lo - 1]);
        const double equal = (lo < v.size() && v[lo] == x) ? static_cast<double>(c[lo]) - less : 0.0;
        // Mid-rank empirical CDF on the (n+1) grid.
        const double n = static_cast<double>(sample_count);
        double u = (less + 0.5 * (equal + 1.0)) / (n + 1.0);
        u = std::clamp(u, 1.0 / (n + 1.0), n / (n + 1.0));
        return boost::math::quantile(boost::math::normal_distribution<double>(), u);
      }
    }
    return x;
  }

  /// Inverse of the standardize map; other modes are not invertible here.
  double invert(std::size_t f, double z) const {
    if (mode == TransformMode::none) return z;
    if (mode != TransformMode::standardize) throw Error("only standardize transforms are invertible");
    return mean[f] + scale[f] * z;
  }
};

inline FeatureTransform fit_transform(const Split& train, TransformMode mode, std::string fitted_on = "train") {
  const std::size_t n = train.num_items();
  if (n == 0) throw Error("cannot fit a feature transform on an empty split");
  FeatureTransform tr;
  tr.mode = mode;
  tr.fitted_on = std::move(fitted_on);
  tr.num_features = train.num_features;
  const std::size_t d = train.num_features;

  if (mode == TransformMode::standardize) {
    tr.mean.assign(d, 0.0);
    tr.scale.assign(d, 0.0);
    for (const auto& l : train.lists)
      for (const auto& it : l.items)
        for (std::size_t f = 0; f < d; ++f) tr.mean[f] += it.features[f];
    for (auto& m : tr.mean) m /= static_cast<double>(n);
    for (const auto& l : train.lists)
      for (const auto& it : l.items)
        for (std::size_t f = 0; f < d; ++f) {
          const double c = it.features[f] - tr.mean[f];
          tr.scale[f] += c * c;
        }
    for (auto& s : tr.scale) s = std::max(std::sqrt(s / static_cast<double>(n)), kStdFloor);
  } else if (mode == TransformMode::quantile_normal) {
    tr.sample_count = n;
    tr.values.resize(d);
    tr.cumulative.resize(d);
    std::vector<double> col(n);
    for (std::size_t f = 0; f < d; ++f) {
      std::size_t k = 0;
      for (const auto& l : train.lists)
        for (const auto& it : l.items) col[k++] = it.features[f];
      std::sort(col.begin(), col.end());
      for (std::size_t i = 0; i < n; ++i) {
        if (tr.values[f].empty() || tr.values[f].back() != col[i]) {
          tr.values[f].push_back(col[i]);
          tr.cumulative[f].push_back(i + 1);
        } else {
          tr.cumulative[f].back() = i + 1;
        }
      }
    }
  }
  return tr;
}

inline Split apply_transform(const FeatureTransform& tr, const Split& split) {
  if (split.num_features != tr.num_features)
    throw Error("feature transform expects " + std::to_string(tr.num_features) + " features, split has " +
                std::to_string(split.num_features));
  Split out = split;
  if (tr.mode == TransformMode::none) return out;
  for (auto& l : out.lists)
    for (auto& it : l.items)
      for (std::size_t f = 0; f < tr.num_features; ++f) it.features[f] = tr.apply(f, it.features[f]);
  return out;
}

inline void write_transform(std::ostream& out, const FeatureTransform& tr) {
  out << "feature-transform 1\n";
  out << "mode " << to_string(tr.mode) << '\n';
  out << "fitted_on " << (tr.fitted_on.empty() ? "-" : tr.fitted_on) << '\n';
  out << "num_features " << tr.num_features << '\n';
  if (tr.mode == TransformMode::standardize) {
    out << "mean";
    for (double v : tr.mean) out << ' ' << format_exact(v);
    out << "\nscale";
    for (double v : tr.scale) out << ' ' << format_exact(v);
    out << '\n';
  } else if (tr.mode == TransformMode::quantile_normal) {
    out << "sample_count " << tr.sample_count << '\n';
    for (std::size_t f = 0; f < tr.num_features; ++f) {
      out << "feature " << f << ' ' << tr.values[f].size();
      for (std::size_t i = 0; i < tr.values[f].size(); ++i)
        out << ' ' << format_exact(tr.values[f][i]) << ' ' << tr.cumulative[f][i];
      out << '\n';
    }
  }
}

inline FeatureTransform read_transform(std::istream& in) {
  FeatureTransform tr;
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != "feature-transform" || version != 1)
    throw Error("not a feature-transform file (version 1)");
  auto expect = [&](const char* key) {
    if (!(in >> word) || word != key) throw Error(std::string("feature-transform: expected '") + key + "'");
  };
  expect("mode");
  in >> word;
  tr.mode = parse_transform_mode(word);
  expect("fitted_on");
  in >> tr.fitted_on;
  expect("num_features");
  in >> tr.num_features;
  auto read_vec = [&](const char* key, std::vector<double>& v) {
    expect(key);
    v.resize(tr.num_features);
    for (auto& x : v) {
      in >> word;
      if (!parse_number(word, x)) throw Error("feature-transform: bad number '" + word + "'");
    }
  };
  if (tr.mode == TransformMode::standardize) {
    read_vec("mean", tr.mean);
    read_vec("scale", tr.scale);
  } else if (tr.mode == TransformMode::quantile_normal) {
    expect("sample_count");
    in >> tr.sample_count;
    tr.values.resize(tr.num_features);
    tr.cumulative.resize(tr.num_features);
    for (std::size_t f = 0; f < tr.num_features; ++f) {
      std::size_t idx = 0, k = 0;
      expect("feature");
      in >> idx >> k;
      if (idx != f) throw Error("feature-transform: features out of order");
      tr.values[f].resize(k);
      tr.cumulative[f].resize(k);
      for (std::size_t i = 0; i < k; ++i) {
        in >> word >> tr.cumulative[f][i];
        if (!parse_number(word, tr.values[f][i])) throw Error("feature-transform: bad number '" + word + "'");
      }
    }
  }
  if (!in) throw Error("feature-transform: truncated file");
  return tr;
}

// ---------------------------------------------------------------------------
// Padded batches.

template <class T>
struct Batch {
  std::size_t num_lists = 0;
  std::size_t max_len = 0;
  std::size_t num_features = 0;
  Matrix<T> features;               // (num_lists * max_len) x num_features, pads are zero rows
  std::vector<unsigned char> mask;  // num_lists * max_len, 1 marks a real item
  Matrix<T> relevance;              // num_lists x max_len
  Matrix<T> implicit;               // num_lists x max_len, zeros when absent
  std::vector<int> listwide;        // -1 when absent
  std::vector<std::size_t> lengths;
  std::vector<std::string> query_ids;
  std::vector<std::optional<int>> bootstraps;
  bool has_implicit = false;

  std::string list_key(std::size_t b) const {
    return bootstraps[b] ? query_ids[b] + "/" + std::to_string(*bootstraps[b]) : query_ids[b];
  }
};

template <class T>
Batch<T> make_batch(std::span<const RankedList* const> lists, std::size_t num_features) {
  Batch<T> batch;
  batch.num_lists = lists.size();
  batch.num_features = num_features;
  for (const auto* l : lists) batch.max_len = std::max(batch.max_len, l->size());
  const std::size_t L = batch.max_len;
  batch.features = Matrix<T>::Zero(static_cast<Eigen::Index>(batch.num_lists * L), static_cast<Eigen::Index>(num_features));
  batch.mask.assign(batch.num_lists * L, 0);
  batch.relevance = Matrix<T>::Zero(static_cast<Eigen::Index>(batch.num_lists), static_cast<Eigen::Index>(L));
  batch.implicit = Matrix<T>::Zero(static_cast<Eigen::Index>(batch.num_lists), static_cast<Eigen::Index>(L));
  batch.has_implicit = !lists.empty();
  for (std::size_t b = 0; b < lists.size(); ++b) {
    const RankedList& list = *lists[b];
    if (list.items.empty()) throw Error("cannot batch empty list '" + list.key() + "'");
    batch.lengths.push_back(list.size());
    batch.query_ids.push_back(list.query_id);
    batch.bootstraps.push_back(list.bootstrap);
    const bool implicit = list.has_implicit();
    batch.has_implicit = batch.has_implicit && implicit;
    int t = -1;
    if (list.listwide) t = *list.listwide;
    batch.listwide.push_back(t);
    for (std::size_t i = 0; i < list.size(); ++i) {
      const auto& item = list.items[i];
      if (item.features.size() != num_features) throw Error("list '" + list.key() + "' has the wrong feature count");
      const auto row = static_cast<Eigen::Index>(b * L + i);
      for (std::size_t f = 0; f < num_features; ++f)
        batch.features(row, static_cast<Eigen::Index>(f)) = static_cast<T>(item.features[f]);
      batch.mask[b * L + i] = 1;
      batch.relevance(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)) = static_cast<T>(item.relevance);
      if (item.implicit)
        batch.implicit(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)) = static_cast<T>(*item.implicit);
    }
  }
  return batch;
}

/// Groups lists into padded batches of at most `batch_size` lists. With a
/// shuffle seed the list order is a deterministic permutation of the input.
template <class T>
std::vector<Batch<T>> batch_lists(std::span<const RankedList> lists, std::size_t batch_size,
                                  std::optional<std::uint64_t> shuffle_seed = std::nullopt) {
  if (batch_size == 0) throw Error("batch_size must be at least 1");
  std::vector<const RankedList*> order;
  order.reserve(lists.size());
  for (const auto& l : lists) order.push_back(&l);
  if (shuffle_seed) {
    CounterRng rng(*shuffle_seed);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
  }
  std::size_t d = 0;
  if (!lists.empty()) d = lists.front().items.empty() ? 0 : lists.front().items.front().features.size();
  std::vector<Batch<T>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    out.push_back(make_batch<T>(std::span<const RankedList* const>(order.data() + start, end - start), d));
  }
  return out;
}

/// Mask-filtered read-back of a batch.
template <class T>
std::vector<RankedList> unbatch(const Batch<T>& batch) {
  std::vector<RankedList> out(batch.num_lists);
  for (std::size_t b = 0; b < batch.num_lists; ++b) {
    RankedList& list = out[b];
    list.query_id = batch.query_ids[b];
    list.bootstrap = batch.bootstraps[b];
    for (std::size_t i = 0; i < batch.max_len; ++i) {
      if (!batch.mask[b * batch.max_len + i]) continue;
      Item item;
      const auto row = static_cast<Eigen::Index>(b * batch.max_len + i);
      item.features.resize(batch.num_features);
      for (std::size_t f = 0; f < batch.num_features; ++f)
        item.features[f] = static_cast<double>(batch.features(row, static_cast<Eigen::Index>(f)));
      item.relevance = static_cast<int>(batch.relevance(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)));
      if (batch.listwide[b] >= 0)
        item.implicit = static_cast<int>(batch.implicit(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)));
      list.items.push_back(std::move(item));
    }
    if (batch.listwide[b] >= 0) list.listwide = batch.listwide[b];
  }
  return out;
}

}  // namespace rankformer
