#pragma once

// NDCG@k with exclusion of constant-label lists, per-split reports
// (NDCG^y, NDCG^r, purchase slice) and mean +/- standard error across seeds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rankformer/common.hpp"
#include "rankformer/dataset.hpp"
#include "rankformer/rng.hpp"

namespace rankformer {

enum class Gain { exponential, linear };

inline std::string to_string(Gain g) { return g == Gain::exponential ? "exponential" : "linear"; }

inline Gain parse_gain(std::string_view s) {
  if (s == "exponential") return Gain::exponential;
  if (s == "linear") return Gain::linear;
  throw Error("unknown gain '" + std::string(s) + "'");
}

inline double gain_value(double label, Gain g) { return g == Gain::exponential ? std::exp2(label) - 1.0 : label; }

/// DCG@k / IDCG@k. Items are ranked by descending score, ties by ascending
/// index. Returns nullopt (excluded) when the labels are constant.
template <class S, class L>
std::optional<double> ndcg_at_k(std::span<const S> scores, std::span<const L> labels, std::size_t k,
                                Gain gain = Gain::exponential) {
  if (scores.size() != labels.size())
    throw Error("ndcg_at_k: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) + " labels");
  if (k == 0) throw Error("ndcg_at_k: k must be >= 1");
  const std::size_t n = labels.size();
  if (n == 0) return std::nullopt;
  if (std::all_of(labels.begin(), labels.end(), [&](L l) { return l == labels[0]; })) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<double> ideal(n);
  for (std::size_t i = 0; i < n; ++i) ideal[i] = static_cast<double>(labels[i]);
  std::sort(ideal.begin(), ideal.end(), std::greater<>());

  const std::size_t depth = std::min(k, n);
  double dcg = 0.0, idcg = 0.0;
  for (std::size_t r = 0; r < depth; ++r) {
    const double discount = 1.0 / std::log2(static_cast<double>(r) + 2.0);
    dcg += gain_value(static_cast<double>(labels[order[r]]), gain) * discount;
    idcg += gain_value(ideal[r], gain) * discount;
  }
  if (idcg <= 0.0) return std::nullopt;
  return dcg / idcg;
}

template <class S, class L>
std::optional<double> ndcg_at_k(const std::vector<S>& scores, const std::vector<L>& labels, std::size_t k,
                                Gain gain = Gain::exponential) {
  return ndcg_at_k(std::span<const S>(scores), std::span<const L>(labels), k, gain);
}

struct MetricCount {
  std::size_t evaluated = 0;
  std::size_t excluded = 0;
};

struct MetricsReport {
  std::size_t k = 10;
  std::size_t total_lists = 0;
  std::optional<double> ndcg_y;           // x100
  std::optional<double> ndcg_r;           // x100
  std::optional<double> ndcg_y_purchase;  // x100, lists with t = y_max
  MetricCount y, r, purchase;
  std::size_t purchase_lists = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    auto put = [&](const char* key, const std::optional<double>& v) {
      if (v)
        j[key] = *v;
      else
        j[key] = nullptr;
    };
    j["k"] = k;
    j["total_lists"] = total_lists;
    put("ndcg_y", ndcg_y);
    put("ndcg_r", ndcg_r);
    put("ndcg_y_purchase", ndcg_y_purchase);
    j["ndcg_y_evaluated"] = y.evaluated;
    j["ndcg_y_excluded"] = y.excluded;
    j["ndcg_r_evaluated"] = r.evaluated;
    j["ndcg_r_excluded"] = r.excluded;
    j["purchase_lists"] = purchase_lists;
    j["ndcg_y_purchase_evaluated"] = purchase.evaluated;
    j["ndcg_y_purchase_excluded"] = purchase.excluded;
    return j;
  }

  static MetricsReport from_json(const nlohmann::json& j) {
    MetricsReport m;
    auto get = [&](const char* key) -> std::optional<double> {
      if (!j.contains(key) || j[key].is_null()) return std::nullopt;
      return j[key].get<double>();
    };
    m.k = j.at("k").get<std::size_t>();
    m.total_lists = j.at("total_lists").get<std::size_t>();
    m.ndcg_y = get("ndcg_y");
    m.ndcg_r = get("ndcg_r");
    m.ndcg_y_purchase = get("ndcg_y_purchase");
    m.y = {j.at("ndcg_y_evaluated").get<std::size_t>(), j.at("ndcg_y_excluded").get<std::size_t>()};
    m.r = {j.at("ndcg_r_evaluated").get<std::size_t>(), j.at("ndcg_r_excluded").get<std::size_t>()};
    m.purchase_lists = j.at("purchase_lists").get<std::size_t>();
    m.purchase = {j.at("ndcg_y_purchase_evaluated").get<std::size_t>(),
                  j.at("ndcg_y_purchase_excluded").get<std::size_t>()};
    return m;
  }
};

namespace detail {

struct MeanAccumulator {
  double sum = 0.0;
  MetricCount count;

  void add(const std::optional<double>& v) {
    if (v) {
      sum += *v;
      ++count.evaluated;
    } else {
      ++count.excluded;
    }
  }

  std::optional<double> mean() const {
    if (count.evaluated == 0) return std::nullopt;
    return 100.0 * sum / static_cast<double>(count.evaluated);
  }
};

}  // namespace detail

/// Scores one split. `scores[i]` holds the model scores of `split.lists[i]`.
inline MetricsReport evaluate(const Split& split, const std::vector<std::vector<double>>& scores, std::size_t k,
                              int y_max, Gain gain = Gain::exponential) {
  if (scores.size() != split.lists.size())
    throw Error("evaluate: " + std::to_string(scores.size()) + " score vectors for " +
                std::to_string(split.lists.size()) + " lists");
  MetricsReport report;
  report.k = k;
  report.total_lists = split.lists.size();
  detail::MeanAccumulator acc_y, acc_r, acc_p;
  std::vector<int> y, r;
  for (std::size_t i = 0; i < split.lists.size(); ++i) {
    const RankedList& list = split.lists[i];
    if (!list.has_implicit()) throw Error("evaluate: list '" + list.key() + "' has no implicit labels");
    y.clear();
    r.clear();
    for (const auto& it : list.items) {
      y.push_back(*it.implicit);
      r.push_back(it.relevance);
    }
    const auto ny = ndcg_at_k(std::span<const double>(scores[i]), std::span<const int>(y), k, gain);
    acc_y.add(ny);
    acc_r.add(ndcg_at_k(std::span<const double>(scores[i]), std::span<const int>(r), k, gain));
    if (*std::max_element(y.begin(), y.end()) == y_max) {
      ++report.purchase_lists;
      acc_p.add(ny);
    }
  }
  report.ndcg_y = acc_y.mean();
  report.ndcg_r = acc_r.mean();
  report.ndcg_y_purchase = acc_p.mean();
  report.y = acc_y.count;
  report.r = acc_r.count;
  report.purchase = acc_p.count;
  return report;
}

/// Mean NDCG^y@k (x100) when every list is ordered by a uniformly random
/// permutation, averaged over `shuffles` draws.
inline double random_baseline_ndcg(const Split& split, std::size_t k, std::size_t shuffles, std::uint64_t seed,
                                   Gain gain = Gain::exponential) {
  if (shuffles == 0) throw Error("random_baseline_ndcg: shuffles must be >= 1");
  double total = 0.0;
  std::size_t evaluated = 0;
  std::vector<int> y;
  std::vector<double> s;
  for (std::size_t i = 0; i < split.lists.size(); ++i) {
    const RankedList& list = split.lists[i];
    if (!list.has_implicit()) throw Error("random_baseline_ndcg: list '" + list.key() + "' has no implicit labels");
    y.clear();
    for (const auto& it : list.items) y.push_back(*it.implicit);
    if (std::all_of(y.begin(), y.end(), [&](int v) { return v == y[0]; })) continue;
    auto rng = CounterRng::derive(seed, i);
    double sum = 0.0;
    s.resize(y.size());
    for (std::size_t draw = 0; draw < shuffles; ++draw) {
      std::iota(s.begin(), s.end(), 0.0);
      for (std::size_t j = s.size(); j > 1; --j) std::swap(s[j - 1], s[rng.uniform_int(j)]);
      sum += *ndcg_at_k(std::span<const double>(s), std::span<const int>(y), k, gain);
    }
    total += sum / static_cast<double>(shuffles);
    ++evaluated;
  }
  if (evaluated == 0) throw Error("random_baseline_ndcg: no list with non-constant labels");
  return 100.0 * total / static_cast<double>(evaluated);
}

struct MeanSE {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
};

/// Mean and standard error (sample standard deviation / sqrt(n)); the error is
/// 0 for a single run.
inline std::optional<MeanSE> mean_se(const std::vector<double>& values) {
  if (values.empty()) return std::nullopt;
  MeanSE out;
  out.n = values.size();
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(out.n);
  if (out.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stderr_ = std::sqrt(ss / static_cast<double>(out.n - 1)) / std::sqrt(static_cast<double>(out.n));
  }
  return out;
}

struct AggregateReport {
  std::size_t runs = 0;
  std::map<std::string, std::optional<MeanSE>> metrics;  // ndcg_y, ndcg_r, ndcg_y_purchase

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["runs"] = runs;
    for (const auto& [name, v] : metrics) {
      if (!v) {
        j[name] = nullptr;
        continue;
      }
      j[name] = {{"mean", v->mean}, {"stderr", v->stderr_}, {"n", v->n}};
    }
    return j;
  }

  std::string table() const {
    std::ostringstream out;
    char line[128];
    std::snprintf(line, sizeof(line), "%-18s %18s %6s\n", "metric", "mean +/- se", "runs");
    out << line;
    for (const char* name : {"ndcg_y", "ndcg_r", "ndcg_y_purchase"}) {
      auto it = metrics.find(name);
      if (it == metrics.end() || !it->second) {
        std::snprintf(line, sizeof(line), "%-18s %18s %6d\n", name, "-", 0);
      } else {
        char cell[48];
        std::snprintf(cell, sizeof(cell), "%.2f +/- %.2f", it->second->mean, it->second->stderr_);
        std::snprintf(line, sizeof(line), "%-18s %18s %6zu\n", name, cell, it->second->n);
      }
      out << line;
    }
    return out.str();
  }
};

inline AggregateReport aggregate_reports(const std::vector<MetricsReport>& reports) {
  AggregateReport agg;
  agg.runs = reports.size();
  std::vector<double> y, r, p;
  for (const auto& rep : reports) {
    if (rep.ndcg_y) y.push_back(*rep.ndcg_y);
    if (rep.ndcg_r) r.push_back(*rep.ndcg_r);
    if (rep.ndcg_y_purchase) p.push_back(*rep.ndcg_y_purchase);
  }
  agg.metrics["ndcg_y"] = mean_se(y);
  agg.metrics["ndcg_r"] = mean_se(r);
  agg.metrics["ndcg_y_purchase"] = mean_se(p);
  return agg;
}

inline std::string render_table(const MetricsReport& m) {
  std::ostringstream out;
  char line[128];
  auto row = [&](const char* name, const std::optional<double>& v, const MetricCount& c) {
    if (v)
      std::snprintf(line, sizeof(line), "%-18s %8.2f %10zu %10zu\n", name, *v, c.evaluated, c.excluded);
    else
      std::snprintf(line, sizeof(line), "%-18s %8s %10zu %10zu\n", name, "-", c.evaluated, c.excluded);
    out << line;
  };
  std::snprintf(line, sizeof(line), "%-18s %8s %10s %10s\n", "metric", "x100", "evaluated", "excluded");
  out << line;
  row("ndcg_y", m.ndcg_y, m.y);
  row("ndcg_r", m.ndcg_r, m.r);
  row("ndcg_y_purchase", m.ndcg_y_purchase, m.purchase);
  return out.str();
}

}  // namespace rankformer
