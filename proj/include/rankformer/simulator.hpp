#pragma once

// Implicit-feedback simulation: selection (sub-sampling with bootstraps),
// intent (the maximal action a user will take on a list) and interaction
// (conversions first, then noisy clicks).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rankformer/common.hpp"
#include "rankformer/dataset.hpp"
#include "rankformer/rng.hpp"

namespace rankformer {

struct SimConfig {
  std::size_t max_list_size = 16;   // N_s
  std::size_t bootstraps = 10;      // N_b
  double conversion_rate = 0.1;     // kappa
  double click_noise = 0.1;         // epsilon
  int r_max = 4;
  int y_max = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_list_size < 1) throw Error("simulation: max_list_size must be >= 1");
    if (bootstraps < 1) throw Error("simulation: bootstraps must be >= 1");
    if (!(conversion_rate >= 0.0 && conversion_rate <= 1.0)) throw Error("simulation: kappa must lie in [0, 1]");
    if (!(click_noise >= 0.0 && click_noise <= 1.0)) throw Error("simulation: epsilon must lie in [0, 1]");
    if (r_max < 1) throw Error("simulation: r_max must be >= 1");
    if (y_max != 2) throw Error("simulation: the interaction cascade is defined for y_max = 2");
  }
};

/// Probability of relevance (2^r - 1) / (2^r_max - 1).
inline double relevance_prob(int r, int r_max) {
  if (r_max < 1) throw Error("relevance_prob: r_max must be >= 1");
  if (r < 0 || r > r_max)
    throw Error("relevance_prob: grade " + std::to_string(r) + " outside [0, " + std::to_string(r_max) + "]");
  return (std::ldexp(1.0, r) - 1.0) / (std::ldexp(1.0, r_max) - 1.0);
}

/// P(T = 0), P(T = 1), P(T = 2) for a list whose best grade is `max_grade`.
inline std::array<double, 3> intent_distribution(int max_grade, const SimConfig& cfg) {
  const double rho = relevance_prob(max_grade, cfg.r_max);
  return {1.0 - rho, (1.0 - cfg.conversion_rate) * rho, cfg.conversion_rate * rho};
}

/// One sampled list: a random subset of min(|J|, N_s) distinct items, or J
/// itself when it is short enough. Partial Fisher-Yates.
inline std::vector<std::size_t> select_sublist(std::size_t list_size, const SimConfig& cfg, CounterRng& rng) {
  std::vector<std::size_t> idx(list_size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (list_size <= cfg.max_list_size) return idx;
  for (std::size_t i = 0; i < cfg.max_list_size; ++i)
    std::swap(idx[i], idx[i + rng.uniform_int(list_size - i)]);
  idx.resize(cfg.max_list_size);
  return idx;
}

inline CounterRng simulation_stream(const SimConfig& cfg, const std::string& query_id, std::size_t bootstrap) {
  return CounterRng::derive(cfg.seed, hash_string(query_id), bootstrap);
}

/// N_b sampled lists (without labels) for one original list.
inline std::vector<RankedList> select_sublists(const RankedList& original, const SimConfig& cfg) {
  if (original.items.empty()) throw Error("select_sublists: list '" + original.key() + "' is empty");
  std::vector<RankedList> out;
  out.reserve(cfg.bootstraps);
  for (std::size_t b = 0; b < cfg.bootstraps; ++b) {
    auto rng = simulation_stream(cfg, original.query_id, b);
    RankedList sampled;
    sampled.query_id = original.query_id;
    sampled.bootstrap = static_cast<int>(b);
    for (std::size_t i : select_sublist(original.size(), cfg, rng)) {
      Item item = original.items[i];
      item.implicit.reset();
      sampled.items.push_back(std::move(item));
    }
    out.push_back(std::move(sampled));
  }
  return out;
}

/// Draws the intent T from one uniform; half-open intervals
/// [0, 1-rho) -> 0, [1-rho, 1-kappa*rho) -> 1, [1-kappa*rho, 1) -> 2.
inline int sample_intent(std::span<const int> relevance, const SimConfig& cfg, CounterRng& rng) {
  if (relevance.empty()) throw Error("sample_intent: empty label vector");
  const int best = *std::max_element(relevance.begin(), relevance.end());
  const auto p = intent_distribution(best, cfg);
  const double u = rng.uniform();
  if (u < p[0]) return 0;
  if (u < p[0] + p[1]) return 1;
  return 2;
}

/// Conversion is decided before the click; the conversion draw is only taken
/// when T = 2, and clicks carry noise epsilon while conversions carry none.
inline std::vector<int> sample_interactions(std::span<const int> relevance, int intent, const SimConfig& cfg,
                                            CounterRng& rng) {
  if (intent < 0 || intent > cfg.y_max) throw Error("sample_interactions: intent out of range");
  std::vector<int> y(relevance.size(), 0);
  for (std::size_t i = 0; i < relevance.size(); ++i) {
    const double rho = relevance_prob(relevance[i], cfg.r_max);
    if (intent == 2 && rho > rng.uniform()) {
      y[i] = 2;
    } else if (intent >= 1 && cfg.click_noise + (1.0 - cfg.click_noise) * rho > rng.uniform()) {
      y[i] = 1;
    } else {
      y[i] = 0;
    }
  }
  return y;
}

struct SimulatedList {
  RankedList list;
  int intent = 0;
};

/// Runs selection, intent and interaction for one original list. Each
/// bootstrap uses its own stream keyed by (seed, query_id, bootstrap).
inline std::vector<SimulatedList> simulate_list(const RankedList& original, const SimConfig& cfg) {
  if (original.items.empty()) throw Error("simulate: list '" + original.key() + "' is empty");
  std::vector<SimulatedList> out;
  out.reserve(cfg.bootstraps);
  std::vector<int> grades;
  for (std::size_t b = 0; b < cfg.bootstraps; ++b) {
    auto rng = simulation_stream(cfg, original.query_id, b);
    SimulatedList sim;
    sim.list.query_id = original.query_id;
    sim.list.bootstrap = static_cast<int>(b);
    for (std::size_t i : select_sublist(original.size(), cfg, rng)) sim.list.items.push_back(original.items[i]);
    grades.clear();
    for (const auto& it : sim.list.items) grades.push_back(it.relevance);
    sim.intent = sample_intent(grades, cfg, rng);
    const auto y = sample_interactions(grades, sim.intent, cfg, rng);
    for (std::size_t i = 0; i < y.size(); ++i) sim.list.items[i].implicit = y[i];
    sim.list.refresh_listwide();
    out.push_back(std::move(sim));
  }
  return out;
}

inline Split simulate(const Split& split, const SimConfig& cfg) {
  cfg.validate();
  validate_labels(split, cfg.r_max, cfg.y_max);
  Split out;
  out.num_features = split.num_features;
  out.lists.reserve(split.lists.size() * cfg.bootstraps);
  for (const auto& original : split.lists)
    for (auto& sim : simulate_list(original, cfg)) out.lists.push_back(std::move(sim.list));
  return out;
}

inline Dataset simulate(const Dataset& ds, const SimConfig& cfg) {
  Dataset out;
  out.num_features = ds.num_features;
  out.r_max = cfg.r_max;
  out.y_max = cfg.y_max;
  for (const auto& [name, split] : ds.splits) out.splits.emplace(name, simulate(split, cfg));
  return out;
}

/// Distribution of t and, per implicit label y, of the explicit grades.
struct SimulationSummary {
  std::size_t num_lists = 0;
  std::size_t num_items = 0;
  std::vector<std::size_t> listwide_counts;                  // index t
  std::vector<std::vector<std::size_t>> grade_counts;        // [y][r]

  void print(std::ostream& out) const {
    out << "lists " << num_lists << ", items " << num_items << '\n';
    out << "t distribution\n";
    for (std::size_t t = 0; t < listwide_counts.size(); ++t) {
      const double frac = num_lists ? static_cast<double>(listwide_counts[t]) / static_cast<double>(num_lists) : 0.0;
      char line[96];
      std::snprintf(line, sizeof(line), "  t=%zu  %8zu  %6.2f%%\n", t, listwide_counts[t], 100.0 * frac);
      out << line;
    }
    out << "explicit grade distribution per implicit label\n";
    for (std::size_t y = 0; y < grade_counts.size(); ++y) {
      std::size_t total = 0;
      for (auto c : grade_counts[y]) total += c;
      char head[48];
      std::snprintf(head, sizeof(head), "  y=%zu  n=%-8zu", y, total);
      out << head;
      for (std::size_t r = 0; r < grade_counts[y].size(); ++r) {
        const double frac = total ? static_cast<double>(grade_counts[y][r]) / static_cast<double>(total) : 0.0;
        char cell[32];
        std::snprintf(cell, sizeof(cell), " r=%zu:%5.1f%%", r, 100.0 * frac);
        out << cell;
      }
      out << '\n';
    }
  }
};

inline SimulationSummary summarize(const Split& split, int r_max, int y_max) {
  SimulationSummary s;
  s.listwide_counts.assign(static_cast<std::size_t>(y_max) + 1, 0);
  s.grade_counts.assign(static_cast<std::size_t>(y_max) + 1, std::vector<std::size_t>(static_cast<std::size_t>(r_max) + 1, 0));
  for (const auto& list : split.lists) {
    if (!list.listwide) throw Error("summarize: list '" + list.key() + "' has no implicit labels");
    ++s.num_lists;
    ++s.listwide_counts[static_cast<std::size_t>(*list.listwide)];
    for (const auto& it : list.items) {
      ++s.num_items;
      ++s.grade_counts[static_cast<std::size_t>(*it.implicit)][static_cast<std::size_t>(it.relevance)];
    }
  }
  return s;
}

}  // namespace rankformer
