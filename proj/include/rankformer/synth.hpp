#pragma once

// Synthetic LETOR corpus: a hidden linear score plus noise, binned into
// grades 0..4 by population quintiles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "rankformer/common.hpp"
#include "rankformer/dataset.hpp"
#include "rankformer/rng.hpp"

namespace rankformer {

struct SynthConfig {
  std::size_t train_lists = 2000;
  std::size_t valid_lists = 500;
  std::size_t test_lists = 500;
  std::size_t list_len = 16;
  std::size_t num_features = 10;
  double noise = 0.5;        // sd of the additive score noise
  double list_spread = 0.5;  // sd of the per-list feature offset
  std::uint64_t seed = 0;

  void validate() const {
    if (train_lists == 0) throw Error("synth: train_lists must be positive");
    if (list_len == 0) throw Error("synth: list_len must be positive");
    if (num_features == 0) throw Error("synth: num_features must be positive");
    if (!(noise >= 0.0) || !(list_spread >= 0.0)) throw Error("synth: noise and list_spread must be >= 0");
  }
};

inline constexpr int kSynthGrades = 5;

/// x = mu_list + N(0, I), score = w.x / |w| + noise * N(0, 1) with w ~ N(0, I);
/// r is the population quintile of the score over all splits together.
inline Dataset synthesize(const SynthConfig& cfg) {
  cfg.validate();
  auto wrng = CounterRng::derive(cfg.seed, hash_string("synth-w"));
  std::vector<double> w(cfg.num_features);
  for (auto& v : w) v = wrng.normal();
  const double wnorm = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));

  const std::pair<const char*, std::size_t> parts[] = {
      {"train", cfg.train_lists}, {"valid", cfg.valid_lists}, {"test", cfg.test_lists}};
  Dataset ds;
  ds.num_features = cfg.num_features;
  ds.r_max = kSynthGrades - 1;
  std::vector<double> scores;
  std::vector<Item*> items;
  std::size_t qid = 0;
  for (const auto& [name, count] : parts) {
    Split& split = ds.splits[name];
    split.num_features = cfg.num_features;
    split.lists.resize(count);
    for (auto& list : split.lists) {
      ++qid;
      auto rng = CounterRng::derive(cfg.seed, hash_string("synth-list"), qid);
      list.query_id = std::to_string(qid);
      std::vector<double> mu(cfg.num_features);
      for (auto& m : mu) m = rng.normal(0.0, cfg.list_spread);
      list.items.resize(cfg.list_len);
      for (auto& it : list.items) {
        it.features.resize(cfg.num_features);
        double s = 0.0;
        for (std::size_t f = 0; f < cfg.num_features; ++f) {
          it.features[f] = mu[f] + rng.normal();
          s += w[f] * it.features[f];
        }
        scores.push_back(s / wnorm + cfg.noise * rng.normal());
      }
    }
  }
  for (const auto& [name, count] : parts)
    for (auto& list : ds.splits[name].lists)
      for (auto& it : list.items) items.push_back(&it);

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  const std::size_t n = order.size();
  for (std::size_t rank = 0; rank < n; ++rank)
    items[order[rank]]->relevance = static_cast<int>((rank * kSynthGrades) / n);
  return ds;
}

}  // namespace rankformer
