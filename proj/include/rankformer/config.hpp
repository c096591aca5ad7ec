#pragma once

// Flat `key = value` experiment configuration shared by every CLI command.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rankformer/checkpoint.hpp"
#include "rankformer/common.hpp"
#include "rankformer/dataset.hpp"
#include "rankformer/metrics.hpp"
#include "rankformer/model.hpp"
#include "rankformer/simulator.hpp"
#include "rankformer/training.hpp"

namespace rankformer {

struct ExperimentConfig {
  // paths
  std::string data_dir = "data";
  std::string out_dir = "runs";

  // synthetic corpus
  std::uint64_t synth_seed = 0;
  std::size_t synth_train_lists = 2000;
  std::size_t synth_valid_lists = 500;
  std::size_t synth_test_lists = 500;
  std::size_t synth_list_len = 16;
  std::size_t synth_num_features = 10;
  double synth_noise = 0.5;
  double synth_list_spread = 0.5;

  // simulation
  SimConfig sim;

  // model
  std::string model = "rankformer";
  Precision precision = Precision::double_;
  std::size_t num_layers = 3;
  std::size_t num_heads = 1;
  std::size_t dim_ff = 512;
  std::size_t head_hidden = 128;
  ResidualForm residual = ResidualForm::printed;
  std::vector<std::size_t> mlp_hidden{512, 256, 128};

  // training and evaluation
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
  TransformMode transform = TransformMode::quantile_normal;
  Gain gain = Gain::exponential;
  std::size_t baseline_shuffles = 1000;

  RankFormerDims rankformer_dims(std::size_t num_features) const {
    RankFormerDims d;
    d.num_features = num_features;
    d.num_layers = num_layers;
    d.num_heads = num_heads;
    d.dim_ff = dim_ff;
    d.head_hidden = head_hidden;
    d.y_max = static_cast<std::size_t>(sim.y_max);
    d.dropout = train.dropout;
    d.residual = residual;
    return d;
  }

  MLPDims mlp_dims(std::size_t num_features) const {
    MLPDims d;
    d.num_features = num_features;
    d.hidden = mlp_hidden;
    d.dropout = train.dropout;
    return d;
  }

  void validate() const {
    if (model != "rankformer" && model != "mlp") throw Error("config: model must be rankformer or mlp");
    if (seeds.empty()) throw Error("config: seeds must not be empty");
    sim.validate();
    train.validate();
  }
};

namespace detail {

template <class V>
std::string format_value(const V& v) {
  if constexpr (std::is_same_v<V, std::string>) {
    return v;
  } else if constexpr (std::is_floating_point_v<V>) {
    return format_exact(v);
  } else {
    return std::to_string(v);
  }
}

template <class V>
void parse_value(std::string_view text, V& out, std::string_view key) {
  if constexpr (std::is_same_v<V, std::string>) {
    out = std::string(text);
  } else {
    if (!parse_number(text, out)) throw Error("config: bad value '" + std::string(text) + "' for '" + std::string(key) + "'");
  }
}

template <class V>
std::string format_list(const std::vector<V>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

template <class V>
std::vector<V> parse_list(std::string_view text, std::string_view key) {
  std::vector<V> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    auto item = text.substr(0, comma);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    V v{};
    parse_value(item, v, key);
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

struct ConfigField {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
};

template <class V>
ConfigField scalar_field(std::string key, V ExperimentConfig::*member) {
  return {key, [member](const ExperimentConfig& c) { return format_value(c.*member); },
          [member, key](ExperimentConfig& c, std::string_view v) { parse_value(v, c.*member, key); }};
}

template <class Sub, class V>
ConfigField nested_field(std::string key, Sub ExperimentConfig::*sub, V Sub::*member) {
  return {key, [sub, member](const ExperimentConfig& c) { return format_value(c.*sub.*member); },
          [sub, member, key](ExperimentConfig& c, std::string_view v) { parse_value(v, c.*sub.*member, key); }};
}

inline const std::vector<ConfigField>& config_fields() {
  using C = ExperimentConfig;
  static const std::vector<ConfigField> fields = {
      scalar_field("data_dir", &C::data_dir),
      scalar_field("out_dir", &C::out_dir),
      scalar_field("synth_seed", &C::synth_seed),
      scalar_field("synth_train_lists", &C::synth_train_lists),
      scalar_field("synth_valid_lists", &C::synth_valid_lists),
      scalar_field("synth_test_lists", &C::synth_test_lists),
      scalar_field("synth_list_len", &C::synth_list_len),
      scalar_field("synth_num_features", &C::synth_num_features),
      scalar_field("synth_noise", &C::synth_noise),
      scalar_field("synth_list_spread", &C::synth_list_spread),
      nested_field("sim_seed", &C::sim, &SimConfig::seed),
      nested_field("max_list_size", &C::sim, &SimConfig::max_list_size),
      nested_field("bootstraps", &C::sim, &SimConfig::bootstraps),
      nested_field("conversion_rate", &C::sim, &SimConfig::conversion_rate),
      nested_field("click_noise", &C::sim, &SimConfig::click_noise),
      nested_field("r_max", &C::sim, &SimConfig::r_max),
      nested_field("y_max", &C::sim, &SimConfig::y_max),
      scalar_field("model", &C::model),
      {"precision", [](const C& c) { return to_string(c.precision); },
       [](C& c, std::string_view v) { c.precision = parse_precision(v); }},
      scalar_field("num_layers", &C::num_layers),
      scalar_field("num_heads", &C::num_heads),
      scalar_field("dim_ff", &C::dim_ff),
      scalar_field("head_hidden", &C::head_hidden),
      {"residual", [](const C& c) { return to_string(c.residual); },
       [](C& c, std::string_view v) { c.residual = parse_residual_form(v); }},
      {"mlp_hidden", [](const C& c) { return format_list(c.mlp_hidden); },
       [](C& c, std::string_view v) { c.mlp_hidden = parse_list<std::size_t>(v, "mlp_hidden"); }},
      nested_field("alpha", &C::train, &TrainConfig::alpha),
      nested_field("lr", &C::train, &TrainConfig::lr),
      nested_field("weight_decay", &C::train, &TrainConfig::weight_decay),
      nested_field("dropout", &C::train, &TrainConfig::dropout),
      nested_field("epochs", &C::train, &TrainConfig::epochs),
      nested_field("warm_epochs", &C::train, &TrainConfig::warm_epochs),
      nested_field("batch_size", &C::train, &TrainConfig::batch_size),
      nested_field("beta1", &C::train, &TrainConfig::beta1),
      nested_field("beta2", &C::train, &TrainConfig::beta2),
      nested_field("adam_eps", &C::train, &TrainConfig::adam_eps),
      nested_field("eval_k", &C::train, &TrainConfig::eval_k),
      {"seeds", [](const C& c) { return format_list(c.seeds); },
       [](C& c, std::string_view v) { c.seeds = parse_list<std::uint64_t>(v, "seeds"); }},
      {"transform", [](const C& c) { return to_string(c.transform); },
       [](C& c, std::string_view v) { c.transform = parse_transform_mode(v); }},
      {"gain", [](const C& c) { return to_string(c.gain); }, [](C& c, std::string_view v) { c.gain = parse_gain(v); }},
      scalar_field("baseline_shuffles", &C::baseline_shuffles),
  };
  return fields;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Sets one key; throws on unknown keys or malformed values.
inline void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : detail::config_fields()) {
    if (f.key == key) {
      f.set(cfg, detail::trim(value));
      return;
    }
  }
  throw Error("config: unknown key '" + std::string(key) + "'");
}

/// Applies `key=value` lines on top of `cfg`. Blank lines and `#` comments
/// are ignored.
inline void apply_config(ExperimentConfig& cfg, std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = detail::trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected key = value");
    try {
      set_config_value(cfg, detail::trim(view.substr(0, eq)), view.substr(eq + 1));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(line_no, e.what());
    }
  }
}

inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  apply_config(cfg, in);
  return cfg;
}

inline ExperimentConfig parse_config(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_config(in);
}

inline void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path + "'");
  try {
    apply_config(cfg, in);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : detail::config_fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace rankformer
