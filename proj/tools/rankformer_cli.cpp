// rankformer: synth | simulate | train | evaluate | gradcheck

#include <malloc.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rankformer/checkpoint.hpp"
#include "rankformer/config.hpp"
#include "rankformer/dataset.hpp"
#include "rankformer/gradcheck.hpp"
#include "rankformer/metrics.hpp"
#include "rankformer/simulator.hpp"
#include "rankformer/synth.hpp"
#include "rankformer/training.hpp"

namespace fs = std::filesystem;
using namespace rankformer;

namespace {

const char* const kSplits[] = {"train", "valid", "test"};

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string seeds;
  std::string model;
  std::optional<double> alpha;
  std::string out;
  std::string data;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "key = value config file");
  cmd->add_option("--set", o.overrides, "override one config key (key=value), repeatable");
  cmd->add_option("--seed", o.seed, "single seed");
  cmd->add_option("--seeds", o.seeds, "comma-separated seed list");
  cmd->add_option("--model", o.model, "rankformer or mlp");
  cmd->add_option("--alpha", o.alpha, "weight of the listwide loss");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--data", o.data, "data directory");
}

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig cfg;
  if (!o.config_path.empty()) apply_config_file(cfg, o.config_path);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seeds = {*o.seed};
  if (!o.seeds.empty()) set_config_value(cfg, "seeds", o.seeds);
  if (!o.model.empty()) cfg.model = o.model;
  if (o.alpha) cfg.train.alpha = *o.alpha;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (!o.data.empty()) cfg.data_dir = o.data;
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

fs::path seed_dir(const ExperimentConfig& cfg, std::uint64_t seed) {
  return fs::path(cfg.out_dir) / ("seed_" + std::to_string(seed));
}

/// Sampled LETOR file plus its implicit labels.
Split read_simulated_split(const ExperimentConfig& cfg, const std::string& name) {
  const fs::path dir(cfg.data_dir);
  Split split = read_letor_file((dir / (name + ".sampled.txt")).string());
  attach_implicit_labels(split, read_implicit_labels_file((dir / (name + ".labels")).string()));
  validate_labels(split, cfg.sim.r_max, cfg.sim.y_max);
  return split;
}

// ---------------------------------------------------------------------------

int cmd_synth(const ExperimentConfig& cfg) {
  SynthConfig sc;
  sc.train_lists = cfg.synth_train_lists;
  sc.valid_lists = cfg.synth_valid_lists;
  sc.test_lists = cfg.synth_test_lists;
  sc.list_len = cfg.synth_list_len;
  sc.num_features = cfg.synth_num_features;
  sc.noise = cfg.synth_noise;
  sc.list_spread = cfg.synth_list_spread;
  sc.seed = cfg.synth_seed;
  const Dataset ds = synthesize(sc);
  const fs::path dir(cfg.data_dir);
  fs::create_directories(dir);
  for (const char* name : kSplits) {
    const auto path = dir / (std::string(name) + ".txt");
    write_letor_file(path.string(), ds.at(name));
    std::cout << "wrote " << path.string() << " (" << ds.at(name).lists.size() << " lists)\n";
  }
  return 0;
}

int cmd_simulate(const ExperimentConfig& cfg, const std::string& out_dir) {
  const fs::path in_dir(cfg.data_dir);
  const fs::path dir = out_dir.empty() ? in_dir : fs::path(out_dir);
  fs::create_directories(dir);
  std::ostringstream summary_text;
  Dataset ds;
  for (const char* name : kSplits) {
    const auto path = in_dir / (std::string(name) + ".txt");
    if (!fs::exists(path)) throw Error("missing input '" + path.string() + "'");
    ds.splits[name] = read_letor_file(path.string());
  }
  harmonize_features(ds);
  for (const char* name : kSplits) {
    const Split sim = simulate(ds.at(name), cfg.sim);
    write_letor_file((dir / (std::string(name) + ".sampled.txt")).string(), sim);
    const auto labels_path = dir / (std::string(name) + ".labels");
    std::ofstream labels(labels_path);
    if (!labels) throw Error("cannot write '" + labels_path.string() + "'");
    write_implicit_labels(labels, sim);
    summary_text << "[" << name << "]\n";
    summarize(sim, cfg.sim.r_max, cfg.sim.y_max).print(summary_text);
  }
  write_text(dir / "simulation_summary.txt", summary_text.str());
  std::cout << summary_text.str();
  return 0;
}

template <class T>
void train_one(const ExperimentConfig& cfg, const Split& train_raw, const Split& valid_raw, std::uint64_t seed) {
  const fs::path dir = seed_dir(cfg, seed);
  fs::create_directories(dir);
  const FeatureTransform tr = fit_transform(train_raw, cfg.transform);
  {
    std::ofstream out(dir / "transform.txt");
    write_transform(out, tr);
  }
  write_text(dir / "config.txt", serialize_config(cfg));
  const Split train_split = apply_transform(tr, train_raw);
  const Split valid_split = apply_transform(tr, valid_raw);

  TrainConfig tc = cfg.train;
  tc.seed = seed;
  std::ofstream history(dir / "history.jsonl");
  if (!history) throw Error("cannot write history in '" + dir.string() + "'");
  auto on_epoch = [&](const EpochRecord& rec) {
    history << rec.to_json().dump() << '\n';
    history.flush();
    std::fprintf(stderr, "seed %llu epoch %zu loss %.6f valid_ndcg_y %s lr %.3g\n",
                 static_cast<unsigned long long>(seed), rec.epoch, rec.train_loss,
                 rec.valid_ndcg_y ? std::to_string(*rec.valid_ndcg_y).c_str() : "-", rec.lr);
  };

  nlohmann::ordered_json summary;
  auto run = [&](auto params) {
    auto res = train(train_split, valid_split, std::move(params), tc, cfg.sim.y_max, on_epoch);
    write_checkpoint_file((dir / "checkpoint.txt").string(), res.final_params);
    write_checkpoint_file((dir / "best_checkpoint.txt").string(), res.best_params);
    summary["model"] = cfg.model;
    summary["precision"] = to_string(cfg.precision);
    summary["seed"] = seed;
    summary["alpha"] = tc.alpha;
    summary["epochs"] = tc.epochs;
    summary["num_train_lists"] = res.num_train_lists;
    summary["total_train_lists"] = train_split.lists.size();
    summary["best_epoch"] = res.best_epoch;
    summary["first_train_loss"] = res.history.front().train_loss;
    summary["final_train_loss"] = res.history.back().train_loss;
  };
  if (cfg.model == "mlp")
    run(init_mlp<T>(cfg.mlp_dims(train_split.num_features), seed));
  else
    run(init_rankformer<T>(cfg.rankformer_dims(train_split.num_features), seed));
  write_text(dir / "train_summary.json", summary.dump(2) + "\n");
  std::cout << "seed " << seed << ": trained on " << summary["num_train_lists"] << " lists, best epoch "
            << summary["best_epoch"] << ", wrote " << dir.string() << "\n";
}

int cmd_train(const ExperimentConfig& cfg) {
  Split train_raw = read_simulated_split(cfg, "train");
  Split valid_raw = read_simulated_split(cfg, "valid");
  const std::size_t d = std::max(train_raw.num_features, valid_raw.num_features);
  resize_features(train_raw, d);
  resize_features(valid_raw, d);
  for (auto seed : cfg.seeds) {
    if (cfg.precision == Precision::single)
      train_one<float>(cfg, train_raw, valid_raw, seed);
    else
      train_one<double>(cfg, train_raw, valid_raw, seed);
  }
  return 0;
}

int cmd_evaluate(const ExperimentConfig& cfg, const std::string& split_name, const std::string& which) {
  Split raw = read_simulated_split(cfg, split_name);
  const double baseline = random_baseline_ndcg(raw, cfg.train.eval_k, cfg.baseline_shuffles, cfg.sim.seed, cfg.gain);
  std::vector<MetricsReport> reports;
  for (auto seed : cfg.seeds) {
    const fs::path dir = seed_dir(cfg, seed);
    std::ifstream tin(dir / "transform.txt");
    if (!tin) throw Error("missing '" + (dir / "transform.txt").string() + "'; run train first");
    const FeatureTransform tr = read_transform(tin);
    Split split = raw;
    if (split.num_features < tr.num_features) resize_features(split, tr.num_features);
    split = apply_transform(tr, split);
    const std::string ckpt = (dir / (which == "final" ? "checkpoint.txt" : "best_checkpoint.txt")).string();
    const AnyModel model = read_checkpoint_file(ckpt);
    const auto scores = std::visit([&](const auto& p) { return score_split(p, split); }, model);
    const MetricsReport rep = evaluate(split, scores, cfg.train.eval_k, cfg.sim.y_max, cfg.gain);
    auto j = rep.to_json();
    j["split"] = split_name;
    j["checkpoint"] = which;
    j["random_baseline_ndcg_y"] = baseline;
    write_text(dir / ("report_" + split_name + ".json"), j.dump(2) + "\n");
    std::cout << "seed " << seed << " (" << split_name << ", " << which << " checkpoint)\n" << render_table(rep);
    reports.push_back(rep);
  }
  const AggregateReport agg = aggregate_reports(reports);
  auto j = agg.to_json();
  j["split"] = split_name;
  j["random_baseline_ndcg_y"] = baseline;
  fs::create_directories(cfg.out_dir);
  write_text(fs::path(cfg.out_dir) / ("aggregate_" + split_name + ".json"), j.dump(2) + "\n");
  std::cout << "aggregate over " << agg.runs << " seed(s), k=" << cfg.train.eval_k << "\n" << agg.table();
  std::printf("random-scoring baseline ndcg_y %.2f\n", baseline);
  return 0;
}

int cmd_gradcheck(const ExperimentConfig& cfg) {
  bool ok = true;
  for (const auto& c : run_gradcheck_suite(cfg.seeds.front())) {
    const bool pass = c.report.passed();
    ok = ok && pass;
    std::printf("%-10s alpha=%-5g max_rel_error=%.3e  %s\n", c.model.c_str(), c.alpha, c.report.max_rel_error(),
                pass ? "ok" : "FAIL");
    for (const auto& t : c.report.failures())
      std::printf("    %-28s rel_error=%.3e max_abs_diff=%.3e\n", t.name.c_str(), t.rel_error, t.max_abs_diff);
  }
  std::printf("%s\n", ok ? "gradient check passed" : "gradient check FAILED");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  // Keep large temporaries on the heap instead of mapping and unmapping them
  // on every step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"RankFormer listwise learning-to-rank experiments"};
  app.require_subcommand(1);

  CommonOptions synth_o, sim_o, train_o, eval_o, gc_o;
  auto* synth = app.add_subcommand("synth", "generate a synthetic LETOR corpus into the data directory");
  add_common(synth, synth_o);
  auto* sim = app.add_subcommand("simulate", "simulate implicit feedback for train/valid/test");
  add_common(sim, sim_o);
  auto* tr = app.add_subcommand("train", "train one model per seed");
  add_common(tr, train_o);
  auto* ev = app.add_subcommand("evaluate", "evaluate trained checkpoints and aggregate across seeds");
  add_common(ev, eval_o);
  std::string eval_split = "test", eval_ckpt = "best";
  ev->add_option("--split", eval_split, "split to evaluate")->check(CLI::IsMember({"train", "valid", "test"}));
  ev->add_option("--checkpoint", eval_ckpt, "best or final")->check(CLI::IsMember({"best", "final"}));
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check on random tiny instances");
  add_common(gc, gc_o);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) {
      auto cfg = resolve_config(synth_o);
      if (!synth_o.out.empty()) cfg.data_dir = synth_o.out;
      return cmd_synth(cfg);
    }
    if (*sim) return cmd_simulate(resolve_config(sim_o), sim_o.out);
    if (*tr) return cmd_train(resolve_config(train_o));
    if (*ev) return cmd_evaluate(resolve_config(eval_o), eval_split, eval_ckpt);
    if (*gc) return cmd_gradcheck(resolve_config(gc_o));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
