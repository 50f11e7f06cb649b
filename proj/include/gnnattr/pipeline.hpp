#pragma once

#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "gnnattr/eval.hpp"
#include "gnnattr/explain.hpp"
#include "gnnattr/serialize.hpp"
#include "gnnattr/train.hpp"
#include "gnnattr/walks.hpp"

namespace gnnattr::cli {

/// Stage failure carrying the stage name for exit diagnostics.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, const std::string& message)
      : std::runtime_error(message), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Everything a reproduction run needs: dataset shape, architecture,
/// training, explainer settings, and output plumbing. Experiment presets
/// fill the fields; config files and flags override individual keys.
struct PipelineConfig {
  std::string experiment = "custom";
  std::string dataset = "neg-evidence";  // neg-evidence | infection
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  int jobs = 1;

  // dataset parameters
  int nodes = 200;
  int red = 10;
  int blue = 10;
  int green = 0;
  int max_color_in = 10;
  double gray_edge_prob = 0.002;
  double edge_prob = 0.004;
  int infected = 50;
  int max_class = 5;
  int train_graphs = 1;
  int max_instances = 0;  // 0: all eligible instances

  // architecture and training
  std::vector<int> hidden;
  bool root_weight = false;
  engine::Activation activation = engine::Activation::kIdentity;
  engine::TrainConfig train;

  // explainers
  explainers::GnnExplainerConfig gnnx;
  double posgrad_eps = 0.001;
  std::vector<std::string> methods = {"grad", "occ"};
  std::vector<std::string> layerwise_methods;
  std::vector<std::string> walk_methods = {"dag", "amp"};
  std::vector<double> flip_grid;  // empty: 1.0, 0.95, ..., 0.0
  double flip_eps = 1e-7;
};

inline std::vector<double> default_flip_grid() {
  std::vector<double> grid;
  for (int k = 20; k >= 0; --k) grid.push_back(static_cast<double>(k) / 20.0);
  return grid;
}

/// Preset for one experiment id: neg-evidence, neg-evidence-multiclass,
/// infection, paths, flips, or custom.
inline PipelineConfig default_config(const std::string& experiment) {
  PipelineConfig cfg;
  cfg.experiment = experiment;
  cfg.flip_grid = default_flip_grid();
  cfg.gnnx.adam = true;
  if (experiment == "neg-evidence" || experiment == "neg-evidence-multiclass") {
    cfg.dataset = "neg-evidence";
    cfg.nodes = 2000;
    cfg.train_graphs = 4;
    cfg.green = experiment == "neg-evidence" ? 0 : 10;
    cfg.hidden = {};
    cfg.root_weight = false;
    cfg.activation = engine::Activation::kIdentity;
    cfg.train.optimizer = engine::TrainConfig::Optimizer::kAdam;
    cfg.train.learning_rate = 0.01;
    cfg.train.epochs = 1000;
    cfg.train.l1_weight = 0.01;
    cfg.gnnx.learning_rate = 0.5;
    cfg.gnnx.size_weight = 0.001;
    cfg.gnnx.entropy_weight = 0.0;
    cfg.methods = {"grad", "occ", "posgrad", "gnnx", "random", "full"};
    if (experiment == "neg-evidence") cfg.methods.insert(cfg.methods.begin() + 4, "gnnx-reversed");
  } else if (experiment == "infection" || experiment == "paths" || experiment == "flips") {
    cfg.dataset = "infection";
    cfg.nodes = 1000;
    cfg.train_graphs = 4;
    cfg.edge_prob = 0.004;
    cfg.infected = 50;
    cfg.max_class = 5;
    cfg.hidden = {20, 20, 20};
    cfg.root_weight = true;
    cfg.activation = engine::Activation::kRelu;
    cfg.train.optimizer = engine::TrainConfig::Optimizer::kAdam;
    cfg.train.learning_rate = 0.005;
    cfg.train.epochs = 100;
    cfg.train.weight_decay = 3e-4;
    cfg.methods = {"grad", "occ", "posgrad", "gnnx", "random", "full"};
    cfg.layerwise_methods = {"lw-grad", "lw-occ"};
    if (experiment == "infection") cfg.max_instances = 200;
    if (experiment == "flips") cfg.max_instances = 10;
  } else if (experiment != "custom") {
    throw ArgumentError("unknown experiment '" + experiment + "'");
  }
  return cfg;
}

namespace detail {

inline int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ArgumentError("config: invalid integer for '" + key + "': " + value);
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    std::uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ArgumentError("config: invalid seed for '" + key + "': " + value);
  }
}

inline double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ArgumentError("config: invalid number for '" + key + "': " + value);
  }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw ArgumentError("config: invalid flag for '" + key + "': " + value);
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(value);
  while (std::getline(is, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

/// Applies one key=value override. Shared by config files and CLI flags so
/// both spell options identically.
inline void apply_option(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_int;
  using detail::parse_real;
  using detail::parse_u64;
  if (key == "experiment") cfg.experiment = value;
  else if (key == "dataset") cfg.dataset = value;
  else if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "out") cfg.out_dir = value;
  else if (key == "jobs") cfg.jobs = parse_int(key, value);
  else if (key == "nodes") cfg.nodes = parse_int(key, value);
  else if (key == "red") cfg.red = parse_int(key, value);
  else if (key == "blue") cfg.blue = parse_int(key, value);
  else if (key == "green") cfg.green = parse_int(key, value);
  else if (key == "max-color-in") cfg.max_color_in = parse_int(key, value);
  else if (key == "gray-edge-prob") cfg.gray_edge_prob = parse_real(key, value);
  else if (key == "edge-prob") cfg.edge_prob = parse_real(key, value);
  else if (key == "infected") cfg.infected = parse_int(key, value);
  else if (key == "max-class") cfg.max_class = parse_int(key, value);
  else if (key == "train-graphs") cfg.train_graphs = parse_int(key, value);
  else if (key == "max-instances") cfg.max_instances = parse_int(key, value);
  else if (key == "hidden") {
    cfg.hidden.clear();
    for (const auto& item : detail::split_list(value)) cfg.hidden.push_back(parse_int(key, item));
  } else if (key == "root-weight") cfg.root_weight = parse_bool(key, value);
  else if (key == "activation") {
    if (value == "identity") cfg.activation = engine::Activation::kIdentity;
    else if (value == "relu") cfg.activation = engine::Activation::kRelu;
    else throw ArgumentError("config: unknown activation '" + value + "'");
  } else if (key == "optimizer") {
    if (value == "sgd") cfg.train.optimizer = engine::TrainConfig::Optimizer::kSgd;
    else if (value == "adam") cfg.train.optimizer = engine::TrainConfig::Optimizer::kAdam;
    else throw ArgumentError("config: unknown optimizer '" + value + "'");
  } else if (key == "lr") cfg.train.learning_rate = parse_real(key, value);
  else if (key == "epochs") cfg.train.epochs = parse_int(key, value);
  else if (key == "weight-decay") cfg.train.weight_decay = parse_real(key, value);
  else if (key == "l1") cfg.train.l1_weight = parse_real(key, value);
  else if (key == "gnnx-epochs") cfg.gnnx.epochs = parse_int(key, value);
  else if (key == "gnnx-lr") cfg.gnnx.learning_rate = parse_real(key, value);
  else if (key == "gnnx-alpha") cfg.gnnx.size_weight = parse_real(key, value);
  else if (key == "gnnx-beta") cfg.gnnx.entropy_weight = parse_real(key, value);
  else if (key == "gnnx-adam") cfg.gnnx.adam = parse_bool(key, value);
  else if (key == "posgrad-eps") cfg.posgrad_eps = parse_real(key, value);
  else if (key == "methods") cfg.methods = detail::split_list(value);
  else if (key == "layerwise-methods") cfg.layerwise_methods = detail::split_list(value);
  else if (key == "walk-methods" || key == "method") cfg.walk_methods = detail::split_list(value);
  else if (key == "grid") {
    cfg.flip_grid.clear();
    for (const auto& item : detail::split_list(value)) cfg.flip_grid.push_back(parse_real(key, item));
  } else if (key == "flip-eps") cfg.flip_eps = parse_real(key, value);
  else throw ArgumentError("config: unknown key '" + key + "'");
}

/// Flat key=value file; blank lines and '#' comments ignored.
inline std::vector<std::pair<std::string, std::string>> parse_config_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  auto trim = [](std::string s) {
    auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && issp(s.front())) s.erase(s.begin());
    while (!s.empty() && issp(s.back())) s.pop_back();
    return s;
  };
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw IoError("config file line " + std::to_string(lineno) + ": expected key=value");
    pairs.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return pairs;
}

/// Runs body(0..count-1) on up to `jobs` threads; results must go to
/// preassigned slots. The first exception wins and is rethrown after join.
template <typename F>
inline void parallel_for(int count, int jobs, F&& body) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex mu;
  std::exception_ptr error;
  auto worker = [&] {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(jobs));
  for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Output directory bookkeeping: atomic writes, per-stage cleanup on
/// failure, stage-tagged errors, seed logging.
class Workspace {
 public:
  Workspace(PipelineConfig cfg, std::ostream* log = nullptr)
      : cfg_(std::move(cfg)), log_(log) {
    std::error_code ec;
    std::filesystem::create_directories(cfg_.out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + cfg_.out_dir + "'");
  }

  const PipelineConfig& config() const { return cfg_; }
  std::filesystem::path path(const std::string& name) const {
    return std::filesystem::path(cfg_.out_dir) / name;
  }

  /// Runs one stage; on failure removes the files the stage wrote and
  /// rethrows with the stage name attached.
  template <typename F>
  auto stage(const std::string& name, std::uint64_t stage_seed, F&& body) {
    log("stage " + name + ": seed " + std::to_string(stage_seed));
    written_.clear();
    try {
      return body(stage_seed);
    } catch (const std::exception& e) {
      for (const auto& p : written_) {
        std::error_code ec;
        std::filesystem::remove(p, ec);
      }
      throw PipelineError(name, e.what());
    }
  }

  void write_text(const std::string& name, const std::string& text) {
    auto target = path(name);
    auto tmp = target;
    tmp += ".tmp";
    try {
      io::save_text(tmp.string(), text);
      std::filesystem::rename(tmp, target);
    } catch (const std::exception&) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw;
    }
    written_.push_back(target);
  }

  void write_json(const std::string& name, const io::json& j) {
    write_text(name, j.dump(2) + "\n");
  }

  void write_jsonl(const std::string& name, const std::vector<io::json>& lines) {
    std::string text;
    for (const auto& j : lines) text += j.dump() + "\n";
    write_text(name, text);
  }

  void log(const std::string& message) const {
    if (log_) *log_ << message << "\n";
  }

 private:
  PipelineConfig cfg_;
  std::ostream* log_;
  std::vector<std::filesystem::path> written_;
};

namespace detail {

inline engine::ArchSpec make_arch(const PipelineConfig& cfg, const core::DatasetSplit<double>& data) {
  engine::ArchSpec arch;
  arch.input_dim = data.test.feature_dim();
  arch.hidden = cfg.hidden;
  arch.output_dim = data.class_count == 2 ? 1 : data.class_count;
  arch.hidden_activation = cfg.activation;
  arch.root_weight = cfg.root_weight;
  return arch;
}

inline std::vector<int> cap_instances(std::vector<int> nodes, int max_instances) {
  if (max_instances > 0 && static_cast<int>(nodes.size()) > max_instances)
    nodes.resize(static_cast<std::size_t>(max_instances));
  return nodes;
}

/// Similarity instance set: every labeled test node for neg-evidence; test
/// nodes carrying ground truth (classes 1..max-1) for infection.
inline std::vector<int> similarity_instances(const PipelineConfig& cfg,
                                             const core::Graph<double>& test) {
  std::vector<int> nodes;
  if (cfg.dataset == "infection") {
    for (const auto& [node, info] : test.ground_truth)
      if (!info.path.empty()) nodes.push_back(node);
  } else {
    for (int v = 0; v < test.n; ++v)
      if (test.labels[static_cast<std::size_t>(v)] >= 0) nodes.push_back(v);
  }
  return cap_instances(std::move(nodes), cfg.max_instances);
}

/// Walk instance set: test nodes with a non-empty ground-truth path.
inline std::vector<int> path_instances(const core::Graph<double>& test) {
  std::vector<int> nodes;
  for (const auto& [node, info] : test.ground_truth)
    if (!info.path.empty()) nodes.push_back(node);
  return nodes;
}

}  // namespace detail

/// One explanation by method id. Instance-level randomness comes from
/// `seed` (gnnx mask init, random baseline); deterministic methods ignore it.
template <typename Scalar>
inline explainers::Explanation<Scalar> make_explanation(
    const std::string& method, const engine::GnnModel<Scalar>& m, const core::Graph<Scalar>& g,
    int v, const PipelineConfig& cfg, std::uint64_t seed) {
  if (method == "grad") return explainers::explain_edge_gradients(m, g, v);
  if (method == "occ") return explainers::explain_occlusion(m, g, v);
  if (method == "posgrad")
    return explainers::explain_positive_gradients(m, g, v, static_cast<Scalar>(cfg.posgrad_eps));
  if (method == "gnnx" || method == "gnnx-reversed") {
    explainers::GnnExplainerConfig gc = cfg.gnnx;
    gc.reversed = method == "gnnx-reversed";
    gc.seed = seed;
    return explainers::explain_gnnexplainer(m, g, v, gc);
  }
  if (method == "random")
    return explainers::baseline_explanation(explainers::BaselineKind::kRandom, g, v, m.layers(),
                                            seed);
  if (method == "full")
    return explainers::baseline_explanation(explainers::BaselineKind::kFull, g, v, m.layers(),
                                            seed);
  if (method == "lw-grad") return explainers::explain_layerwise_gradients(m, g, v);
  if (method == "lw-occ") return explainers::explain_layerwise_occlusion(m, g, v);
  throw ArgumentError("unknown explanation method '" + method + "'");
}

/// Per-method, per-instance explanations plus the instance list.
struct ExplainResult {
  std::vector<int> instances;
  std::vector<std::string> methods;                                     // input scope
  std::vector<std::vector<explainers::Explanation<double>>> per_method; // [method][instance]
  std::vector<std::string> lw_methods;                                  // layerwise scope
  std::vector<std::vector<explainers::Explanation<double>>> lw_per_method;
};

inline core::DatasetSplit<double> stage_generate(Workspace& ws) {
  const auto& cfg = ws.config();
  return ws.stage("generate", derive_seed(cfg.seed, 1), [&](std::uint64_t seed) {
    core::DatasetSplit<double> data;
    if (cfg.dataset == "neg-evidence") {
      data = core::gen_negative_evidence<double>(cfg.nodes, cfg.red, cfg.blue, cfg.green,
                                                 cfg.train_graphs, seed, cfg.max_color_in,
                                                 cfg.gray_edge_prob);
    } else if (cfg.dataset == "infection") {
      data = core::gen_infection<double>(cfg.nodes, cfg.edge_prob, cfg.infected, cfg.max_class,
                                         cfg.train_graphs, seed);
    } else {
      throw ArgumentError("unknown dataset '" + cfg.dataset + "'");
    }
    ws.write_json("dataset.json", io::split_to_json(data));
    ws.log("stage generate: dataset " + cfg.dataset + ", " + std::to_string(data.train.size()) +
           " train graph(s), test n " + std::to_string(data.test.n));
    return data;
  });
}

inline engine::TrainResult<double> stage_train(Workspace& ws,
                                               const core::DatasetSplit<double>& data) {
  const auto& cfg = ws.config();
  return ws.stage("train", derive_seed(cfg.seed, 2), [&](std::uint64_t seed) {
    engine::TrainConfig tc = cfg.train;
    tc.seed = seed;
    auto result = engine::train(detail::make_arch(cfg, data), data, tc);
    ws.write_json("model.json", io::model_to_json(result.model));
    io::json report;
    report["train_accuracy"] = result.report.train_accuracy;
    report["test_accuracy"] = result.report.test_accuracy;
    report["losses"] = result.report.losses;
    ws.write_json("train.json", report);
    std::ostringstream acc;
    acc.precision(6);
    acc << "stage train: train accuracy " << result.report.train_accuracy << ", test accuracy "
        << result.report.test_accuracy;
    ws.log(acc.str());
    return result;
  });
}

inline ExplainResult stage_explain(Workspace& ws, const engine::GnnModel<double>& model,
                                   const core::DatasetSplit<double>& data) {
  const auto& cfg = ws.config();
  return ws.stage("explain", derive_seed(cfg.seed, 3), [&](std::uint64_t seed) {
    ExplainResult result;
    result.instances = detail::similarity_instances(cfg, data.test);
    if (result.instances.empty()) throw ArgumentError("explain: no eligible instances");
    result.methods = cfg.methods;
    result.lw_methods = cfg.layerwise_methods;
    auto run_scope = [&](const std::vector<std::string>& methods,
                         std::vector<std::vector<explainers::Explanation<double>>>& out,
                         std::uint64_t scope_salt) {
      out.resize(methods.size());
      for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        std::uint64_t method_seed = derive_seed(seed, scope_salt + mi);
        auto& slot = out[mi];
        slot.resize(result.instances.size());
        parallel_for(static_cast<int>(result.instances.size()), cfg.jobs, [&](int i) {
          slot[static_cast<std::size_t>(i)] = make_explanation(
              methods[mi], model, data.test, result.instances[static_cast<std::size_t>(i)], cfg,
              derive_seed(method_seed, static_cast<std::uint64_t>(i)));
        });
        std::vector<io::json> lines;
        lines.reserve(slot.size());
        for (const auto& ex : slot) lines.push_back(io::explanation_to_json(ex));
        ws.write_jsonl("explanations-" + methods[mi] + ".jsonl", lines);
      }
    };
    run_scope(result.methods, result.per_method, 0);
    run_scope(result.lw_methods, result.lw_per_method, 1000);
    ws.log("stage explain: " + std::to_string(result.instances.size()) + " instance(s), " +
           std::to_string(result.methods.size() + result.lw_methods.size()) + " method(s)");
    return result;
  });
}

/// Similarity matrices: one pair of CSVs for the input scope, one per layer
/// plus a pooled pair for the layerwise scope. Returns the metrics it adds
/// to the summary.
inline io::json stage_compare(Workspace& ws, const ExplainResult& ex, int layer_count) {
  const auto& cfg = ws.config();
  return ws.stage("compare", derive_seed(cfg.seed, 4), [&](std::uint64_t) {
    io::json metrics = io::json::object();
    auto record = [&](const eval::SimilarityReport<double>& rep, const std::string& tag) {
      ws.write_text("similarity-" + tag + "-mean.csv", io::similarity_csv(rep.methods, rep.mean));
      ws.write_text("similarity-" + tag + "-std.csv", io::similarity_csv(rep.methods, rep.stddev));
      for (std::size_t a = 0; a < rep.methods.size(); ++a)
        for (std::size_t b = a + 1; b < rep.methods.size(); ++b) {
          std::string key = "cos_" + tag + "_" + rep.methods[a] + "_" + rep.methods[b];
          metrics[key + "_mean"] = rep.mean(static_cast<int>(a), static_cast<int>(b));
          metrics[key + "_std"] = rep.stddev(static_cast<int>(a), static_cast<int>(b));
        }
    };
    if (!ex.methods.empty())
      record(eval::pairwise_similarity_matrix(ex.methods, ex.per_method, "input"), "input");
    if (!ex.lw_methods.empty()) {
      record(eval::pairwise_similarity_matrix(ex.lw_methods, ex.lw_per_method, "layerwise"),
             "layerwise");
      for (int l = 1; l <= layer_count; ++l) {
        std::vector<std::vector<explainers::Explanation<double>>> sliced(ex.lw_methods.size());
        for (std::size_t mi = 0; mi < ex.lw_methods.size(); ++mi)
          for (const auto& e : ex.lw_per_method[mi])
            sliced[mi].push_back(eval::filter_layer(e, l));
        std::string tag = "layer" + std::to_string(l);
        record(eval::pairwise_similarity_matrix(ex.lw_methods, sliced, tag), tag);
      }
    }
    ws.log("stage compare: wrote similarity matrices");
    return metrics;
  });
}

/// Top-walk extraction and recovery rates per walk method id
/// (dag | amp | brute).
inline io::json stage_paths(Workspace& ws, const engine::GnnModel<double>& model,
                            const core::DatasetSplit<double>& data) {
  const auto& cfg = ws.config();
  return ws.stage("paths", derive_seed(cfg.seed, 5), [&](std::uint64_t) {
    auto instances = detail::cap_instances(detail::path_instances(data.test), cfg.max_instances);
    if (instances.empty()) throw ArgumentError("paths: no ground-truth instances");
    io::json metrics = io::json::object();
    for (const auto& name : cfg.walk_methods) {
      std::string method = name;
      if (method == "dag-top-walk") method = "dag";
      else if (method == "amp-ave-basic") method = "amp";
      else if (method == "brute-force") method = "brute";
      std::vector<paths::Walk<double>> walks(instances.size());
      parallel_for(static_cast<int>(instances.size()), cfg.jobs, [&](int i) {
        auto ctx = paths::make_walk_context(model, data.test, instances[static_cast<std::size_t>(i)]);
        if (method == "dag") walks[static_cast<std::size_t>(i)] = paths::dag_top_walk(ctx);
        else if (method == "amp") walks[static_cast<std::size_t>(i)] = paths::amp_ave_basic(ctx);
        else if (method == "brute")
          walks[static_cast<std::size_t>(i)] = paths::brute_force_top_walk(ctx);
        else throw ArgumentError("unknown walk method '" + method + "'");
      });
      std::vector<io::json> lines;
      std::vector<std::pair<int, std::vector<int>>> predicted;
      for (std::size_t i = 0; i < instances.size(); ++i) {
        lines.push_back(io::walk_to_json(walks[i]));
        predicted.emplace_back(instances[i], walks[i].nodes);
      }
      ws.write_jsonl("walks-" + method + ".jsonl", lines);
      auto rec = eval::path_recovery_rate(predicted, data.test);
      io::json rj;
      rj["method"] = method;
      rj["total"] = rec.total;
      rj["hits"] = rec.hits;
      rj["rate"] = rec.rate;
      io::json records = io::json::array();
      for (const auto& r : rec.records) {
        io::json row;
        row["node"] = r.node;
        row["counted"] = r.counted;
        row["success"] = r.success;
        row["predicted"] = r.predicted;
        row["truth"] = r.truth;
        records.push_back(std::move(row));
      }
      rj["records"] = std::move(records);
      ws.write_json("recovery-" + method + ".json", rj);
      metrics["recovery_" + method] = rec.rate;
      metrics["recovery_" + method + "_total"] = rec.total;
      std::ostringstream line;
      line.precision(6);
      line << "stage paths: " << method << " recovery " << rec.rate << " over " << rec.total
           << " unique instance(s)";
      ws.log(line.str());
    }
    return metrics;
  });
}

/// Gradient sign sweep over the flip grid.
inline io::json stage_flips(Workspace& ws, const engine::GnnModel<double>& model,
                            const core::DatasetSplit<double>& data) {
  const auto& cfg = ws.config();
  return ws.stage("flips", derive_seed(cfg.seed, 6), [&](std::uint64_t) {
    std::vector<int> instances;
    if (cfg.dataset == "infection")
      instances = detail::cap_instances(detail::path_instances(data.test), cfg.max_instances);
    else
      instances = detail::similarity_instances(cfg, data.test);
    if (instances.empty()) throw ArgumentError("flips: no eligible instances");
    auto grid = cfg.flip_grid.empty() ? default_flip_grid() : cfg.flip_grid;
    auto rep = eval::sign_flip_analysis(model, data.test, instances, grid, cfg.flip_eps);
    io::json fj;
    fj["grid"] = rep.grid;
    fj["eps"] = rep.eps;
    fj["edges_total"] = rep.edges_total;
    fj["any_flip"] = rep.any_flip;
    fj["pos_to_neg"] = rep.pos_to_neg;
    fj["neg_to_pos"] = rep.neg_to_pos;
    io::json rows = io::json::array();
    for (const auto& t : rep.trajectories) {
      io::json row;
      row["node"] = t.node;
      row["edge"] = t.edge;
      row["signs"] = t.signs;
      rows.push_back(std::move(row));
    }
    fj["trajectories"] = std::move(rows);
    ws.write_json("flips.json", fj);
    io::json metrics = io::json::object();
    metrics["flip_edges_total"] = rep.edges_total;
    metrics["flip_any"] = rep.any_flip;
    metrics["flip_pos_to_neg"] = rep.pos_to_neg;
    metrics["flip_neg_to_pos"] = rep.neg_to_pos;
    ws.log("stage flips: " + std::to_string(rep.any_flip) + " flip(s) over " +
           std::to_string(rep.edges_total) + " edge(s)");
    return metrics;
  });
}

inline core::DatasetSplit<double> load_dataset(const Workspace& ws) {
  return io::split_from_json<double>(io::load_json(ws.path("dataset.json").string()));
}

inline engine::GnnModel<double> load_model(const Workspace& ws) {
  return io::model_from_json<double>(io::load_json(ws.path("model.json").string()));
}

inline std::vector<explainers::Explanation<double>> load_explanations_jsonl(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<explainers::Explanation<double>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(io::explanation_from_json<double>(io::json::parse(line)));
    } catch (const io::json::exception& e) {
      throw IoError(path + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// Reassembles an ExplainResult from explanations-<method>.jsonl files,
/// verifying instance alignment across methods.
inline ExplainResult load_explain_result(const Workspace& ws) {
  const auto& cfg = ws.config();
  ExplainResult result;
  result.methods = cfg.methods;
  result.lw_methods = cfg.layerwise_methods;
  auto load_scope = [&](const std::vector<std::string>& methods,
                        std::vector<std::vector<explainers::Explanation<double>>>& out) {
    for (const auto& method : methods) {
      auto list = load_explanations_jsonl(ws.path("explanations-" + method + ".jsonl").string());
      if (list.empty()) throw IoError("explanations-" + method + ".jsonl: no instances");
      if (result.instances.empty()) {
        for (const auto& e : list) result.instances.push_back(e.node);
      } else {
        if (list.size() != result.instances.size())
          throw IoError("explanations-" + method + ".jsonl: instance count mismatch");
        for (std::size_t i = 0; i < list.size(); ++i)
          if (list[i].node != result.instances[i])
            throw IoError("explanations-" + method + ".jsonl: instance order mismatch");
      }
      out.push_back(std::move(list));
    }
  };
  load_scope(result.methods, result.per_method);
  load_scope(result.lw_methods, result.lw_per_method);
  return result;
}

/// Full reproduction run for the configured experiment. Writes every stage
/// artifact plus summary.json; returns the summary.
inline io::json run_pipeline(const PipelineConfig& cfg, std::ostream* log = nullptr) {
  Workspace ws(cfg, log);
  io::json metrics = io::json::object();
  auto merge = [&](const io::json& extra) {
    for (const auto& [key, value] : extra.items()) metrics[key] = value;
  };

  auto data = stage_generate(ws);
  auto trained = stage_train(ws, data);
  metrics["train_accuracy"] = trained.report.train_accuracy;
  metrics["test_accuracy"] = trained.report.test_accuracy;

  const bool wants_explain = cfg.experiment != "paths" && cfg.experiment != "flips";
  const bool wants_paths = cfg.experiment == "infection" || cfg.experiment == "paths";
  const bool wants_flips = cfg.experiment == "flips";

  if (wants_explain) {
    auto ex = stage_explain(ws, trained.model, data);
    metrics["instances"] = static_cast<long>(ex.instances.size());
    merge(stage_compare(ws, ex, trained.model.layers()));
  }
  if (wants_paths) merge(stage_paths(ws, trained.model, data));
  if (wants_flips) merge(stage_flips(ws, trained.model, data));

  io::json summary;
  summary["experiment"] = cfg.experiment;
  summary["seed"] = cfg.seed;
  summary["metrics"] = std::move(metrics);
  ws.stage("summary", cfg.seed, [&](std::uint64_t) {
    ws.write_json("summary.json", summary);
    return 0;
  });
  ws.log("stage summary: wrote " + ws.path("summary.json").string());
  return summary;
}

}  // namespace gnnattr::cli
