#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "gnnattr/pipeline.hpp"

namespace {

using gnnattr::cli::PipelineConfig;

/// Option keys shared by config files and flags; --<key> <value> is
/// equivalent to a `key = value` config-file line, and flags win.
const std::vector<std::pair<std::string, std::string>> kOptionKeys = {
    {"experiment", "experiment preset: neg-evidence | neg-evidence-multiclass | infection | paths | flips | custom"},
    {"dataset", "dataset family: neg-evidence | infection"},
    {"seed", "master seed; every stage derives its own stream"},
    {"out", "output directory for all artifacts"},
    {"jobs", "worker threads for per-instance stages"},
    {"nodes", "node count per generated graph"},
    {"red", "red source nodes (neg-evidence)"},
    {"blue", "blue source nodes (neg-evidence)"},
    {"green", "green source nodes; > 0 switches to multiclass (neg-evidence)"},
    {"max-color-in", "max colored in-edges per gray node (neg-evidence)"},
    {"gray-edge-prob", "gray-to-gray edge probability (neg-evidence)"},
    {"edge-prob", "edge probability (infection)"},
    {"infected", "infected source count (infection)"},
    {"max-class", "distance classes run 0..max-class (infection)"},
    {"train-graphs", "number of training graphs"},
    {"max-instances", "cap on explanation/walk instances; 0 = all"},
    {"hidden", "comma-separated hidden widths, empty for single layer"},
    {"root-weight", "include the root term (0/1)"},
    {"activation", "hidden activation: identity | relu"},
    {"optimizer", "training optimizer: sgd | adam"},
    {"lr", "training learning rate"},
    {"epochs", "training epochs"},
    {"weight-decay", "L2 penalty weight"},
    {"l1", "L1 penalty weight"},
    {"gnnx-epochs", "mask optimization epochs"},
    {"gnnx-lr", "mask optimization learning rate"},
    {"gnnx-alpha", "mask size penalty weight"},
    {"gnnx-beta", "mask entropy penalty weight"},
    {"gnnx-adam", "adam for mask optimization (0/1)"},
    {"posgrad-eps", "positive-gradients threshold"},
    {"methods", "comma-separated input-scope method ids"},
    {"layerwise-methods", "comma-separated layerwise method ids"},
    {"walk-methods", "comma-separated walk extractors: dag | amp | brute"},
    {"method", "alias for walk-methods"},
    {"grid", "comma-separated flip grid values in [0,1]"},
    {"flip-eps", "zero threshold for gradient signs"},
};

struct CommandState {
  std::string config_path;
  std::string experiment_arg;
  std::vector<std::pair<std::string, std::string>> overrides;
};

void add_common_options(CLI::App* cmd, CommandState& state) {
  cmd->add_option("--config", state.config_path, "flat key=value config file");
  for (const auto& [key, help] : kOptionKeys) {
    cmd->add_option_function<std::string>(
            "--" + key,
            [&state, key = key](const std::string& value) {
              state.overrides.emplace_back(key, value);
            },
            help)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }
}

PipelineConfig build_config(const CommandState& state) {
  std::vector<std::pair<std::string, std::string>> merged;
  if (!state.config_path.empty()) merged = gnnattr::cli::parse_config_file(state.config_path);
  merged.insert(merged.end(), state.overrides.begin(), state.overrides.end());

  std::string experiment = state.experiment_arg.empty() ? "custom" : state.experiment_arg;
  for (const auto& [key, value] : merged)
    if (key == "experiment") experiment = value;

  PipelineConfig cfg = gnnattr::cli::default_config(experiment);
  for (const auto& [key, value] : merged) gnnattr::cli::apply_option(cfg, key, value);
  return cfg;
}

int dispatch(const std::string& command, const CommandState& state) {
  PipelineConfig cfg = build_config(state);
  gnnattr::cli::Workspace ws(cfg, &std::cout);

  if (command == "run") {
    auto summary = gnnattr::cli::run_pipeline(cfg, &std::cout);
    std::cout << summary.dump(2) << "\n";
    return 0;
  }
  if (command == "generate") {
    gnnattr::cli::stage_generate(ws);
    return 0;
  }

  auto data = gnnattr::cli::load_dataset(ws);
  if (command == "train") {
    gnnattr::cli::stage_train(ws, data);
    return 0;
  }

  auto model = gnnattr::cli::load_model(ws);
  if (command == "explain") {
    gnnattr::cli::stage_explain(ws, model, data);
    return 0;
  }
  if (command == "compare") {
    auto ex = gnnattr::cli::load_explain_result(ws);
    auto metrics = gnnattr::cli::stage_compare(ws, ex, model.layers());
    std::cout << metrics.dump(2) << "\n";
    return 0;
  }
  if (command == "paths") {
    auto metrics = gnnattr::cli::stage_paths(ws, model, data);
    std::cout << metrics.dump(2) << "\n";
    return 0;
  }
  if (command == "flips") {
    auto metrics = gnnattr::cli::stage_flips(ws, model, data);
    std::cout << metrics.dump(2) << "\n";
    return 0;
  }
  throw gnnattr::ArgumentError("unknown command '" + command + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edge attribution and path relevance for message-passing networks"};
  app.require_subcommand(1);

  struct Registered {
    CLI::App* cmd;
    std::string name;
  };
  CommandState state;
  std::vector<Registered> commands;
  auto add = [&](const std::string& name, const std::string& help, bool experiment_positional) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common_options(cmd, state);
    if (experiment_positional)
      cmd->add_option("preset", state.experiment_arg, "experiment preset id");
    commands.push_back({cmd, name});
  };
  add("generate", "generate a dataset and write dataset.json", false);
  add("train", "train a model on <out>/dataset.json", false);
  add("explain", "write per-instance explanations for the configured methods", false);
  add("compare", "aggregate explanation files into similarity matrices", false);
  add("paths", "extract top walks and score path recovery", false);
  add("flips", "sweep edge weights and report gradient sign flips", false);
  add("run", "full pipeline: generate, train, explain, compare, paths/flips, summary", true);

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& reg : commands)
      if (reg.cmd->parsed()) return dispatch(reg.name, state);
    return 2;
  } catch (const gnnattr::cli::PipelineError& e) {
    std::cerr << "error [stage " << e.stage() << "]: " << e.what() << "\n";
    return 1;
  } catch (const gnnattr::IoError& e) {
    std::cerr << "error [stage io]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error [stage config]: " << e.what() << "\n";
    return 1;
  }
}
