#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "torusdyn/errors.hpp"
#include "torusdyn/experiment.hpp"

using namespace torusdyn;

namespace {

struct Command {
  std::string name;
  std::string help;
  std::vector<std::string> stages;   // targets; dependencies are added
  std::string primary;               // stage whose report is printed
  std::vector<std::string> stats_parts;
};

const std::vector<Command>& commands() {
  static const std::vector<Command> cmds{
      {"map-info", "describe the map", {"map"}, "map", {}},
      {"periodic", "find and classify periodic points", {"periodic"}, "periodic", {}},
      {"preorbit-density", "eps-density certificate for a pre-orbit", {"preorbit_density"}, "preorbit_density", {}},
      {"verify-example", "check the hypotheses of the perturbed example", {"verify_example"}, "verify_example", {}},
      {"zooming-scan", "source zooming data and zooming-time frequency", {"source"}, "source", {}},
      {"build-induced", "build and certify the induced Markov map", {"induced"}, "induced", {}},
      {"measure-sample", "sample the tower measure and run its checks", {"measures"}, "measures", {}},
      {"lyapunov", "Lyapunov exponents under the tower measure and Lebesgue", {"stats"}, "stats", {"lyapunov"}},
      {"correlations", "correlation decay under the tower measure", {"stats"}, "stats", {"correlations"}},
      {"pipeline", "run the stages listed in the config (no implicit dependencies)", {}, "", {}},
  };
  return cmds;
}

void flatten(const nlohmann::json& j, const std::string& prefix, std::ostream& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
  } else if (j.is_array() && !j.empty() && (j.front().is_object() || j.front().is_array())) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "." + std::to_string(i), out);
  } else {
    std::string value = j.is_string() ? j.get<std::string>() : j.dump();
    if (value.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char ch : value) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      value = quoted + "\"";
    }
    out << prefix << "," << value << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"torusdyn: expanding measures and induced Markov maps on the torus"};
  app.require_subcommand(1);

  std::string config_path, out_dir, format = "json";
  std::uint64_t seed = 0;
  int threads = -1;
  app.add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out_dir, "override the output directory");
  app.add_option("--threads", threads, "worker threads (0 = hardware)")->check(CLI::NonNegativeNumber);
  app.add_option("--format", format, "stdout format")->check(CLI::IsMember({"json", "csv"}));

  // Options are accepted after the subcommand as well.
  app.fallthrough();
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& cmd : commands()) subs.emplace_back(app.add_subcommand(cmd.name, cmd.help), &cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  const Command* cmd = nullptr;
  for (const auto& [sub, c] : subs) {
    if (sub->parsed()) cmd = c;
  }

  ExperimentConfig config;
  try {
    config = load_config(config_path);
    if (app.count("--seed")) config.seed = seed;
    if (app.count("--out")) config.output_dir = out_dir;
    if (threads >= 0) config.threads = threads;
    if (cmd->name != "pipeline") {
      config.stages = stage_closure(cmd->stages);
      if (!cmd->stats_parts.empty()) config.stats.parts = cmd->stats_parts;
    }
    // Re-validate the overridden config.
    config = config_from_json(to_json(config));
  } catch (const Error& e) {
    std::cerr << "config: " << e.what() << "\n";
    return kExitValidation;
  }

  const RunResult result = run_experiment(config);
  if (!result.diagnostic.empty()) std::cerr << result.diagnostic << "\n";

  const nlohmann::json* shown = &result.summary;
  if (!cmd->primary.empty() && result.reports.count(cmd->primary)) shown = &result.reports.at(cmd->primary);
  if (format == "json") {
    std::cout << shown->dump(2) << "\n";
  } else if (cmd->name == "measure-sample" && result.csv.count("samples.csv")) {
    std::cout << result.csv.at("samples.csv");
  } else if (cmd->name == "correlations" && result.csv.count("correlations.csv")) {
    std::cout << result.csv.at("correlations.csv");
  } else {
    std::cout << "key,value\n";
    flatten(*shown, "", std::cout);
  }
  return result.exit_code;
}
