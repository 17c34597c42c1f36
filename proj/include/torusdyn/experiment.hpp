#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace torusdyn {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCertificateFailed = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitDependency = 3;
inline constexpr int kExitIo = 4;
// A failing stage exits with kExitStageBase + its index in stage_order().
inline constexpr int kExitStageBase = 10;

// Canonical execution order: map, periodic, verify_example, preorbit_density,
// source, induced, measures, stats.
const std::vector<std::string>& stage_order();
// Stages a stage needs to have run first.
std::vector<std::string> stage_dependencies(const std::string& stage);

struct ExperimentConfig {
  nlohmann::json map;
  std::vector<std::string> stages;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string output_dir = "out";

  struct Periodic {
    int period = 1;
    int seed_grid = 64;
  } periodic;

  struct Example {
    int volume_grid = 512;
    int expansion_grid = 512;
    double density_eps = 0.05;
    int density_max_depth = 12;
    std::size_t density_node_budget = 20000000;
    double irg_eps = 0.01;
    double irg_radius = 0.2;
    int irg_steps = 40;
  } example;

  struct Density {
    std::optional<std::vector<double>> point;
    double eps = 0.05;
    int max_depth = 12;
    std::size_t node_budget = 20000000;
  } density;

  struct Source {
    std::optional<std::vector<double>> point;  // default: first source found
    double delta_search = 0.125;
    int horizon = 20;
    std::optional<std::vector<double>> scan_point;  // zooming-frequency scan
    int scan_n_max = 64;
  } source;

  struct Induced {
    double r_over_delta = 0.125;
    double alpha_rate = 0.125;
    int max_R = 8;
    std::size_t cell_budget = 2048;
    std::size_t node_budget = 50000000;
    int markov_samples = 64;
  } induced;

  struct Measures {
    std::string family = "geometric";
    double theta = 0.5;
    int cascade_depth = 3;
    std::size_t n_samples = 100000;
    int histogram_bins = 64;      // total bins, split evenly over the axes
    std::size_t csv_samples = 2000;
  } measures;

  struct Stats {
    std::vector<std::string> parts{"lyapunov", "correlations", "tail"};
    int lyapunov_iterates = 1000;
    std::size_t lyapunov_samples = 256;
    int lebesgue_iterates = 1000000;
    std::string psi = "centered_x";
    std::string phi = "centered_x";
    std::string reference_observable = "tent";
    int max_lag = 16;
    std::size_t correlation_samples = 200000;
    int tail_n_max = 8;
  } stats;
};

// Parses and validates; throws Error(ConfigValidation) listing every problem.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::string& path);

// Throws Error(StageDependency) naming the first missing stage.
void check_stage_dependencies(const std::vector<std::string>& stages);
// The requested stages plus everything they depend on, in canonical order.
std::vector<std::string> stage_closure(const std::vector<std::string>& stages);

struct RunResult {
  int exit_code = kExitOk;
  nlohmann::json summary;
  std::map<std::string, nlohmann::json> reports;  // per stage
  std::map<std::string, std::string> csv;         // samples.csv, correlations.csv
  std::string failed_stage;
  std::string diagnostic;
};

// Runs config.stages in canonical order. Reports and CSV files go to
// output_dir when it is non-empty. Never throws for stage failures; they are
// turned into exit codes with a diagnostic prefixed by the stage name.
RunResult run_experiment(const ExperimentConfig& config);

}  // namespace torusdyn
