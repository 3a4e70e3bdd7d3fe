#pragma once

#include "pobilin/generators.hpp"
#include "pobilin/io.hpp"
#include "pobilin/learner.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pobilin {

struct EnvSpec {
  std::string type = "generator";  // generator | file | inline
  std::string generator = "observable";  // observable | decodable
  int n_states = 2, n_obs = 2, n_actions = 2, horizon = 3;
  double sigma_target = 0.5;
  int memory = 0;  // decodable window
  int rank_d = 2;
  std::uint64_t seed = 13;
  std::string path;
  Json model;  // file / inline
};

struct ExperimentConfig {
  EnvSpec env;
  std::string algorithm = "provable";  // provable | provable-dis | oracle-only
  int memory = 1;
  int class_size = 64;
  std::uint64_t class_seed = 5;
  int K = 1;
  double grid_resolution = 0.0;
  double grid_bound = 1.0;
  int T = 0;  // 0: compute_iteration_budget
  long m = 20000;
  long m0 = 0;
  std::string radius = "calibrate";  // calibrate | theory | fixed
  double R = 0.0;
  double slack = 1.25;
  int calibration_rollins = 64;
  double delta = 0.1;
  int rank_override = 0;  // bilinear rank for the budget; 0 means max_h |Z_{h-1}||S|
  double lambda = 1.0;
  std::uint64_t seed = 1;
  std::string output_dir = "pobilin-out";

  Json to_json() const;
};

// Accepts a config object or a manifest (its "config" member); throws ConfigError on schema errors.
ExperimentConfig parse_config(const Json& j);

struct BudgetInputs {
  int d = 0;
  double B_X = 0.0;
  double B_W = 0.0;
};
BudgetInputs budget_inputs(const TabularPomdp& m, const PolicyClass& cls, const LinkClass& links);

struct ExperimentResult {
  Json manifest;
  std::string metrics_csv;  // empty in oracle-only mode
  std::string report_md;
  Json oracle;
  std::optional<RunResult> run;
};

TabularPomdp resolve_model(const EnvSpec& env, std::optional<Decoder>* decoder = nullptr);
ExperimentResult run_experiment(const ExperimentConfig& cfg, bool write_files = true);

std::string metrics_csv(const RunResult& r, int H, long m, long m0);
// Markdown tables for each metrics file plus a side-by-side suboptimality comparison.
std::string report(const std::vector<std::string>& csv_texts, const std::vector<std::string>& names);

}  // namespace pobilin
