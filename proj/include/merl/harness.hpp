// Experiment orchestration: the temperature x seed training grid, per-run
// evaluation/measurement artifacts on disk, report tables, and the
// measure-vs-robustness correlation summary. Layout under one sweep root:
//   index.json
//   runs/<run_id>/manifest.json policy.json value.json trainlog.csv
//                 equilibria.json states.json complexity.{json,csv}
//                 eval_<label>_sy<sigma>.{json,csv}
//   reports/fig1.csv fig2.csv fig3.csv fig3_kde.json appendix_kl.csv
//           correlation.{json,csv}
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "merl/complexity.hpp"
#include "merl/env.hpp"
#include "merl/io.hpp"
#include "merl/ppo.hpp"
#include "merl/robustness.hpp"

namespace merl {

struct EvalConfig {
  std::vector<double> sigma_y_fractions = {0.05, 0.1, 0.2};  // times env state_scale
  std::vector<std::string> equilibria;  // empty -> the trained target only
  int n_episodes = 1024;                // unconditional estimate
  int n_x0 = 256;                       // conditional distribution
  int episodes_per_x0 = 4;
  bool sample_actions = true;  // false evaluates mean actions instead

  json to_json() const;
  static EvalConfig from_json(const json& j);
};

struct MeasureConfig {
  int n_states = 1024;  // visitation states kept for the FIM-trace set
  int n_rollouts = 16;  // noiseless rollouts harvested for those states
  int kde_grid_points = 512;

  json to_json() const;
  static MeasureConfig from_json(const json& j);
};

struct SweepConfig {
  TrainConfig base;  // env / cost / train blocks; alpha0 and seed are overridden per run
  std::vector<double> alpha_grid = {0.0, 1e-3, 4e-3, 1.6e-2, 6.4e-2};
  int n_seeds = 3;
  std::uint64_t seed0 = 1;  // run seeds are seed0, seed0+1, ...
  int parallelism = 1;
  bool paper_scale = false;  // full budgets: 10 seeds, 1e6 steps (2e6 for ks)
  EvalConfig eval;
  MeasureConfig measure;

  json to_json() const;
  // Shares the root object with TrainConfig (env/cost/train) plus optional
  // sweep/eval/measure blocks.
  static SweepConfig from_json(const json& root);
  // Applies the paper_scale budget overrides and returns the effective copy.
  SweepConfig effective() const;
};

struct RunManifest {
  std::string run_id;
  std::string env_name;
  std::string equilibrium_label;
  std::uint64_t seed = 0;
  double alpha0 = 0.0;
  long long m_total = 0;
  std::string config_hash;
  std::string created_at, completed_at;
  bool completed = false;

  // artifact paths relative to the run directory
  std::string policy_path = "policy.json";
  std::string value_path = "value.json";
  std::string trainlog_path = "trainlog.csv";
  std::string equilibria_path = "equilibria.json";
  std::string states_path = "states.json";
  std::string complexity_json_path = "complexity.json";
  std::string complexity_csv_path = "complexity.csv";
  std::vector<std::string> eval_json_paths;
  std::vector<std::string> eval_csv_paths;

  std::string run_dir;  // absolute, set on save/load; not serialized

  json to_json() const;
  static RunManifest from_json(const json& j);
  void save() const;  // run_dir/manifest.json
  static RunManifest load(const std::string& run_dir);
  bool artifacts_exist() const;
};

std::string run_id_for(const std::string& env_name, double alpha0, std::uint64_t seed);

// Noiseless on-policy rollouts; returns n_states network inputs subsampled
// evenly from the visited steps (all of them when fewer were visited).
std::vector<Eigen::VectorXd> collect_visitation_states(const PolicyParams& policy, Env& env,
                                                       int n_states, int n_rollouts,
                                                       RngStream& rng);

void save_states(const std::filesystem::path& path, const std::vector<Eigen::VectorXd>& inputs,
                 double state_scale);
std::vector<Eigen::VectorXd> load_states(const std::filesystem::path& path);

void save_equilibria(const std::filesystem::path& path, const Env& env);

// Writes the per-x0 conditional CSV (columns x0_index, sigma_y, rate_sample).
void write_conditional_csv(const std::filesystem::path& path,
                           const std::vector<ConditionalSample>& samples, double sigma_y);

// Evaluates one trained policy over the (equilibrium, sigma_y) grid, writing
// report JSONs and conditional CSVs into run_dir and recording their paths.
void evaluate_run(const SweepConfig& cfg, const PolicyParams& policy, RunManifest& man);

// Full single-run pipeline: train, collect states, evaluate, measure, write
// the manifest. Skips everything when a completed manifest with a matching
// config hash and intact artifacts already exists.
RunManifest run_single(const SweepConfig& cfg, double alpha0, std::uint64_t seed,
                       const std::string& run_dir);

struct RunFailure {
  std::string run_id;
  std::string message;
};

struct SweepResult {
  std::vector<RunManifest> manifests;  // completed, in (alpha, seed) order
  std::vector<RunFailure> failures;
};

// Runs the full grid under out_dir and writes index.json. Individual run
// failures are recorded and the remaining runs continue.
SweepResult run_sweep(const SweepConfig& cfg, const std::string& out_dir);

std::vector<RunManifest> load_manifests(const std::string& sweep_dir);

// Report emitters; each writes under <sweep_dir>/reports and throws
// std::runtime_error listing any missing artifacts.
std::filesystem::path report_fig1(const std::string& sweep_dir);
std::filesystem::path report_fig2(const std::string& sweep_dir);
std::filesystem::path report_fig3(const std::string& sweep_dir);  // csv; kde json alongside
std::filesystem::path report_appendix_kl(const std::string& sweep_dir);

struct CorrelationEntry {
  std::string measure;
  double rho = 0.0;
  int n = 0;
  double ci_lo = 0.0, ci_hi = 0.0;  // 90% bootstrap interval
};

struct CorrelationSummary {
  std::string robustness_metric = "mean_r_rate";
  std::vector<CorrelationEntry> entries;

  json to_json() const;
};

// Spearman correlation between each complexity measure and the per-model mean
// R_rate (over all sigma_y > 0 evaluations), with bootstrap intervals.
// Requires >= 8 models; writes correlation.json/.csv under reports/.
CorrelationSummary correlate(const std::string& sweep_dir);

}  // namespace merl
