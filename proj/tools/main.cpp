// Command-line front end: train / evaluate / measure / sweep / report.
// Exit codes: 0 success, 1 partial or runtime failure, 2 config error.
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "merl/harness.hpp"
#include "merl/stats.hpp"

namespace {

using namespace merl;
namespace fs = std::filesystem;

// stream tags for the standalone CLI paths (the sweep uses its own)
constexpr std::uint64_t kCliEval = 21;
constexpr std::uint64_t kCliCond = 22;
constexpr std::uint64_t kCliStates = 23;

struct GlobalOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int parallelism = 0;  // 0 = take from config
};

json load_config(const std::string& path) {
  if (path.empty()) throw ConfigError("--config is required for this subcommand");
  return load_json(path);
}

TrainConfig run_dir_config(const std::string& run_dir) {
  const fs::path p = fs::path(run_dir) / "config.json";
  if (!fs::exists(p)) {
    throw ConfigError("no config.json in run directory " + run_dir);
  }
  return TrainConfig::from_json(load_json(p));
}

int cmd_train(const GlobalOpts& g) {
  TrainConfig cfg = TrainConfig::from_json(load_config(g.config_path));
  if (g.seed_set) cfg.seed = g.seed;
  ensure_dir(g.out_dir);
  save_json(fs::path(g.out_dir) / "config.json", cfg.to_json());

  std::unique_ptr<Env> env = make_env(cfg.env);
  const TrainResult tr = train(cfg, *env);
  tr.policy.save(fs::path(g.out_dir) / "policy.json");
  save_json(fs::path(g.out_dir) / "value.json", tr.value.to_json());
  write_trainlog_csv(fs::path(g.out_dir) / "trainlog.csv", tr.log);
  save_equilibria(fs::path(g.out_dir) / "equilibria.json", *env);

  const double final_cost = tr.log.empty() ? 0.0 : tr.log.back().mean_episode_cost;
  std::printf("trained %s seed=%llu alpha0=%s steps=%lld final mean episode cost %s -> %s\n",
              cfg.env.name.c_str(), static_cast<unsigned long long>(cfg.seed),
              fmt_double(cfg.alpha0).c_str(), cfg.m_total, fmt_double(final_cost).c_str(),
              g.out_dir.c_str());
  return 0;
}

int cmd_evaluate(const GlobalOpts& g, const std::string& run_dir, double sigma_y,
                 std::string label, int episodes, int n_x0, int episodes_per_x0, bool crn,
                 bool mean_actions) {
  TrainConfig cfg = run_dir_config(run_dir);
  std::unique_ptr<Env> env = make_env(cfg.env);
  if (!label.empty()) env->set_target(label);
  label = env->target().label;
  const PolicyParams policy = PolicyParams::load(fs::path(run_dir) / "policy.json");
  const std::uint64_t seed = g.seed_set ? g.seed : cfg.seed;
  const bool sample_actions = !mean_actions;

  RngStream er = RngStream::derived(seed, {kCliEval});
  ExcessRiskReport rep =
      excess_risk(policy, *env, sigma_y, episodes, cfg.gamma, er, sample_actions, crn);
  RngStream cr = RngStream::derived(seed, {kCliCond});
  const std::vector<ConditionalSample> cond = conditional_excess_risk(
      policy, *env, sigma_y, n_x0, episodes_per_x0, cfg.gamma, cr, sample_actions);
  rep.conditional_rates.resize(static_cast<Eigen::Index>(cond.size()));
  for (std::size_t i = 0; i < cond.size(); ++i) {
    rep.conditional_rates[static_cast<Eigen::Index>(i)] = cond[i].rate;
  }

  const std::string stem = "eval_" + label + "_sy" + fmt_double(sigma_y);
  save_json(fs::path(run_dir) / (stem + ".json"), rep.to_json());
  write_conditional_csv(fs::path(run_dir) / (stem + ".csv"), cond, sigma_y);
  std::printf("%s sigma_y=%s: J_noisy=%s J_clean=%s R=%s R_rate=%s (%d episodes) -> %s.{json,csv}\n",
              label.c_str(), fmt_double(sigma_y).c_str(), fmt_double(rep.j_noisy).c_str(),
              fmt_double(rep.j_clean).c_str(), fmt_double(rep.r).c_str(),
              fmt_double(rep.r_rate).c_str(), episodes,
              (fs::path(run_dir) / stem).string().c_str());
  return 0;
}

int cmd_measure(const GlobalOpts& g, const std::string& run_dir, int n_states, int n_rollouts,
                int kde_grid_points) {
  const PolicyParams policy = PolicyParams::load(fs::path(run_dir) / "policy.json");
  std::vector<Eigen::VectorXd> states;
  const fs::path states_path = fs::path(run_dir) / "states.json";
  if (fs::exists(states_path)) {
    states = load_states(states_path);
  } else {
    TrainConfig cfg = run_dir_config(run_dir);
    std::unique_ptr<Env> env = make_env(cfg.env);
    const std::uint64_t seed = g.seed_set ? g.seed : cfg.seed;
    RngStream rng = RngStream::derived(seed, {kCliStates});
    states = collect_visitation_states(policy, *env, n_states, n_rollouts, rng);
    save_states(states_path, states, env->state_scale());
  }
  const ComplexityReport rep = measure_policy(policy, states, kde_grid_points);
  save_json(fs::path(run_dir) / "complexity.json", rep.to_json());
  CsvWriter w(fs::path(run_dir) / "complexity.csv", ComplexityReport::csv_header());
  w.row(rep.csv_row());
  w.close();
  std::printf("measured %zu states: fim_trace_mean=%s layer_product_p2=%s -> %s/complexity.{json,csv}\n",
              states.size(), fmt_double(rep.fim_trace_mean).c_str(),
              fmt_double(rep.layer_product_p2).c_str(), run_dir.c_str());
  return 0;
}

int cmd_sweep(const GlobalOpts& g, bool paper_scale) {
  SweepConfig cfg = SweepConfig::from_json(load_config(g.config_path));
  if (g.seed_set) cfg.seed0 = g.seed;
  if (g.parallelism > 0) cfg.parallelism = g.parallelism;
  if (paper_scale) cfg.paper_scale = true;
  const SweepResult res = run_sweep(cfg, g.out_dir);
  std::printf("sweep: %zu runs completed, %zu failed -> %s\n", res.manifests.size(),
              res.failures.size(), g.out_dir.c_str());
  for (const auto& f : res.failures) {
    std::fprintf(stderr, "run %s failed: %s\n", f.run_id.c_str(), f.message.c_str());
  }
  return res.failures.empty() ? 0 : 1;
}

int cmd_report(const std::string& sweep_dir, const std::string& which) {
  bool all = which == "all";
  if (all || which == "fig1") std::printf("%s\n", report_fig1(sweep_dir).c_str());
  if (all || which == "fig2") std::printf("%s\n", report_fig2(sweep_dir).c_str());
  if (all || which == "fig3") std::printf("%s\n", report_fig3(sweep_dir).c_str());
  if (all || which == "appendix_kl") std::printf("%s\n", report_appendix_kl(sweep_dir).c_str());
  if (which == "correlation" || (all && load_manifests(sweep_dir).size() >= 8)) {
    const CorrelationSummary sum = correlate(sweep_dir);
    for (const auto& e : sum.entries) {
      std::printf("spearman(%s, mean_r_rate) = %s [%s, %s] n=%d\n", e.measure.c_str(),
                  fmt_double(e.rho).c_str(), fmt_double(e.ci_lo).c_str(),
                  fmt_double(e.ci_hi).c_str(), e.n);
    }
  } else if (all) {
    std::printf("correlation skipped: fewer than 8 models\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"entropy-regularised control benchmark harness"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--out", g.out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", g.seed, "RNG seed override");
  app.add_option("--parallelism", g.parallelism, "concurrent runs for sweep");

  CLI::App* train_cmd = app.add_subcommand("train", "train one policy from --config");

  std::string run_dir, eq_label, which = "all", sweep_dir;
  double sigma_y = 0.0;
  int episodes = 1024, n_x0 = 256, episodes_per_x0 = 4;
  bool crn = true, mean_actions = false, paper_scale = false;
  int n_states = 1024, n_rollouts = 16, kde_grid_points = 512;

  CLI::App* eval_cmd = app.add_subcommand("evaluate", "excess risk of a trained run");
  eval_cmd->add_option("--run", run_dir, "run directory with policy.json + config.json")
      ->required();
  eval_cmd->add_option("--sigma-y", sigma_y, "observation noise std")->required();
  eval_cmd->add_option("--equilibrium", eq_label, "target equilibrium label");
  eval_cmd->add_option("--episodes", episodes, "episodes for the unconditional estimate");
  eval_cmd->add_option("--n-x0", n_x0, "initial states for the conditional distribution");
  eval_cmd->add_option("--episodes-per-x0", episodes_per_x0, "episode pairs per initial state");
  eval_cmd->add_flag("--crn,!--no-crn", crn, "pair noisy/noiseless streams (default on)");
  eval_cmd->add_flag("--mean-actions", mean_actions, "evaluate mean actions instead of samples");

  CLI::App* measure_cmd = app.add_subcommand("measure", "complexity measures of a trained run");
  measure_cmd->add_option("--run", run_dir, "run directory with policy.json")->required();
  measure_cmd->add_option("--n-states", n_states, "visitation states if none are stored");
  measure_cmd->add_option("--n-rollouts", n_rollouts, "rollouts to harvest states from");
  measure_cmd->add_option("--kde-grid", kde_grid_points, "KDE grid points");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "temperature x seed grid from --config");
  sweep_cmd->add_flag("--paper-scale", paper_scale, "full-scale budgets (slow)");

  CLI::App* report_cmd = app.add_subcommand("report", "aggregate tables from a finished sweep");
  report_cmd->add_option("--sweep-dir", sweep_dir, "sweep output directory")->required();
  report_cmd->add_option("--which", which,
                         "fig1|fig2|fig3|appendix_kl|correlation|all (default all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // --help exits 0; any parse failure is a config error
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    if (train_cmd->parsed()) return cmd_train(g);
    if (eval_cmd->parsed()) {
      return cmd_evaluate(g, run_dir, sigma_y, eq_label, episodes, n_x0, episodes_per_x0, crn,
                          mean_actions);
    }
    if (measure_cmd->parsed()) return cmd_measure(g, run_dir, n_states, n_rollouts,
                                                  kde_grid_points);
    if (sweep_cmd->parsed()) return cmd_sweep(g, paper_scale);
    if (report_cmd->parsed()) return cmd_report(sweep_dir, which);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
