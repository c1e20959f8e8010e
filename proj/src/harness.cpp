#include "merl/harness.hpp"

#include <algorithm>
#include <optional>
#include <set>
#include <thread>
#include <tuple>

#include "merl/stats.hpp"

namespace merl {

namespace fs = std::filesystem;

namespace {

// stream tags for the per-run evaluation / measurement channels
enum HarnessTag : std::uint64_t {
  kEvalUncond = 11,
  kEvalCond = 12,
  kVisitation = 13,
};
constexpr std::uint64_t kCorrelationSeed = 77;

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ", ";
    out += parts[i];
  }
  return out;
}

void check_keys(const json& block, const std::set<std::string>& allowed, const char* name) {
  if (!block.is_object()) throw ConfigError(std::string(name) + " block must be an object");
  for (auto it = block.begin(); it != block.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError("unknown key '" + it.key() + "' in " + name);
    }
  }
}

fs::path reports_dir(const std::string& sweep_dir) {
  fs::path p = fs::path(sweep_dir) / "reports";
  ensure_dir(p);
  return p;
}

std::vector<RunManifest> sorted_manifests(const std::string& sweep_dir) {
  std::vector<RunManifest> mans = load_manifests(sweep_dir);
  std::sort(mans.begin(), mans.end(), [](const RunManifest& a, const RunManifest& b) {
    return std::tie(a.env_name, a.alpha0, a.seed) < std::tie(b.env_name, b.alpha0, b.seed);
  });
  return mans;
}

}  // namespace

json EvalConfig::to_json() const {
  json f = json::array();
  for (double v : sigma_y_fractions) f.push_back(v);
  return json{{"sigma_y_fractions", f}, {"equilibria", equilibria},
              {"n_episodes", n_episodes}, {"n_x0", n_x0},
              {"episodes_per_x0", episodes_per_x0}, {"sample_actions", sample_actions}};
}

EvalConfig EvalConfig::from_json(const json& j) {
  EvalConfig c;
  check_keys(j, {"sigma_y_fractions", "equilibria", "n_episodes", "n_x0", "episodes_per_x0",
                 "sample_actions"}, "eval");
  if (j.contains("sigma_y_fractions")) {
    c.sigma_y_fractions = j["sigma_y_fractions"].get<std::vector<double>>();
  }
  if (j.contains("equilibria")) c.equilibria = j["equilibria"].get<std::vector<std::string>>();
  if (j.contains("n_episodes")) c.n_episodes = j["n_episodes"].get<int>();
  if (j.contains("n_x0")) c.n_x0 = j["n_x0"].get<int>();
  if (j.contains("episodes_per_x0")) c.episodes_per_x0 = j["episodes_per_x0"].get<int>();
  if (j.contains("sample_actions")) c.sample_actions = j["sample_actions"].get<bool>();
  if (c.sigma_y_fractions.empty()) throw ConfigError("eval.sigma_y_fractions must be non-empty");
  for (double v : c.sigma_y_fractions) {
    if (v < 0.0) throw ConfigError("eval.sigma_y_fractions must be >= 0");
  }
  if (c.n_episodes < 1 || c.n_x0 < 1 || c.episodes_per_x0 < 1) {
    throw ConfigError("eval episode/state counts must be >= 1");
  }
  return c;
}

json MeasureConfig::to_json() const {
  return json{{"n_states", n_states}, {"n_rollouts", n_rollouts},
              {"kde_grid_points", kde_grid_points}};
}

MeasureConfig MeasureConfig::from_json(const json& j) {
  MeasureConfig c;
  check_keys(j, {"n_states", "n_rollouts", "kde_grid_points"}, "measure");
  if (j.contains("n_states")) c.n_states = j["n_states"].get<int>();
  if (j.contains("n_rollouts")) c.n_rollouts = j["n_rollouts"].get<int>();
  if (j.contains("kde_grid_points")) c.kde_grid_points = j["kde_grid_points"].get<int>();
  if (c.n_states < 1 || c.n_rollouts < 1) throw ConfigError("measure counts must be >= 1");
  if (c.kde_grid_points < 2) throw ConfigError("measure.kde_grid_points must be >= 2");
  return c;
}

json SweepConfig::to_json() const {
  json root = base.to_json();
  json grid = json::array();
  for (double a : alpha_grid) grid.push_back(a);
  root["sweep"] = json{{"alpha_grid", grid}, {"n_seeds", n_seeds}, {"seed0", seed0},
                       {"parallelism", parallelism}, {"paper_scale", paper_scale}};
  root["eval"] = eval.to_json();
  root["measure"] = measure.to_json();
  return root;
}

SweepConfig SweepConfig::from_json(const json& root) {
  SweepConfig c;
  c.base = TrainConfig::from_json(root);
  if (root.contains("sweep")) {
    const json& s = root["sweep"];
    check_keys(s, {"alpha_grid", "n_seeds", "seed0", "parallelism", "paper_scale"}, "sweep");
    if (s.contains("alpha_grid")) c.alpha_grid = s["alpha_grid"].get<std::vector<double>>();
    if (s.contains("n_seeds")) c.n_seeds = s["n_seeds"].get<int>();
    if (s.contains("seed0")) c.seed0 = s["seed0"].get<std::uint64_t>();
    if (s.contains("parallelism")) c.parallelism = s["parallelism"].get<int>();
    if (s.contains("paper_scale")) c.paper_scale = s["paper_scale"].get<bool>();
  }
  if (root.contains("eval")) c.eval = EvalConfig::from_json(root["eval"]);
  if (root.contains("measure")) c.measure = MeasureConfig::from_json(root["measure"]);
  if (c.alpha_grid.empty()) throw ConfigError("sweep.alpha_grid must be non-empty");
  if (std::find(c.alpha_grid.begin(), c.alpha_grid.end(), 0.0) == c.alpha_grid.end()) {
    throw ConfigError("sweep.alpha_grid must contain 0 (the control run)");
  }
  for (double a : c.alpha_grid) {
    if (a < 0.0) throw ConfigError("sweep.alpha_grid entries must be >= 0");
  }
  if (c.n_seeds < 1) throw ConfigError("sweep.n_seeds must be >= 1");
  if (c.parallelism < 1) throw ConfigError("sweep.parallelism must be >= 1");
  return c;
}

SweepConfig SweepConfig::effective() const {
  SweepConfig c = *this;
  if (c.paper_scale) {
    c.base.m_total = (c.base.env.name == "ks") ? 2000000 : 1000000;
    c.n_seeds = 10;
  }
  return c;
}

json RunManifest::to_json() const {
  json a;
  a["policy"] = policy_path;
  a["value"] = value_path;
  a["trainlog"] = trainlog_path;
  a["equilibria"] = equilibria_path;
  a["states"] = states_path;
  a["complexity_json"] = complexity_json_path;
  a["complexity_csv"] = complexity_csv_path;
  a["eval_json"] = eval_json_paths;
  a["eval_csv"] = eval_csv_paths;
  json j;
  j["run_id"] = run_id;
  j["env_name"] = env_name;
  j["equilibrium_label"] = equilibrium_label;
  j["seed"] = seed;
  j["alpha0"] = alpha0;
  j["m_total"] = m_total;
  j["config_hash"] = config_hash;
  j["created_at"] = created_at;
  j["completed_at"] = completed_at;
  j["completed"] = completed;
  j["artifacts"] = a;
  return j;
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.env_name = j.at("env_name").get<std::string>();
  m.equilibrium_label = j.at("equilibrium_label").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.alpha0 = j.at("alpha0").get<double>();
  m.m_total = j.at("m_total").get<long long>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.created_at = j.at("created_at").get<std::string>();
  m.completed_at = j.at("completed_at").get<std::string>();
  m.completed = j.at("completed").get<bool>();
  const json& a = j.at("artifacts");
  m.policy_path = a.at("policy").get<std::string>();
  m.value_path = a.at("value").get<std::string>();
  m.trainlog_path = a.at("trainlog").get<std::string>();
  m.equilibria_path = a.at("equilibria").get<std::string>();
  m.states_path = a.at("states").get<std::string>();
  m.complexity_json_path = a.at("complexity_json").get<std::string>();
  m.complexity_csv_path = a.at("complexity_csv").get<std::string>();
  m.eval_json_paths = a.at("eval_json").get<std::vector<std::string>>();
  m.eval_csv_paths = a.at("eval_csv").get<std::vector<std::string>>();
  return m;
}

void RunManifest::save() const {
  save_json(fs::path(run_dir) / "manifest.json", to_json());
}

RunManifest RunManifest::load(const std::string& dir) {
  RunManifest m = from_json(load_json(fs::path(dir) / "manifest.json"));
  m.run_dir = dir;
  return m;
}

bool RunManifest::artifacts_exist() const {
  std::vector<std::string> rels{policy_path,  value_path,           trainlog_path,
                                equilibria_path, states_path,       complexity_json_path,
                                complexity_csv_path};
  rels.insert(rels.end(), eval_json_paths.begin(), eval_json_paths.end());
  rels.insert(rels.end(), eval_csv_paths.begin(), eval_csv_paths.end());
  for (const auto& rel : rels) {
    if (!fs::exists(fs::path(run_dir) / rel)) return false;
  }
  return true;
}

std::string run_id_for(const std::string& env_name, double alpha0, std::uint64_t seed) {
  return env_name + "_alpha" + fmt_double(alpha0) + "_seed" + std::to_string(seed);
}

std::vector<Eigen::VectorXd> collect_visitation_states(const PolicyParams& policy, Env& env,
                                                       int n_states, int n_rollouts,
                                                       RngStream& rng) {
  std::vector<Eigen::VectorXd> all;
  const int H = env.horizon() - 1;
  for (int r = 0; r < n_rollouts; ++r) {
    const EnvState s0 = env.initial_state(rng);
    rollout_cost(env, policy, s0.x, H, 1.0, 0.0, rng, rng, true, &all);
  }
  const int total = static_cast<int>(all.size());
  if (total <= n_states) return all;
  std::vector<Eigen::VectorXd> out;
  out.reserve(n_states);
  for (int k = 0; k < n_states; ++k) {
    out.push_back(all[static_cast<std::size_t>(static_cast<long long>(k) * total / n_states)]);
  }
  return out;
}

void save_states(const fs::path& path, const std::vector<Eigen::VectorXd>& inputs,
                 double state_scale) {
  json arr = json::array();
  for (const auto& v : inputs) arr.push_back(to_json(v));
  save_json(path, json{{"state_scale", state_scale}, {"inputs", arr}});
}

std::vector<Eigen::VectorXd> load_states(const fs::path& path) {
  const json j = load_json(path);
  if (!j.contains("inputs") || !j["inputs"].is_array()) {
    throw ConfigError("states file " + path.string() + " has no 'inputs' array");
  }
  std::vector<Eigen::VectorXd> out;
  out.reserve(j["inputs"].size());
  for (const auto& e : j["inputs"]) out.push_back(vector_from_json(e));
  return out;
}

void save_equilibria(const fs::path& path, const Env& env) {
  json arr = json::array();
  for (const auto& eq : env.equilibria()) {
    arr.push_back(json{{"label", eq.label}, {"x", to_json(eq.x)},
                       {"residual_norm", eq.residual_norm}});
  }
  save_json(path, arr);
}

void write_conditional_csv(const fs::path& path, const std::vector<ConditionalSample>& samples,
                           double sigma_y) {
  CsvWriter w(path, {"x0_index", "sigma_y", "rate_sample"});
  for (const auto& s : samples) {
    w.row({std::to_string(s.x0_index), fmt_double(sigma_y), fmt_double(s.rate)});
  }
  w.close();
}

void evaluate_run(const SweepConfig& cfg, const PolicyParams& policy, RunManifest& man) {
  std::vector<std::string> labels = cfg.eval.equilibria;
  if (labels.empty()) labels = {man.equilibrium_label};
  EnvConfig ec = cfg.base.env;
  ec.apply_name_defaults();
  for (std::size_t ei = 0; ei < labels.size(); ++ei) {
    std::unique_ptr<Env> env = make_env(ec);
    env->set_target(labels[ei]);
    for (std::size_t si = 0; si < cfg.eval.sigma_y_fractions.size(); ++si) {
      const double sigma = cfg.eval.sigma_y_fractions[si] * env->state_scale();
      RngStream er = RngStream::derived(man.seed, {kEvalUncond, ei, si});
      ExcessRiskReport rep = excess_risk(policy, *env, sigma, cfg.eval.n_episodes,
                                         cfg.base.gamma, er, cfg.eval.sample_actions);
      RngStream cr = RngStream::derived(man.seed, {kEvalCond, ei, si});
      const std::vector<ConditionalSample> cond =
          conditional_excess_risk(policy, *env, sigma, cfg.eval.n_x0, cfg.eval.episodes_per_x0,
                                  cfg.base.gamma, cr, cfg.eval.sample_actions);
      rep.conditional_rates.resize(static_cast<Eigen::Index>(cond.size()));
      for (std::size_t i = 0; i < cond.size(); ++i) {
        rep.conditional_rates[static_cast<Eigen::Index>(i)] = cond[i].rate;
      }
      const std::string stem = "eval_" + labels[ei] + "_sy" + fmt_double(sigma);
      save_json(fs::path(man.run_dir) / (stem + ".json"), rep.to_json());
      write_conditional_csv(fs::path(man.run_dir) / (stem + ".csv"), cond, sigma);
      man.eval_json_paths.push_back(stem + ".json");
      man.eval_csv_paths.push_back(stem + ".csv");
    }
  }
}

RunManifest run_single(const SweepConfig& cfg, double alpha0, std::uint64_t seed,
                       const std::string& run_dir) {
  TrainConfig tc = cfg.base;
  tc.alpha0 = alpha0;
  tc.seed = seed;
  tc.env.apply_name_defaults();

  json canon = tc.to_json();
  canon["eval"] = cfg.eval.to_json();
  canon["measure"] = cfg.measure.to_json();
  const std::string hash = fnv1a64_hex(canon.dump(2));

  if (fs::exists(fs::path(run_dir) / "manifest.json")) {
    try {
      RunManifest old = RunManifest::load(run_dir);
      if (old.completed && old.config_hash == hash && old.artifacts_exist()) return old;
    } catch (const std::exception&) {
      // stale or corrupt manifest: redo the run
    }
  }
  ensure_dir(run_dir);
  save_json(fs::path(run_dir) / "config.json", canon);

  RunManifest man;
  man.run_id = run_id_for(tc.env.name, alpha0, seed);
  man.env_name = tc.env.name;
  man.equilibrium_label = tc.env.equilibrium_label;
  man.seed = seed;
  man.alpha0 = alpha0;
  man.m_total = tc.m_total;
  man.config_hash = hash;
  man.created_at = now_iso8601();
  man.run_dir = run_dir;

  std::unique_ptr<Env> env = make_env(tc.env);
  TrainResult tr = train(tc, *env);
  tr.policy.save(fs::path(run_dir) / man.policy_path);
  save_json(fs::path(run_dir) / man.value_path, tr.value.to_json());
  write_trainlog_csv(fs::path(run_dir) / man.trainlog_path, tr.log);
  save_equilibria(fs::path(run_dir) / man.equilibria_path, *env);

  RngStream vis = RngStream::derived(seed, {kVisitation});
  const std::vector<Eigen::VectorXd> states = collect_visitation_states(
      tr.policy, *env, cfg.measure.n_states, cfg.measure.n_rollouts, vis);
  save_states(fs::path(run_dir) / man.states_path, states, env->state_scale());

  const ComplexityReport crep = measure_policy(tr.policy, states, cfg.measure.kde_grid_points);
  save_json(fs::path(run_dir) / man.complexity_json_path, crep.to_json());
  CsvWriter cw(fs::path(run_dir) / man.complexity_csv_path, ComplexityReport::csv_header());
  cw.row(crep.csv_row());
  cw.close();

  evaluate_run(cfg, tr.policy, man);

  man.completed = true;
  man.completed_at = now_iso8601();
  man.save();
  return man;
}

SweepResult run_sweep(const SweepConfig& cfg0, const std::string& out_dir) {
  const SweepConfig cfg = cfg0.effective();
  ensure_dir(out_dir);
  ensure_dir(fs::path(out_dir) / "runs");

  struct Job {
    double alpha;
    std::uint64_t seed;
    std::string id, dir;
  };
  std::vector<Job> jobs;
  for (double a : cfg.alpha_grid) {
    for (int s = 0; s < cfg.n_seeds; ++s) {
      const std::uint64_t seed = cfg.seed0 + static_cast<std::uint64_t>(s);
      const std::string id = run_id_for(cfg.base.env.name, a, seed);
      jobs.push_back({a, seed, id, (fs::path(out_dir) / "runs" / id).string()});
    }
  }

  std::vector<std::optional<RunManifest>> done(jobs.size());
  std::vector<std::optional<RunFailure>> failed(jobs.size());
  auto work = [&](std::size_t i) {
    try {
      done[i] = run_single(cfg, jobs[i].alpha, jobs[i].seed, jobs[i].dir);
    } catch (const std::exception& e) {
      failed[i] = RunFailure{jobs[i].id, e.what()};
    }
  };
  if (cfg.parallelism <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) work(i);
  } else {
    for (std::size_t base = 0; base < jobs.size();
         base += static_cast<std::size_t>(cfg.parallelism)) {
      std::vector<std::thread> wave;
      const std::size_t end =
          std::min(jobs.size(), base + static_cast<std::size_t>(cfg.parallelism));
      for (std::size_t i = base; i < end; ++i) wave.emplace_back(work, i);
      for (auto& t : wave) t.join();
    }
  }

  SweepResult out;
  json idx;
  idx["runs"] = json::array();
  idx["failures"] = json::array();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (done[i]) {
      out.manifests.push_back(*done[i]);
      idx["runs"].push_back("runs/" + jobs[i].id);
    } else {
      out.failures.push_back(*failed[i]);
      idx["failures"].push_back(json{{"run_id", failed[i]->run_id},
                                     {"message", failed[i]->message}});
    }
  }
  save_json(fs::path(out_dir) / "index.json", idx);
  return out;
}

std::vector<RunManifest> load_manifests(const std::string& sweep_dir) {
  const json idx = load_json(fs::path(sweep_dir) / "index.json");
  std::vector<RunManifest> out;
  for (const auto& rel : idx.at("runs")) {
    out.push_back(RunManifest::load((fs::path(sweep_dir) / rel.get<std::string>()).string()));
  }
  return out;
}

fs::path report_fig1(const std::string& sweep_dir) {
  const std::vector<RunManifest> mans = sorted_manifests(sweep_dir);
  std::vector<std::string> missing;
  struct Row {
    std::string env, eq;
    double alpha, sigma;
    std::uint64_t seed;
    BoxplotStats bs;
  };
  std::vector<Row> rows;
  for (const auto& man : mans) {
    for (const auto& rel : man.eval_json_paths) {
      const fs::path p = fs::path(man.run_dir) / rel;
      if (!fs::exists(p)) {
        missing.push_back(p.string());
        continue;
      }
      const ExcessRiskReport rep = ExcessRiskReport::from_json(load_json(p));
      std::vector<double> rates(rep.conditional_rates.data(),
                                rep.conditional_rates.data() + rep.conditional_rates.size());
      rows.push_back({man.env_name, rep.equilibrium_label, man.alpha0, rep.sigma_y, man.seed,
                      boxplot_stats(rates)});
    }
  }
  if (!missing.empty()) throw std::runtime_error("missing artifacts: " + join(missing));
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.env, a.eq, a.alpha, a.sigma, a.seed) <
           std::tie(b.env, b.eq, b.alpha, b.sigma, b.seed);
  });
  const fs::path path = reports_dir(sweep_dir) / "fig1.csv";
  CsvWriter w(path, {"env", "equilibrium", "alpha", "sigma_y", "seed", "q1", "median", "q3",
                     "whisker_lo", "whisker_hi", "n_outliers"});
  for (const auto& r : rows) {
    w.row({r.env, r.eq, fmt_double(r.alpha), fmt_double(r.sigma), std::to_string(r.seed),
           fmt_double(r.bs.q1), fmt_double(r.bs.median), fmt_double(r.bs.q3),
           fmt_double(r.bs.whisker_lo), fmt_double(r.bs.whisker_hi),
           std::to_string(r.bs.outliers.size())});
  }
  w.close();
  return path;
}

fs::path report_fig2(const std::string& sweep_dir) {
  const std::vector<RunManifest> mans = sorted_manifests(sweep_dir);
  std::vector<std::string> missing;
  const fs::path path = reports_dir(sweep_dir) / "fig2.csv";
  CsvWriter w(path, {"env", "alpha", "seed", "p", "layer_product", "vector_norm"});
  for (const auto& man : mans) {
    const fs::path p = fs::path(man.run_dir) / man.complexity_json_path;
    if (!fs::exists(p)) {
      missing.push_back(p.string());
      continue;
    }
    const ComplexityReport rep = ComplexityReport::from_json(load_json(p));
    const std::string alpha = fmt_double(man.alpha0), seed = std::to_string(man.seed);
    // a vector's Frobenius norm is its l2 norm, so the F row reuses p2
    w.row({man.env_name, alpha, seed, "1", fmt_double(rep.layer_product_p1),
           fmt_double(rep.vector_norm_p1)});
    w.row({man.env_name, alpha, seed, "2", fmt_double(rep.layer_product_p2),
           fmt_double(rep.vector_norm_p2)});
    w.row({man.env_name, alpha, seed, "inf", fmt_double(rep.layer_product_pinf),
           fmt_double(rep.vector_norm_pinf)});
    w.row({man.env_name, alpha, seed, "F", fmt_double(rep.layer_product_pf),
           fmt_double(rep.vector_norm_p2)});
  }
  w.close();
  if (!missing.empty()) throw std::runtime_error("missing artifacts: " + join(missing));
  return path;
}

fs::path report_fig3(const std::string& sweep_dir) {
  const std::vector<RunManifest> mans = sorted_manifests(sweep_dir);
  std::vector<std::string> missing;
  const fs::path path = reports_dir(sweep_dir) / "fig3.csv";
  CsvWriter w(path, {"env", "alpha", "seed", "mean", "median", "skewness", "excess_kurtosis"});
  json kde_runs = json::array();
  for (const auto& man : mans) {
    const fs::path p = fs::path(man.run_dir) / man.complexity_json_path;
    if (!fs::exists(p)) {
      missing.push_back(p.string());
      continue;
    }
    const ComplexityReport rep = ComplexityReport::from_json(load_json(p));
    w.row({man.env_name, fmt_double(man.alpha0), std::to_string(man.seed),
           fmt_double(rep.fim_moments.mean), fmt_double(rep.fim_moments.median),
           fmt_double(rep.fim_moments.skewness), fmt_double(rep.fim_moments.excess_kurtosis)});
    kde_runs.push_back(json{{"run_id", man.run_id},
                            {"env", man.env_name},
                            {"alpha", man.alpha0},
                            {"seed", man.seed},
                            {"bandwidth", rep.fim_kde.bandwidth},
                            {"degenerate", rep.fim_kde.degenerate},
                            {"grid", to_json(rep.fim_kde.grid)},
                            {"density", to_json(rep.fim_kde.density)}});
  }
  w.close();
  save_json(reports_dir(sweep_dir) / "fig3_kde.json", json{{"runs", kde_runs}});
  if (!missing.empty()) throw std::runtime_error("missing artifacts: " + join(missing));
  return path;
}

fs::path report_appendix_kl(const std::string& sweep_dir) {
  const std::vector<RunManifest> mans = sorted_manifests(sweep_dir);
  std::vector<std::string> missing;
  const fs::path path = reports_dir(sweep_dir) / "appendix_kl.csv";
  CsvWriter w(path, {"env", "alpha", "seed", "update_index", "env_steps", "dbar_kl"});
  for (const auto& man : mans) {
    const fs::path p = fs::path(man.run_dir) / man.trainlog_path;
    if (!fs::exists(p)) {
      missing.push_back(p.string());
      continue;
    }
    for (const TrainLogRow& r : read_trainlog_csv(p)) {
      w.row({man.env_name, fmt_double(man.alpha0), std::to_string(man.seed),
             std::to_string(r.update), std::to_string(r.env_steps), fmt_double(r.dbar_kl)});
    }
  }
  w.close();
  if (!missing.empty()) throw std::runtime_error("missing artifacts: " + join(missing));
  return path;
}

json CorrelationSummary::to_json() const {
  json entries_j = json::array();
  for (const auto& e : entries) {
    entries_j.push_back(json{{"measure", e.measure}, {"rho", e.rho}, {"n", e.n},
                             {"ci_lo", e.ci_lo}, {"ci_hi", e.ci_hi}});
  }
  return json{{"robustness_metric", robustness_metric}, {"entries", entries_j}};
}

CorrelationSummary correlate(const std::string& sweep_dir) {
  const std::vector<RunManifest> mans = sorted_manifests(sweep_dir);
  if (mans.size() < 8) {
    throw ConfigError("correlate needs >= 8 models, have " + std::to_string(mans.size()));
  }
  const std::vector<std::string> measure_names = ComplexityReport::csv_header();
  std::vector<std::vector<double>> measures(measure_names.size());
  std::vector<double> robustness;
  std::vector<std::string> missing;
  for (const auto& man : mans) {
    const fs::path cp = fs::path(man.run_dir) / man.complexity_json_path;
    if (!fs::exists(cp)) {
      missing.push_back(cp.string());
      continue;
    }
    const ComplexityReport rep = ComplexityReport::from_json(load_json(cp));
    double rate_sum = 0.0;
    int rate_n = 0;
    for (const auto& rel : man.eval_json_paths) {
      const fs::path p = fs::path(man.run_dir) / rel;
      if (!fs::exists(p)) {
        missing.push_back(p.string());
        continue;
      }
      const ExcessRiskReport er = ExcessRiskReport::from_json(load_json(p));
      if (er.sigma_y > 0.0) {
        rate_sum += er.r_rate;
        ++rate_n;
      }
    }
    if (!missing.empty()) continue;
    if (rate_n == 0) throw ConfigError("correlate: run " + man.run_id + " has no noisy evals");
    robustness.push_back(rate_sum / rate_n);
    const std::vector<std::string> row = rep.csv_row();
    for (std::size_t mi = 0; mi < measures.size(); ++mi) {
      measures[mi].push_back(parse_double(row[mi]));
    }
  }
  if (!missing.empty()) throw std::runtime_error("missing artifacts: " + join(missing));

  CorrelationSummary sum;
  for (std::size_t mi = 0; mi < measure_names.size(); ++mi) {
    CorrelationEntry e;
    e.measure = measure_names[mi];
    e.n = static_cast<int>(robustness.size());
    e.rho = spearman_rho(measures[mi], robustness);
    RngStream rng = RngStream::derived(kCorrelationSeed, {mi});
    const BootstrapCi ci = bootstrap_spearman_ci(measures[mi], robustness, 1000, 0.90, rng);
    e.ci_lo = ci.lo;
    e.ci_hi = ci.hi;
    sum.entries.push_back(e);
  }
  save_json(reports_dir(sweep_dir) / "correlation.json", sum.to_json());
  CsvWriter w(reports_dir(sweep_dir) / "correlation.csv",
              {"measure", "rho", "n", "ci_lo", "ci_hi"});
  for (const auto& e : sum.entries) {
    w.row({e.measure, fmt_double(e.rho), std::to_string(e.n), fmt_double(e.ci_lo),
           fmt_double(e.ci_hi)});
  }
  w.close();
  return sum;
}

}  // namespace merl
