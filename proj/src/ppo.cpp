#include "merl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace merl {

double alpha_at(const EntropySchedule& s, long long m) {
  if (s.m_quarter <= 0) return 0.0;
  const double frac = 1.0 - static_cast<double>(m) / static_cast<double>(s.m_quarter);
  return s.alpha0 * std::max(0.0, frac);
}

json TrainConfig::to_json() const {
  json j;
  j["env"] = env.to_json();
  j["cost"] = json{{"kappa", env.kappa}};
  j["train"] = json{{"seed", seed},
                    {"alpha0", alpha0},
                    {"m_total", m_total},
                    {"n_steps_per_update", n_steps_per_update},
                    {"minibatch_size", minibatch_size},
                    {"n_epochs", n_epochs},
                    {"learning_rate", learning_rate},
                    {"clip_range", clip_range},
                    {"gamma", gamma},
                    {"gae_lambda", gae_lambda},
                    {"value_coef", value_coef},
                    {"max_grad_norm", max_grad_norm},
                    {"kl_log_states", kl_log_states},
                    {"hidden_width", hidden_width},
                    {"reward_scale", reward_scale}};
  return j;
}

TrainConfig TrainConfig::from_json(const json& root) {
  TrainConfig cfg;
  if (root.contains("env")) cfg.env = EnvConfig::from_json(root["env"]);
  else cfg.env.apply_name_defaults();
  if (root.contains("cost")) {
    const json& c = root["cost"];
    if (!c.is_object()) throw ConfigError("cost block must be an object");
    for (auto it = c.begin(); it != c.end(); ++it) {
      if (it.key() != "kappa") throw ConfigError("unknown key '" + it.key() + "' in cost");
    }
    if (c.contains("kappa")) cfg.env.kappa = c["kappa"].get<double>();
  }
  if (root.contains("train")) {
    const json& t = root["train"];
    const std::set<std::string> allowed{
        "seed",       "alpha0",        "m_total",       "n_steps_per_update",
        "minibatch_size", "n_epochs",  "learning_rate", "clip_range",
        "gamma",      "gae_lambda",    "value_coef",    "max_grad_norm",
        "kl_log_states",  "hidden_width", "reward_scale"};
    if (!t.is_object()) throw ConfigError("train block must be an object");
    for (auto it = t.begin(); it != t.end(); ++it) {
      if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in train");
    }
    auto get = [&](const char* k, auto& dst) {
      if (t.contains(k)) dst = t[k].get<std::decay_t<decltype(dst)>>();
    };
    get("seed", cfg.seed);
    get("alpha0", cfg.alpha0);
    get("m_total", cfg.m_total);
    get("n_steps_per_update", cfg.n_steps_per_update);
    get("minibatch_size", cfg.minibatch_size);
    get("n_epochs", cfg.n_epochs);
    get("learning_rate", cfg.learning_rate);
    get("clip_range", cfg.clip_range);
    get("gamma", cfg.gamma);
    get("gae_lambda", cfg.gae_lambda);
    get("value_coef", cfg.value_coef);
    get("max_grad_norm", cfg.max_grad_norm);
    get("kl_log_states", cfg.kl_log_states);
    get("hidden_width", cfg.hidden_width);
    get("reward_scale", cfg.reward_scale);
  }
  if (cfg.alpha0 < 0) throw ConfigError("train.alpha0 must be >= 0");
  if (cfg.m_total < 0) throw ConfigError("train.m_total must be >= 0");
  if (cfg.n_steps_per_update <= 0 || cfg.minibatch_size <= 0 || cfg.n_epochs <= 0)
    throw ConfigError("train loop sizes must be positive");
  if (cfg.minibatch_size > cfg.n_steps_per_update)
    throw ConfigError("train.minibatch_size exceeds n_steps_per_update");
  if (cfg.learning_rate <= 0 || cfg.clip_range <= 0 || cfg.clip_range >= 1)
    throw ConfigError("bad learning_rate / clip_range");
  if (cfg.gamma <= 0 || cfg.gamma > 1 || cfg.gae_lambda < 0 || cfg.gae_lambda > 1)
    throw ConfigError("bad gamma / gae_lambda");
  if (cfg.hidden_width < 1) throw ConfigError("train.hidden_width must be >= 1");
  return cfg;
}

void compute_gae(RolloutBatch& batch, double gamma, double lam, double reward_scale) {
  const int n = batch.size();
  if (batch.timeout_value.size() != n) batch.timeout_value = Eigen::VectorXd::Zero(n);
  batch.advantages.resize(n);
  batch.returns.resize(n);
  const double inv_scale = 1.0 / reward_scale;
  double last_gae = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    double next_non_terminal, next_value;
    if (t == n - 1) {
      next_non_terminal = batch.last_done ? 0.0 : 1.0;
      next_value = batch.last_value;
    } else {
      next_non_terminal = batch.episode_start[t + 1] > 0.5 ? 0.0 : 1.0;
      next_value = batch.values[t + 1];
    }
    // timeout_value carries the bootstrapped tail of episodes cut by the time
    // limit (the step stays terminal for the lambda recursion)
    const double reward = -batch.costs[t] * inv_scale + gamma * batch.timeout_value[t];
    const double delta = reward + gamma * next_value * next_non_terminal - batch.values[t];
    last_gae = delta + gamma * lam * next_non_terminal * last_gae;
    batch.advantages[t] = last_gae;
  }
  batch.returns = batch.advantages + batch.values;
}

void normalize_advantages(Eigen::VectorXd& adv) {
  const int n = static_cast<int>(adv.size());
  if (n == 0) return;
  const double mean = adv.mean();
  adv.array() -= mean;
  const double std = std::sqrt(adv.squaredNorm() / n);
  if (std > 1e-12) adv /= std;
}

void adam_step(AdamState& st, Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
  st.t += 1;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  params.array() -=
      lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + st.eps);
}

namespace {

struct FlatMap {
  int policy_n = 0, value_n = 0;

  void gather(const PolicyParams& p, const Mlp& v, Eigen::VectorXd& out) const {
    p.mean.to_flat(out.data());
    const int mu_n = p.mean_param_count();
    for (Eigen::Index i = 0; i < p.log_std.size(); ++i) out[mu_n + i] = p.log_std[i];
    v.to_flat(out.data() + policy_n);
  }
  void scatter(const Eigen::VectorXd& in, PolicyParams& p, Mlp& v) const {
    p.mean.from_flat(in.data());
    const int mu_n = p.mean_param_count();
    for (Eigen::Index i = 0; i < p.log_std.size(); ++i) p.log_std[i] = in[mu_n + i];
    v.from_flat(in.data() + policy_n);
  }
  void gather_grad(const PolicyGrad& pg, const MlpGrad& vg, Eigen::VectorXd& out) const {
    pg.to_flat(out.data());
    vg.to_flat(out.data() + policy_n);
  }
};

}  // namespace

UpdateStats ppo_update(PolicyParams& policy, Mlp& value, const RolloutBatch& batch, double alpha,
                       const TrainConfig& cfg, AdamState& adam, RngStream& shuffle_rng) {
  const int n = batch.size();
  const int act_dim = policy.act_dim();
  FlatMap fm{policy.param_count(), value.param_count()};
  Eigen::VectorXd flat(fm.policy_n + fm.value_n), grad(fm.policy_n + fm.value_n);

  PolicyGrad pg = PolicyGrad::zeros_like(policy);
  MlpGrad vg = MlpGrad::zeros_like(value);
  MlpWorkspace ws, ws_v;
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);

  UpdateStats stats;
  long long n_minibatches = 0;
  double loss_pi_acc = 0.0, loss_v_acc = 0.0, gnorm_acc = 0.0;
  long long n_samples = 0;

  for (int epoch = 0; epoch < cfg.n_epochs; ++epoch) {
    shuffle_rng.shuffle(idx);
    for (int start = 0; start < n; start += cfg.minibatch_size) {
      const int m = std::min(cfg.minibatch_size, n - start);
      pg.set_zero();
      vg.set_zero();
      for (int s = 0; s < m; ++s) {
        const int i = idx[start + s];
        const Eigen::VectorXd obs = batch.obs.row(i).transpose();
        const Eigen::VectorXd a = batch.actions.row(i).transpose();
        const double adv = batch.advantages[i];
        const double ret = batch.returns[i];

        mlp_forward(policy.mean, obs, ws);
        double logp = 0.0;
        for (int j = 0; j < act_dim; ++j) {
          const double z = (a[j] - ws.y[j]) * std::exp(-policy.log_std[j]);
          logp += -0.5 * z * z - policy.log_std[j] - 0.5 * 1.8378770664093454836;
        }
        const double ratio = std::exp(logp - batch.log_probs[i]);
        const double clipped = std::clamp(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range);
        const double surr1 = ratio * adv;
        const double surr2 = clipped * adv;
        loss_pi_acc += -std::min(surr1, surr2);
        n_samples += 1;
        // gradient flows only through the unclipped branch when it is active
        if (surr1 <= surr2) {
          const double coef = -adv * ratio / m;
          Eigen::VectorXd dmu(act_dim);
          for (int j = 0; j < act_dim; ++j) {
            const double inv_var = std::exp(-2.0 * policy.log_std[j]);
            const double diff = a[j] - ws.y[j];
            dmu[j] = coef * diff * inv_var;
            pg.log_std[j] += coef * (diff * diff * inv_var - 1.0);
          }
          mlp_backward(policy.mean, obs, ws, dmu, pg.mean);
        }

        mlp_forward(value, obs, ws_v);
        const double vdiff = ws_v.y[0] - ret;
        loss_v_acc += vdiff * vdiff;
        Eigen::VectorXd dv(1);
        dv[0] = 2.0 * cfg.value_coef * vdiff / m;
        mlp_backward(value, obs, ws_v, dv, vg);
      }
      // entropy bonus: d(-alpha H)/d log_std_j = -alpha, once per minibatch
      pg.log_std.array() -= alpha;

      fm.gather_grad(pg, vg, grad);
      const double gnorm = grad.norm();
      gnorm_acc += gnorm;
      n_minibatches += 1;
      if (gnorm > cfg.max_grad_norm) grad *= cfg.max_grad_norm / gnorm;

      fm.gather(policy, value, flat);
      adam_step(adam, flat, grad, cfg.learning_rate);
      fm.scatter(flat, policy, value);
    }
  }

  stats.policy_loss = loss_pi_acc / static_cast<double>(n_samples);
  stats.value_loss = loss_v_acc / static_cast<double>(n_samples);
  stats.grad_norm = gnorm_acc / static_cast<double>(n_minibatches);
  return stats;
}

double dbar_kl(const PolicyParams& params_m, const PolicyParams& params_m1,
               const std::vector<Eigen::VectorXd>& states) {
  if (states.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& x : states) acc += kl_gaussian(params_m, params_m1, x);
  return acc / static_cast<double>(states.size());
}

void write_trainlog_csv(const std::filesystem::path& path, const std::vector<TrainLogRow>& rows) {
  CsvWriter w(path, {"update", "env_steps", "alpha", "mean_episode_cost", "policy_loss",
                     "value_loss", "entropy", "dbar_kl", "grad_norm"});
  for (const auto& r : rows) {
    w.row({std::to_string(r.update), std::to_string(r.env_steps), fmt_double(r.alpha),
           fmt_double(r.mean_episode_cost), fmt_double(r.policy_loss), fmt_double(r.value_loss),
           fmt_double(r.entropy), fmt_double(r.dbar_kl), fmt_double(r.grad_norm)});
  }
  w.close();
}

std::vector<TrainLogRow> read_trainlog_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  std::vector<TrainLogRow> rows;
  const int c_upd = t.col("update"), c_steps = t.col("env_steps"), c_alpha = t.col("alpha"),
            c_cost = t.col("mean_episode_cost"), c_pl = t.col("policy_loss"),
            c_vl = t.col("value_loss"), c_ent = t.col("entropy"), c_kl = t.col("dbar_kl"),
            c_gn = t.col("grad_norm");
  if (c_upd < 0 || c_steps < 0 || c_alpha < 0 || c_cost < 0 || c_kl < 0)
    throw ConfigError("trainlog missing required columns: " + path.string());
  for (const auto& r : t.rows) {
    TrainLogRow row;
    row.update = std::stoll(r[c_upd]);
    row.env_steps = std::stoll(r[c_steps]);
    row.alpha = parse_double(r[c_alpha]);
    row.mean_episode_cost = parse_double(r[c_cost]);
    if (c_pl >= 0) row.policy_loss = parse_double(r[c_pl]);
    if (c_vl >= 0) row.value_loss = parse_double(r[c_vl]);
    if (c_ent >= 0) row.entropy = parse_double(r[c_ent]);
    row.dbar_kl = parse_double(r[c_kl]);
    if (c_gn >= 0) row.grad_norm = parse_double(r[c_gn]);
    rows.push_back(row);
  }
  return rows;
}

TrainResult train(const TrainConfig& cfg, Env& env) {
  env.set_sigma_y(0.0);  // training is always on the noiseless environment

  RngStream init_rng = RngStream::derived(cfg.seed, {1});
  RngStream value_init_rng = RngStream::derived(cfg.seed, {2});
  RngStream env_rng = RngStream::derived(cfg.seed, {3});
  RngStream policy_rng = RngStream::derived(cfg.seed, {4});
  RngStream shuffle_rng = RngStream::derived(cfg.seed, {5});
  RngStream obs_rng = RngStream::derived(cfg.seed, {6});

  const int obs_dim = env.state_dim();
  const int act_dim = env.action_dim();
  TrainResult res{PolicyParams::init(obs_dim, act_dim, cfg.hidden_width, init_rng),
                  Mlp::init(obs_dim, cfg.hidden_width, 1, 1.0, value_init_rng),
                  {}};

  const long long n_updates = cfg.m_total / cfg.n_steps_per_update;
  if (n_updates == 0) return res;

  const double scale_horizon = cfg.gamma < 1.0 ? 1.0 / (1.0 - cfg.gamma)
                                               : static_cast<double>(env.horizon());
  const double reward_scale = cfg.reward_scale > 0
                                  ? cfg.reward_scale
                                  : env.state_scale() * env.state_scale() * scale_horizon;
  const EntropySchedule schedule{cfg.alpha0, cfg.m_total / 4};
  AdamState adam(res.policy.param_count() + res.value.param_count());

  const int T = cfg.n_steps_per_update;
  RolloutBatch batch;
  batch.obs.resize(T, obs_dim);
  batch.actions.resize(T, act_dim);
  batch.log_probs.resize(T);
  batch.costs.resize(T);
  batch.values.resize(T);
  batch.episode_start.resize(T);
  batch.timeout_value.resize(T);

  EnvState s = env.initial_state(env_rng);
  Eigen::VectorXd obs = env.observe(s.x, obs_rng);
  bool at_episode_start = true;
  double episode_cost = 0.0;
  double last_known_mec = 0.0;
  MlpWorkspace ws_v;

  for (long long update = 0; update < n_updates; ++update) {
    std::vector<double> window_episode_costs;
    for (int t = 0; t < T; ++t) {
      const Eigen::VectorXd input = policy_input(env, obs);
      batch.obs.row(t) = input.transpose();
      mlp_forward(res.value, input, ws_v);
      batch.values[t] = ws_v.y[0];
      double logp = 0.0;
      const Eigen::VectorXd a = sample_action(res.policy, input, policy_rng, &logp);
      batch.actions.row(t) = a.transpose();
      batch.log_probs[t] = logp;
      batch.episode_start[t] = at_episode_start ? 1.0 : 0.0;

      const StepResult out = env.step(s, a, obs_rng);
      batch.costs[t] = out.cost;
      batch.timeout_value[t] = 0.0;
      episode_cost += out.cost;

      const bool done = out.truncated || s.h >= env.horizon();
      if (done) {
        if (out.truncated) {
          // remaining steps billed at the sentinel so episodes stay comparable
          episode_cost += env.sentinel_cost() * (env.horizon() - s.h);
        } else {
          // time-limit end: bootstrap the cut-off return tail from V
          mlp_forward(res.value, policy_input(env, s.x), ws_v);
          batch.timeout_value[t] = ws_v.y[0];
        }
        window_episode_costs.push_back(episode_cost);
        episode_cost = 0.0;
        s = env.initial_state(env_rng);
        obs = env.observe(s.x, obs_rng);
        at_episode_start = true;
      } else {
        obs = out.obs;
        at_episode_start = false;
      }
    }
    const Eigen::VectorXd last_input = policy_input(env, obs);
    mlp_forward(res.value, last_input, ws_v);
    batch.last_value = ws_v.y[0];
    batch.last_done = at_episode_start;

    compute_gae(batch, cfg.gamma, cfg.gae_lambda, reward_scale);
    normalize_advantages(batch.advantages);

    const int n_kl = std::min<int>(cfg.kl_log_states, T);
    std::vector<Eigen::VectorXd> kl_states;
    kl_states.reserve(n_kl);
    for (int i = 0; i < n_kl; ++i) {
      kl_states.push_back(batch.obs.row(static_cast<int>(i * static_cast<long long>(T) / n_kl))
                              .transpose());
    }

    const double alpha = alpha_at(schedule, update * static_cast<long long>(T));
    const PolicyParams before = res.policy;
    const UpdateStats stats = ppo_update(res.policy, res.value, batch, alpha, cfg, adam,
                                         shuffle_rng);
    if (!std::isfinite(stats.policy_loss) || !std::isfinite(stats.value_loss)) {
      throw std::runtime_error("non-finite loss at update " + std::to_string(update));
    }

    TrainLogRow row;
    row.update = update;
    row.env_steps = (update + 1) * static_cast<long long>(T);
    row.alpha = alpha;
    if (!window_episode_costs.empty()) {
      last_known_mec = std::accumulate(window_episode_costs.begin(), window_episode_costs.end(),
                                       0.0) /
                       static_cast<double>(window_episode_costs.size());
    }
    row.mean_episode_cost = last_known_mec;
    row.policy_loss = stats.policy_loss;
    row.value_loss = stats.value_loss;
    row.entropy = entropy(res.policy);
    row.dbar_kl = dbar_kl(before, res.policy, kl_states);
    row.grad_norm = stats.grad_norm;
    res.log.push_back(row);
  }
  return res;
}

}  // namespace merl
