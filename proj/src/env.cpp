#include "merl/env.hpp"

#include <cmath>
#include <set>

#include "merl/ks.hpp"
#include "merl/lorenz.hpp"

namespace merl {

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " block must be a json object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace

json NoiseSpec::to_json() const {
  json j{{"sigma_y", sigma_y}, {"seed_stream", seed_stream}};
  // a negative sigma_e means "per-system default"; keep that implicit in the
  // file so the output parses back (explicit negatives are rejected)
  if (sigma_e >= 0) j["sigma_e"] = sigma_e;
  return j;
}

NoiseSpec NoiseSpec::from_json(const json& j, const NoiseSpec& defaults) {
  check_keys(j, {"sigma_y", "sigma_e", "seed_stream"}, "env.noise");
  NoiseSpec n = defaults;
  if (j.contains("sigma_y")) n.sigma_y = j["sigma_y"].get<double>();
  if (j.contains("sigma_e")) n.sigma_e = j["sigma_e"].get<double>();
  if (j.contains("seed_stream")) n.seed_stream = j["seed_stream"].get<std::uint64_t>();
  if (n.sigma_y < 0) throw ConfigError("noise.sigma_y must be >= 0");
  if (j.contains("sigma_e") && n.sigma_e < 0) throw ConfigError("noise.sigma_e must be >= 0");
  return n;
}

void EnvConfig::apply_name_defaults() {
  if (name == "lorenz") {
    if (dt < 0) dt = 0.01;
    if (horizon < 0) horizon = 400;
    if (control_bound < 0) control_bound = 20.0;
    if (noise.sigma_e < 0) noise.sigma_e = 3.0;
    if (equilibrium_label.empty()) equilibrium_label = "C+";
  } else if (name == "ks") {
    if (dt < 0) dt = 0.05;
    if (horizon < 0) horizon = 250;
    if (control_bound < 0) control_bound = 0.5;
    if (noise.sigma_e < 0) noise.sigma_e = 0.1;
    if (equilibrium_label.empty()) equilibrium_label = "E1";
  } else {
    throw ConfigError("unknown env name '" + name + "' (expected lorenz or ks)");
  }
}

json EnvConfig::to_json() const {
  json j;
  j["name"] = name;
  // unresolved "use the per-system default" sentinels stay implicit
  if (dt >= 0) j["dt"] = dt;
  if (horizon >= 0) j["horizon"] = horizon;
  if (control_bound >= 0) j["control_bound"] = control_bound;
  if (!equilibrium_label.empty()) j["equilibrium_label"] = equilibrium_label;
  j["noise"] = noise.to_json();
  if (name == "lorenz") {
    j["lorenz"] = json{{"sigma", lorenz_sigma}, {"rho", lorenz_rho}, {"beta", lorenz_beta}};
  } else if (name == "ks") {
    j["ks"] = json{{"domain_size", ks_domain_size},
                   {"n_grid", ks_n_grid},
                   {"n_actuators", ks_n_actuators},
                   {"actuator_width", ks_actuator_width}};
  }
  return j;
}

EnvConfig EnvConfig::from_json(const json& env_block) {
  check_keys(env_block,
             {"name", "dt", "horizon", "control_bound", "equilibrium_label", "noise", "lorenz",
              "ks"},
             "env");
  EnvConfig cfg;
  if (env_block.contains("name")) cfg.name = env_block["name"].get<std::string>();
  if (env_block.contains("dt")) cfg.dt = env_block["dt"].get<double>();
  if (env_block.contains("horizon")) cfg.horizon = env_block["horizon"].get<int>();
  if (env_block.contains("control_bound"))
    cfg.control_bound = env_block["control_bound"].get<double>();
  if (env_block.contains("equilibrium_label"))
    cfg.equilibrium_label = env_block["equilibrium_label"].get<std::string>();
  if (env_block.contains("noise")) cfg.noise = NoiseSpec::from_json(env_block["noise"], cfg.noise);
  if (env_block.contains("lorenz")) {
    const json& l = env_block["lorenz"];
    check_keys(l, {"sigma", "rho", "beta"}, "env.lorenz");
    if (l.contains("sigma")) cfg.lorenz_sigma = l["sigma"].get<double>();
    if (l.contains("rho")) cfg.lorenz_rho = l["rho"].get<double>();
    if (l.contains("beta")) cfg.lorenz_beta = l["beta"].get<double>();
  }
  if (env_block.contains("ks")) {
    const json& k = env_block["ks"];
    check_keys(k, {"domain_size", "n_grid", "n_actuators", "actuator_width"}, "env.ks");
    if (k.contains("domain_size")) cfg.ks_domain_size = k["domain_size"].get<double>();
    if (k.contains("n_grid")) cfg.ks_n_grid = k["n_grid"].get<int>();
    if (k.contains("n_actuators")) cfg.ks_n_actuators = k["n_actuators"].get<int>();
    if (k.contains("actuator_width")) cfg.ks_actuator_width = k["actuator_width"].get<double>();
  }
  cfg.apply_name_defaults();
  if (cfg.dt <= 0) throw ConfigError("env.dt must be > 0");
  if (cfg.horizon <= 0) throw ConfigError("env.horizon must be > 0");
  if (cfg.kappa < 0) throw ConfigError("cost.kappa must be >= 0");
  return cfg;
}

Env::Env(const EnvConfig& cfg, double state_scale)
    : dt_(cfg.dt),
      kappa_(cfg.kappa),
      control_bound_(cfg.control_bound),
      state_scale_(state_scale),
      horizon_(cfg.horizon),
      noise_(cfg.noise),
      initial_label_(cfg.equilibrium_label) {}

const std::vector<Equilibrium>& Env::equilibria() const {
  if (equilibria_.empty()) equilibria_ = compute_equilibria();
  return equilibria_;
}

void Env::set_target(const std::string& label) {
  for (const auto& eq : equilibria()) {
    if (eq.label == label) {
      target_ = eq;
      return;
    }
  }
  std::string known;
  for (const auto& eq : equilibria()) known += (known.empty() ? "" : ", ") + eq.label;
  throw ConfigError("unknown equilibrium label '" + label + "' (have: " + known + ")");
}

double Env::equilibrium_residual(const Eigen::VectorXd& x) const {
  return (integrate(x, Eigen::VectorXd::Zero(action_dim())) - x).norm();
}

Eigen::VectorXd Env::clip_action(const Eigen::VectorXd& a) const {
  return a.cwiseMax(-control_bound_).cwiseMin(control_bound_);
}

double Env::cost(const Eigen::VectorXd& x_next, const Eigen::VectorXd& u_clipped) const {
  return (x_next - target_.x).squaredNorm() / state_dim() + kappa_ * u_clipped.squaredNorm();
}

Eigen::VectorXd Env::observe(const Eigen::VectorXd& x, double sigma_y, RngStream& rng) const {
  if (sigma_y == 0.0) return x;
  return x + sigma_y * rng.normal_vec(static_cast<int>(x.size()));
}

EnvState Env::initial_state(RngStream& rng) const {
  EnvState s;
  s.x = target_.x + noise_.sigma_e * rng.normal_vec(state_dim());
  s.h = 0;
  return s;
}

StepResult Env::step(EnvState& s, const Eigen::VectorXd& action, RngStream& obs_rng) const {
  if (s.h >= horizon_) throw std::logic_error("step past horizon; reset the episode");
  const Eigen::VectorXd u = clip_action(action);
  Eigen::VectorXd x_next = integrate(s.x, u);
  StepResult out;
  const bool blown = !x_next.allFinite() || x_next.lpNorm<Eigen::Infinity>() > blowup_threshold_;
  if (blown) {
    out.cost = sentinel_cost_;
    out.truncated = true;
    s.x = std::move(x_next);
    s.h += 1;
    out.obs = s.x;  // unusable by construction; episode ends here
    return out;
  }
  out.cost = cost(x_next, u);
  s.x = std::move(x_next);
  s.h += 1;
  out.obs = observe(s.x, obs_rng);
  return out;
}

std::unique_ptr<Env> make_env(const EnvConfig& cfg) {
  EnvConfig c = cfg;
  c.apply_name_defaults();
  std::unique_ptr<Env> env;
  if (c.name == "lorenz") {
    env = std::make_unique<LorenzEnv>(c);
  } else if (c.name == "ks") {
    env = std::make_unique<KsEnv>(c);
  } else {
    throw ConfigError("unknown env name '" + c.name + "'");
  }
  env->set_target(c.equilibrium_label);
  return env;
}

RolloutResult rollout_cost(Env& env, const PolicyParams& policy, const Eigen::VectorXd& x0, int H,
                           double gamma, double sigma_y, RngStream& policy_rng,
                           RngStream& obs_rng, bool sample_actions,
                           std::vector<Eigen::VectorXd>* visited_inputs) {
  if (H + 1 > env.horizon()) throw std::logic_error("rollout longer than env horizon");
  RolloutResult res;
  EnvState s{x0, 0};
  Eigen::VectorXd obs = env.observe(x0, sigma_y, obs_rng);
  double discount = 1.0;
  for (int h = 0; h <= H; ++h) {
    Eigen::VectorXd input = policy_input(env, obs);
    if (visited_inputs) visited_inputs->push_back(input);
    const Eigen::VectorXd a = sample_actions ? sample_action(policy, input, policy_rng)
                                             : forward_mean(policy, input);
    const Eigen::VectorXd u = env.clip_action(a);
    Eigen::VectorXd x_next = env.integrate(s.x, u);
    res.steps += 1;
    const bool blown =
        !x_next.allFinite() || x_next.lpNorm<Eigen::Infinity>() > env.blowup_threshold();
    if (blown) {
      // sentinel fills this and every remaining term
      for (int j = h; j <= H; ++j) {
        res.discounted_cost += discount * env.sentinel_cost();
        discount *= gamma;
      }
      res.truncated = true;
      return res;
    }
    res.discounted_cost += discount * env.cost(x_next, u);
    discount *= gamma;
    s.x = std::move(x_next);
    s.h += 1;
    if (h < H) obs = env.observe(s.x, sigma_y, obs_rng);
  }
  return res;
}

}  // namespace merl
