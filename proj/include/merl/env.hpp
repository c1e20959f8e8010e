// Episodic control environment around a deterministic flow map:
//   x_{h+1} = F(x_h, clip(u_h)),  y_h = x_h + sigma_Y * eps,  x_0 ~ N(x*, sigma_e^2 I)
// with quadratic regulation cost c = ||x - x*||^2 / dim + kappa ||u||^2 scored
// on the post-step state. Concrete systems supply drift/integrate/equilibria.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "merl/io.hpp"
#include "merl/policy.hpp"
#include "merl/rng.hpp"

namespace merl {

struct NoiseSpec {
  double sigma_y = 0.0;          // observation noise std
  double sigma_e = -1.0;         // initial-state std; negative -> per-system default
  std::uint64_t seed_stream = 0; // stream tag for noise channels

  json to_json() const;
  static NoiseSpec from_json(const json& j, const NoiseSpec& defaults);
};

struct EnvState {
  Eigen::VectorXd x;
  int h = 0;
};

struct Equilibrium {
  std::string label;
  Eigen::VectorXd x;
  double residual_norm = 0.0;  // || F(x, 0) - x ||
};

struct StepResult {
  double cost = 0.0;
  bool truncated = false;  // blow-up sentinel fired; episode must end
  Eigen::VectorXd obs;
};

struct EnvConfig {
  std::string name = "lorenz";
  double dt = -1.0;      // negative -> per-system default
  int horizon = -1;      // steps per episode; negative -> per-system default
  double kappa = 0.01;   // control-effort weight (cost.kappa in config files)
  double control_bound = -1.0;  // negative -> per-system default
  NoiseSpec noise;
  std::string equilibrium_label;  // empty -> per-system default

  // lorenz block
  double lorenz_sigma = 10.0, lorenz_rho = 28.0, lorenz_beta = 8.0 / 3.0;
  // ks block
  double ks_domain_size = 22.0;
  int ks_n_grid = 64;
  int ks_n_actuators = 4;
  double ks_actuator_width = 0.8;

  json to_json() const;
  static EnvConfig from_json(const json& env_block);
  void apply_name_defaults();  // fills the negative/empty fields
};

class Env {
 public:
  virtual ~Env() = default;

  virtual const char* name() const = 0;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual Eigen::VectorXd drift(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const = 0;
  // one time step of the underlying integrator; u must already be clipped
  virtual Eigen::VectorXd integrate(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const = 0;

  double dt() const { return dt_; }
  int horizon() const { return horizon_; }
  double kappa() const { return kappa_; }
  double control_bound() const { return control_bound_; }
  double state_scale() const { return state_scale_; }
  double sentinel_cost() const { return sentinel_cost_; }
  double blowup_threshold() const { return blowup_threshold_; }
  const NoiseSpec& noise() const { return noise_; }
  void set_noise(const NoiseSpec& n) { noise_ = n; }
  void set_sigma_y(double s) { noise_.sigma_y = s; }

  const std::vector<Equilibrium>& equilibria() const;
  const Equilibrium& target() const { return target_; }
  void set_target(const std::string& label);

  Eigen::VectorXd clip_action(const Eigen::VectorXd& a) const;
  // quadratic regulation cost; virtual so synthetic test envs can rescale it
  virtual double cost(const Eigen::VectorXd& x_next, const Eigen::VectorXd& u_clipped) const;
  Eigen::VectorXd observe(const Eigen::VectorXd& x, double sigma_y, RngStream& rng) const;
  Eigen::VectorXd observe(const Eigen::VectorXd& x, RngStream& rng) const {
    return observe(x, noise_.sigma_y, rng);
  }
  EnvState initial_state(RngStream& rng) const;

  // Advances s by one step. Cost is the sentinel when the integrator left the
  // trusted region (truncated == true); the episode must then be restarted.
  StepResult step(EnvState& s, const Eigen::VectorXd& action, RngStream& obs_rng) const;

 protected:
  Env(const EnvConfig& cfg, double state_scale);
  virtual std::vector<Equilibrium> compute_equilibria() const = 0;
  double equilibrium_residual(const Eigen::VectorXd& x) const;

 private:
  double dt_, kappa_, control_bound_, state_scale_;
  int horizon_;
  double sentinel_cost_ = 1e3;
  double blowup_threshold_ = 1e6;
  NoiseSpec noise_;
  Equilibrium target_;
  std::string initial_label_;
  mutable std::vector<Equilibrium> equilibria_;  // lazily computed
};

std::unique_ptr<Env> make_env(const EnvConfig& cfg);

// Network input for an observation: a fixed per-environment rescale.
inline Eigen::VectorXd policy_input(const Env& env, const Eigen::VectorXd& obs) {
  return obs / env.state_scale();
}

struct RolloutResult {
  double discounted_cost = 0.0;
  int steps = 0;
  bool truncated = false;
};

// Runs steps h = 0..H (H+1 cost terms) from x0 and returns sum gamma^h c_h.
// On blow-up the sentinel cost fills the remaining terms. Needs H < horizon.
// When visited_inputs is non-null the per-step network inputs are appended.
RolloutResult rollout_cost(Env& env, const PolicyParams& policy, const Eigen::VectorXd& x0, int H,
                           double gamma, double sigma_y, RngStream& policy_rng,
                           RngStream& obs_rng, bool sample_actions = true,
                           std::vector<Eigen::VectorXd>* visited_inputs = nullptr);

}  // namespace merl
