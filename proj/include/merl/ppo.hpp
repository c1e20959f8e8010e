// Clipped-surrogate policy optimization with GAE, a separate value net, Adam
// and an entropy bonus whose temperature decays linearly to zero at a quarter
// of the step budget. Hyperparameter defaults follow the widely documented
// reference settings (2048 steps/update, 64 minibatch, 10 epochs, lr 3e-4,
// clip 0.2, gamma 0.99, lambda 0.95, value coef 0.5, grad clip 0.5).
#pragma once

#include "merl/env.hpp"
#include "merl/policy.hpp"

namespace merl {

struct EntropySchedule {
  double alpha0 = 0.0;
  long long m_quarter = 0;  // env steps after which the bonus is exactly 0
};

// alpha at env-step m: alpha0 * max(0, 1 - m / m_quarter)
double alpha_at(const EntropySchedule& s, long long m);

struct TrainConfig {
  EnvConfig env;
  std::uint64_t seed = 0;
  double alpha0 = 0.0;
  long long m_total = 100000;
  int n_steps_per_update = 2048;
  int minibatch_size = 64;
  int n_epochs = 10;
  double learning_rate = 3e-4;
  double clip_range = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  int kl_log_states = 256;
  int hidden_width = 64;
  // reward fed to the learner is -cost / reward_scale; <= 0 means the
  // per-env default state_scale^2 / (1 - gamma), which keeps value targets
  // O(1) for a cost of order state_scale^2 per step
  double reward_scale = 0.0;

  json to_json() const;
  static TrainConfig from_json(const json& j);
};

struct RolloutBatch {
  Eigen::MatrixXd obs;      // n_steps x obs_dim, network inputs
  Eigen::MatrixXd actions;  // n_steps x act_dim, as sampled (unclipped)
  Eigen::VectorXd log_probs;
  Eigen::VectorXd costs;          // raw per-step costs
  Eigen::VectorXd values;         // V(s_t) under the collecting nets
  Eigen::VectorXd episode_start;  // 1.0 where s_t begins an episode
  // V(s_{t+1}) where step t hit the time limit, else 0; the cut-off return
  // tail is bootstrapped there (blow-up truncations stay terminal)
  Eigen::VectorXd timeout_value;
  Eigen::VectorXd advantages, returns;
  double last_value = 0.0;  // V of the state after the final step
  bool last_done = false;

  int size() const { return static_cast<int>(log_probs.size()); }
};

// Fills batch.advantages / batch.returns with raw (unnormalized) GAE values;
// rewards are -cost / reward_scale.
void compute_gae(RolloutBatch& batch, double gamma, double lam, double reward_scale);

// In-place shift/scale to mean 0, std 1 (exact divide; no epsilon fudge).
void normalize_advantages(Eigen::VectorXd& adv);

struct AdamState {
  Eigen::VectorXd m, v;
  long long t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-5;

  explicit AdamState(int n) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

void adam_step(AdamState& st, Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr);

struct UpdateStats {
  double policy_loss = 0.0;  // clipped-surrogate part only
  double value_loss = 0.0;   // raw MSE
  double grad_norm = 0.0;    // mean pre-clip global norm
};

// One update: n_epochs passes over the shuffled batch in minibatches.
// Expects batch.advantages already normalized. Mutates policy, value, adam.
UpdateStats ppo_update(PolicyParams& policy, Mlp& value, const RolloutBatch& batch, double alpha,
                       const TrainConfig& cfg, AdamState& adam, RngStream& shuffle_rng);

// Mean over states of KL(pi_{m+1} || pi_m); the average divergence between
// consecutive policies under the visited-state distribution.
double dbar_kl(const PolicyParams& params_m, const PolicyParams& params_m1,
               const std::vector<Eigen::VectorXd>& states);

struct TrainLogRow {
  long long update = 0;
  long long env_steps = 0;
  double alpha = 0.0;
  double mean_episode_cost = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double dbar_kl = 0.0;
  double grad_norm = 0.0;
};

void write_trainlog_csv(const std::filesystem::path& path, const std::vector<TrainLogRow>& rows);
std::vector<TrainLogRow> read_trainlog_csv(const std::filesystem::path& path);

struct TrainResult {
  PolicyParams policy;
  Mlp value;
  std::vector<TrainLogRow> log;
};

// Trains on the noiseless environment (sigma_Y forced to 0). The env must be
// the one built from cfg.env. m_total == 0 returns the initial nets.
TrainResult train(const TrainConfig& cfg, Env& env);

}  // namespace merl
