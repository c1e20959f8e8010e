// Excess risk under observation noise: paired noisy/noiseless Monte-Carlo
// loss estimates sharing all random streams except the observation channel
// (common random numbers), plus the per-initial-state conditional variant
// and Tukey box-plot summaries of its rate samples.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "merl/env.hpp"
#include "merl/io.hpp"
#include "merl/policy.hpp"
#include "merl/rng.hpp"

namespace merl {

struct LossEstimate {
  double mean = 0.0;
  double std_err = 0.0;
  Eigen::VectorXd per_episode;
  int n_blowups = 0;
};

// Monte-Carlo estimate of E[sum_h gamma^h c_h] over full-horizon episodes with
// x0 ~ N(x*, sigma_e^2 I) and observation noise sigma_y. Episode i draws its
// initial-state, action-sampling, and observation streams deterministically
// from (crn_base, i), so two calls differing only in sigma_y share every
// random number except the observation noise.
LossEstimate estimate_loss(const PolicyParams& policy, Env& env, double sigma_y, int n_episodes,
                           double gamma, std::uint64_t crn_base, bool sample_actions = true);
// Convenience overload without explicit pairing: the base is drawn from rng.
LossEstimate estimate_loss(const PolicyParams& policy, Env& env, double sigma_y, int n_episodes,
                           double gamma, RngStream& rng, bool sample_actions = true);

struct ExcessRiskReport {
  double sigma_y = 0.0;
  std::string equilibrium_label;
  double j_noisy = 0.0, j_noisy_stderr = 0.0;
  double j_clean = 0.0, j_clean_stderr = 0.0;
  double r = 0.0;       // j_noisy - j_clean
  double r_rate = 0.0;  // r / j_clean
  int n_episodes = 0;
  int n_blowups_noisy = 0, n_blowups_clean = 0;
  bool crn = true;
  Eigen::VectorXd conditional_rates;  // empty unless filled by the caller

  json to_json() const;
  static ExcessRiskReport from_json(const json& j);
};

// Runs estimate_loss at sigma_y and at 0 with a shared CRN base drawn from
// rng, then fills the difference and its rate. Throws ConfigError when the
// noiseless loss is below 1e-12 (rate undefined). crn = false draws an
// independent base for the noiseless arm (higher-variance diagnostic mode).
ExcessRiskReport excess_risk(const PolicyParams& policy, Env& env, double sigma_y,
                             int n_episodes, double gamma, RngStream& rng,
                             bool sample_actions = true, bool crn = true);

struct ConditionalSample {
  int x0_index = 0;
  double j_noisy = 0.0;
  double j_clean = 0.0;
  double diff = 0.0;  // j_noisy - j_clean
  double rate = 0.0;  // diff / j_clean
};

// Per-initial-state excess risk: each x0 gets episodes_per_x0 CRN-paired
// episode pairs and contributes one rate sample.
std::vector<ConditionalSample> conditional_excess_risk(const PolicyParams& policy, Env& env,
                                                       double sigma_y,
                                                       const std::vector<Eigen::VectorXd>& x0s,
                                                       int episodes_per_x0, double gamma,
                                                       std::uint64_t crn_base,
                                                       bool sample_actions = true);
// Draws n_x0 initial states from N(x*, sigma_e^2 I) first.
std::vector<ConditionalSample> conditional_excess_risk(const PolicyParams& policy, Env& env,
                                                       double sigma_y, int n_x0,
                                                       int episodes_per_x0, double gamma,
                                                       RngStream& rng,
                                                       bool sample_actions = true);

struct BoxplotStats {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
  double whisker_lo = 0.0, whisker_hi = 0.0;
  std::vector<double> outliers;  // ascending
};

// Tukey statistics: linear-interpolation quartiles, whiskers at the most
// extreme samples within 1.5 IQR of the box. Needs >= 5 samples.
BoxplotStats boxplot_stats(const std::vector<double>& samples);

}  // namespace merl
