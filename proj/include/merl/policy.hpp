// Diagonal Gaussian policy: an Mlp produces the action mean, a free
// state-independent log-std vector sets the scale. All densities and
// gradients are exact closed forms; the reverse pass reuses the Mlp one.
#pragma once

#include <Eigen/Core>

#include "merl/mlp.hpp"

namespace merl {

struct PolicyParams {
  Mlp mean;
  Eigen::VectorXd log_std;

  int obs_dim() const { return mean.in_dim(); }
  int act_dim() const { return mean.out_dim(); }
  // theta_mu = every mean-net parameter (weights and biases)
  int mean_param_count() const { return mean.param_count(); }
  int param_count() const { return mean_param_count() + static_cast<int>(log_std.size()); }

  Eigen::VectorXd sigma() const { return log_std.array().exp(); }

  Eigen::VectorXd mean_flat() const;           // theta_mu as one vector
  void set_mean_flat(const Eigen::VectorXd&);  // inverse of mean_flat

  json to_json() const;  // checkpoint schema
  static PolicyParams from_json(const json& j);
  void save(const std::filesystem::path& path) const;
  static PolicyParams load(const std::filesystem::path& path);

  static PolicyParams init(int obs, int act, int hidden, RngStream& rng);
};

struct PolicyGrad {
  MlpGrad mean;
  Eigen::VectorXd log_std;

  static PolicyGrad zeros_like(const PolicyParams& p);
  void set_zero();
  int param_count() const;
  void to_flat(double* dst) const;  // theta_mu block first, then log_std
};

Eigen::VectorXd forward_mean(const PolicyParams& p, const Eigen::VectorXd& obs);

double log_prob(const PolicyParams& p, const Eigen::VectorXd& obs, const Eigen::VectorXd& action);

// Draws action ~ N(mu(obs), diag(sigma^2)); writes its log density to *logp
// when non-null.
Eigen::VectorXd sample_action(const PolicyParams& p, const Eigen::VectorXd& obs, RngStream& rng,
                              double* logp = nullptr);

// Differential entropy of the (state-independent-scale) Gaussian, in nats.
double entropy(const PolicyParams& p);

// Accumulates d log pi(action|obs) / d theta into g (mean params and log_std).
void grad_log_prob(const PolicyParams& p, const Eigen::VectorXd& obs,
                   const Eigen::VectorXd& action, PolicyGrad& g);

// || d mu_j / d theta_mu ||^2 for each output dimension j.
Eigen::VectorXd mean_jacobian_row_norms(const PolicyParams& p, const Eigen::VectorXd& obs);

// KL(q || p) between the two action distributions at obs, i.e. the divergence
// of the second argument from the first. Used as KL(pi_{m+1} || pi_m) with
// (p, q) = (params_m, params_{m+1}).
double kl_gaussian(const PolicyParams& p, const PolicyParams& q, const Eigen::VectorXd& obs);

}  // namespace merl
