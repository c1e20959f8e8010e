// Parameter-space and information-geometric size measures for trained
// policies: flat-vector and operator norms of the mean net, the conditional
// Fisher-information trace under visited states (closed form plus an
// independent Monte-Carlo estimator), a score-function estimator of the
// objective Hessian, and distribution summaries (KDE, skewness, kurtosis).
#pragma once

#include <functional>

#include "merl/env.hpp"
#include "merl/policy.hpp"

namespace merl {

enum class Pnorm { P1, P2, PInf, PF };

// p in {1, 2, inf} on an arbitrary flat parameter vector
double vector_norm(const Eigen::VectorXd& v, Pnorm p);

// induced operator norm; P2 via power iteration on W^T W, PF = Frobenius
double operator_norm(const Eigen::MatrixXd& W, Pnorm p);

// largest singular value by power iteration with a fixed deterministic start;
// throws (with residual diagnostics) if it fails to converge
double spectral_norm_power_iteration(const Eigen::MatrixXd& W, double tol = 1e-10,
                                     int max_iters = 10000);

// product over the weight matrices {W1, W2, W_out} (biases excluded)
double layer_product_norm(const PolicyParams& p, Pnorm norm);

// Mean-map abstraction so the Fisher-trace accumulation can be exercised with
// simple closed-form models in tests as well as the real Mlp policy.
struct MeanModel {
  virtual ~MeanModel() = default;
  virtual int act_dim() const = 0;
  virtual int param_dim() const = 0;
  // g += d mu_j(x) / d theta (dense, length param_dim)
  virtual void output_grad(const Eigen::VectorXd& x, int j, Eigen::VectorXd& g) const = 0;
};

class PolicyMeanModel final : public MeanModel {
 public:
  explicit PolicyMeanModel(const PolicyParams& p) : p_(&p) {}
  int act_dim() const override { return p_->act_dim(); }
  int param_dim() const override { return p_->mean_param_count(); }
  void output_grad(const Eigen::VectorXd& x, int j, Eigen::VectorXd& g) const override;

 private:
  const PolicyParams* p_;
};

// tr I(theta_mu; x) = sum_j ||d mu_j / d theta_mu||^2 / sigma_j^2
double fim_trace_at(const MeanModel& model, const Eigen::VectorXd& sigma,
                    const Eigen::VectorXd& x);

struct FimTraceResult {
  Eigen::VectorXd samples;  // one per state
  double mean = 0.0;
};
FimTraceResult fim_trace_closed_form(const PolicyParams& p,
                                     const std::vector<Eigen::VectorXd>& states);

struct McEstimate {
  double mean = 0.0;
  double std_err = 0.0;
};

// Independent route: -E_U[tr Hess_{theta_mu} log pi(U|x)] with the diagonal
// Hessian entries taken by central finite differences of grad_log_prob.
McEstimate fim_trace_mc(const PolicyParams& p, const std::vector<Eigen::VectorXd>& states,
                        int n_action_samples, double fd_h, RngStream& rng);

// One sampled trajectory prepared for the score-function Hessian estimator:
// its discounted cost and per-step score gradients / Hessians w.r.t. the
// parameter block under study.
struct TrajectorySample {
  double discounted_cost = 0.0;
  std::vector<Eigen::VectorXd> grads;
  std::vector<Eigen::MatrixXd> hessians;
};
using TrajectorySampler = std::function<TrajectorySample(RngStream&)>;

struct HessianEstimate {
  Eigen::MatrixXd matrix;
  double trace = 0.0;
  double trace_std_err = 0.0;
};

// E[ C(tau) (g g^T + sum_h Hess log pi_h) ] with g = sum_h grad log pi_h
HessianEstimate estimate_objective_hessian(const TrajectorySampler& sampler, int dim, int n_traj,
                                           RngStream& rng);

// Dense env-backed variant over the theta_mu block; exact score gradients,
// per-step Hessians by central differences of grad_log_prob. Test-scale
// policies only (throws above max_params; use the trace variant for full-size
// nets).
HessianEstimate objective_hessian_estimate(const PolicyParams& policy, Env& env, int n_traj,
                                           double gamma, double fd_h, RngStream& rng,
                                           int max_params = 600);

// Trace-only Hutchinson variant usable at full network size.
McEstimate objective_hessian_trace(const PolicyParams& policy, Env& env, int n_traj,
                                   int n_probes, double gamma, double fd_h, RngStream& rng);

struct KdeResult {
  Eigen::VectorXd grid, density;
  double bandwidth = 0.0;
  bool degenerate = false;  // zero-variance inputs: density is a point mass
};

// Gaussian-kernel KDE, Silverman bandwidth unless one is given, grid spans
// [min - 3b, max + 3b], density renormalized to integrate to 1 on the grid.
KdeResult kde(const Eigen::VectorXd& samples, int grid_points = 512, double bandwidth = 0.0);

struct MomentSummary {
  double mean = 0.0, median = 0.0, skewness = 0.0, excess_kurtosis = 0.0;
};
MomentSummary skewness_kurtosis(const Eigen::VectorXd& samples);

struct ComplexityReport {
  double vector_norm_p1 = 0, vector_norm_p2 = 0, vector_norm_pinf = 0;
  double layer_product_p1 = 0, layer_product_p2 = 0, layer_product_pinf = 0,
         layer_product_pf = 0;
  double fim_trace_mean = 0;
  Eigen::VectorXd fim_trace_samples;
  KdeResult fim_kde;
  MomentSummary fim_moments;
  int n_states = 0;

  json to_json() const;
  static ComplexityReport from_json(const json& j);
  static std::vector<std::string> csv_header();
  std::vector<std::string> csv_row() const;
};

// All measures for one checkpoint against one visitation-state sample
// (states are network inputs).
ComplexityReport measure_policy(const PolicyParams& p, const std::vector<Eigen::VectorXd>& states,
                                int kde_grid_points = 512);

}  // namespace merl
