// Lorenz system with additive scalar control on the second component,
// integrated with classic fixed-step RK4.
#pragma once

#include "merl/env.hpp"

namespace merl {

struct LorenzParams {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
};

Eigen::Vector3d lorenz_drift(const LorenzParams& p, const Eigen::Vector3d& x, double u);
Eigen::Vector3d lorenz_rk4_step(const LorenzParams& p, const Eigen::Vector3d& x, double u,
                                double dt);

class LorenzEnv final : public Env {
 public:
  explicit LorenzEnv(const EnvConfig& cfg);

  const char* name() const override { return "lorenz"; }
  int state_dim() const override { return 3; }
  int action_dim() const override { return 1; }
  Eigen::VectorXd drift(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const override;
  Eigen::VectorXd integrate(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const override;

  const LorenzParams& params() const { return p_; }

 protected:
  std::vector<Equilibrium> compute_equilibria() const override;

 private:
  LorenzParams p_;
  double dt_;
};

}  // namespace merl
