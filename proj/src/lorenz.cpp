#include "merl/lorenz.hpp"

#include <Eigen/Dense>

namespace merl {

Eigen::Vector3d lorenz_drift(const LorenzParams& p, const Eigen::Vector3d& x, double u) {
  Eigen::Vector3d d;
  d[0] = p.sigma * (x[1] - x[0]);
  d[1] = x[0] * (p.rho - x[2]) - x[1] + u;
  d[2] = x[0] * x[1] - p.beta * x[2];
  return d;
}

Eigen::Vector3d lorenz_rk4_step(const LorenzParams& p, const Eigen::Vector3d& x, double u,
                                double dt) {
  const Eigen::Vector3d k1 = lorenz_drift(p, x, u);
  const Eigen::Vector3d k2 = lorenz_drift(p, x + 0.5 * dt * k1, u);
  const Eigen::Vector3d k3 = lorenz_drift(p, x + 0.5 * dt * k2, u);
  const Eigen::Vector3d k4 = lorenz_drift(p, x + dt * k3, u);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

LorenzEnv::LorenzEnv(const EnvConfig& cfg)
    : Env(cfg, /*state_scale=*/10.0),
      p_{cfg.lorenz_sigma, cfg.lorenz_rho, cfg.lorenz_beta},
      dt_(cfg.dt) {}

Eigen::VectorXd LorenzEnv::drift(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  return lorenz_drift(p_, x, u[0]);
}

Eigen::VectorXd LorenzEnv::integrate(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  return lorenz_rk4_step(p_, x, u[0], dt_);
}

std::vector<Equilibrium> LorenzEnv::compute_equilibria() const {
  std::vector<Equilibrium> out;
  auto refine = [&](Eigen::Vector3d x) {
    // Newton on the uncontrolled drift; analytic points are already at
    // machine precision, a few iterations tidy up rounding.
    for (int it = 0; it < 5; ++it) {
      const Eigen::Vector3d f = lorenz_drift(p_, x, 0.0);
      Eigen::Matrix3d jac;
      jac << -p_.sigma, p_.sigma, 0.0,
             p_.rho - x[2], -1.0, -x[0],
             x[1], x[0], -p_.beta;
      x -= jac.fullPivLu().solve(f);
    }
    return x;
  };

  auto add = [&](const std::string& label, const Eigen::Vector3d& x) {
    out.push_back({label, x, equilibrium_residual(x)});
  };

  add("origin", Eigen::Vector3d::Zero());
  if (p_.rho > 1.0) {
    const double r = std::sqrt(p_.beta * (p_.rho - 1.0));
    add("C+", refine(Eigen::Vector3d(r, r, p_.rho - 1.0)));
    add("C-", refine(Eigen::Vector3d(-r, -r, p_.rho - 1.0)));
  }
  return out;
}

}  // namespace merl
