// Kuramoto-Sivashinsky on a periodic domain, pseudo-spectral with 2/3-rule
// dealiasing and exact-linear ETDRK4 time stepping. Control enters as a fixed
// bank of unit-mass Gaussian actuator profiles added to the drift. Steady
// states come from a damped Newton iteration on the spectral residual.
#pragma once

#include <complex>

#include <fftw3.h>

#include "merl/env.hpp"

namespace merl {

struct KsParams {
  double domain_size = 22.0;
  int n_grid = 64;
  double dt = 0.05;
  int n_actuators = 4;
  double actuator_width = 0.8;
};

class KsSystem {
 public:
  explicit KsSystem(const KsParams& p);
  ~KsSystem();
  KsSystem(const KsSystem&) = delete;
  KsSystem& operator=(const KsSystem&) = delete;

  int n() const { return p_.n_grid; }
  double dx() const { return p_.domain_size / p_.n_grid; }
  double dt() const { return p_.dt; }
  const KsParams& params() const { return p_; }
  // column i = profile of actuator i on the grid, discrete integral exactly 1
  const Eigen::MatrixXd& actuator_profiles() const { return phi_; }
  // dispersion rate of linear mode k: q^2 - q^4 with q = 2 pi k / L
  double mode_rate(int k) const;

  Eigen::VectorXd drift(const Eigen::VectorXd& u, const Eigen::VectorXd& act) const;
  Eigen::VectorXd step(const Eigen::VectorXd& u, const Eigen::VectorXd& act) const;

  // uncontrolled steady-state machinery
  Eigen::VectorXd steady_residual(const Eigen::VectorXd& u) const;
  Eigen::VectorXd steady_jvp(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const;

  struct NewtonResult {
    Eigen::VectorXd u;
    bool converged = false;
    int iters = 0;
    double residual = 0.0;
  };
  NewtonResult newton_steady(const Eigen::VectorXd& u0, int max_iters = 200,
                             double tol = 1e-10) const;

  // damped Newton over a documented low-mode seed set, translation-deduped,
  // sorted by ascending L2 norm; the trivial zero state is excluded
  std::vector<Eigen::VectorXd> steady_states() const;

 private:
  using Cplx = std::complex<double>;

  void rfft(const Eigen::VectorXd& in, Eigen::VectorXcd& out) const;
  void irfft(const Eigen::VectorXcd& in, Eigen::VectorXd& out) const;
  // N(v) = -0.5 i q dealias((u^2)^) + forcing spectrum
  void nonlinear(const Eigen::VectorXcd& v, const Eigen::VectorXcd& force_hat,
                 Eigen::VectorXcd& out) const;

  KsParams p_;
  int nc_;                         // rfft bins = n/2 + 1
  Eigen::VectorXd q_;              // wavenumber per bin
  Eigen::VectorXd lin_;            // q^2 - q^4
  Eigen::VectorXd dealias_;        // 2/3-rule mask
  Eigen::VectorXd E_, E2_, Q_, f1_, f2_, f3_;  // ETDRK4 tables
  Eigen::MatrixXd phi_;
  Eigen::MatrixXcd phi_hat_;

  double* buf_real_;
  fftw_complex* buf_cplx_;
  fftw_plan plan_fwd_;
  fftw_plan plan_bwd_;
};

class KsEnv final : public Env {
 public:
  explicit KsEnv(const EnvConfig& cfg);

  const char* name() const override { return "ks"; }
  int state_dim() const override { return sys_.n(); }
  int action_dim() const override { return sys_.params().n_actuators; }
  Eigen::VectorXd drift(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const override;
  Eigen::VectorXd integrate(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const override;

  const KsSystem& system() const { return sys_; }

 protected:
  std::vector<Equilibrium> compute_equilibria() const override;

 private:
  KsSystem sys_;
};

}  // namespace merl
