#include "merl/ks.hpp"

#include <algorithm>
#include <mutex>

#include <Eigen/Dense>

namespace merl {

namespace {
// fftw plan creation/destruction is not thread-safe; plan execution is.
std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

KsSystem::KsSystem(const KsParams& p) : p_(p), nc_(p.n_grid / 2 + 1) {
  if (p_.n_grid < 8 || p_.n_grid % 2 != 0) throw ConfigError("ks n_grid must be even and >= 8");
  const int n = p_.n_grid;
  const double L = p_.domain_size;

  q_.resize(nc_);
  lin_.resize(nc_);
  dealias_.resize(nc_);
  const int kmax = n / 3;  // 2/3 rule: keep |k| <= floor(n/3)
  for (int k = 0; k < nc_; ++k) {
    q_[k] = 2.0 * M_PI * k / L;
    const double q2 = q_[k] * q_[k];
    lin_[k] = q2 - q2 * q2;
    dealias_[k] = (k <= kmax) ? 1.0 : 0.0;
  }

  // ETDRK4 phi tables; contour quadrature keeps the small-|z| entries stable
  const int M = 32;
  E_.resize(nc_);
  E2_.resize(nc_);
  Q_.resize(nc_);
  f1_.resize(nc_);
  f2_.resize(nc_);
  f3_.resize(nc_);
  const double h = p_.dt;
  for (int k = 0; k < nc_; ++k) {
    const double z = h * lin_[k];
    E_[k] = std::exp(z);
    E2_[k] = std::exp(0.5 * z);
    Cplx q_acc = 0.0, f1_acc = 0.0, f2_acc = 0.0, f3_acc = 0.0;
    for (int j = 0; j < M; ++j) {
      const Cplx r = std::exp(Cplx(0.0, M_PI * (j + 0.5) / M));
      const Cplx zr = z + r;
      const Cplx ez = std::exp(zr);
      q_acc += (std::exp(0.5 * zr) - 1.0) / zr;
      const Cplx zr3 = zr * zr * zr;
      f1_acc += (-4.0 - zr + ez * (4.0 - 3.0 * zr + zr * zr)) / zr3;
      f2_acc += (2.0 + zr + ez * (-2.0 + zr)) / zr3;
      f3_acc += (-4.0 - 3.0 * zr - zr * zr + ez * (4.0 - zr)) / zr3;
    }
    Q_[k] = h * (q_acc / double(M)).real();
    f1_[k] = h * (f1_acc / double(M)).real();
    f2_[k] = h * (f2_acc / double(M)).real();
    f3_[k] = h * (f3_acc / double(M)).real();
  }

  // actuator bank: periodically wrapped Gaussians, equally spaced centers,
  // normalized so that sum(phi) * dx == 1 exactly on the grid
  phi_.resize(n, p_.n_actuators);
  const double w = p_.actuator_width;
  for (int i = 0; i < p_.n_actuators; ++i) {
    const double c = L * i / p_.n_actuators;
    for (int g = 0; g < n; ++g) {
      const double x = g * dx();
      double v = 0.0;
      for (int img = -2; img <= 2; ++img) {
        const double d = x - c + img * L;
        v += std::exp(-0.5 * d * d / (w * w));
      }
      phi_(g, i) = v;
    }
    phi_.col(i) /= phi_.col(i).sum() * dx();
  }

  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    buf_real_ = fftw_alloc_real(n);
    buf_cplx_ = fftw_alloc_complex(nc_);
    plan_fwd_ = fftw_plan_dft_r2c_1d(n, buf_real_, buf_cplx_, FFTW_ESTIMATE);
    plan_bwd_ = fftw_plan_dft_c2r_1d(n, buf_cplx_, buf_real_, FFTW_ESTIMATE);
  }

  phi_hat_.resize(nc_, p_.n_actuators);
  Eigen::VectorXcd col(nc_);
  for (int i = 0; i < p_.n_actuators; ++i) {
    rfft(phi_.col(i), col);
    phi_hat_.col(i) = col;
  }
}

KsSystem::~KsSystem() {
  std::lock_guard<std::mutex> lock(fftw_plan_mutex());
  fftw_destroy_plan(plan_fwd_);
  fftw_destroy_plan(plan_bwd_);
  fftw_free(buf_real_);
  fftw_free(buf_cplx_);
}

double KsSystem::mode_rate(int k) const {
  const double q = 2.0 * M_PI * k / p_.domain_size;
  return q * q - q * q * q * q;
}

void KsSystem::rfft(const Eigen::VectorXd& in, Eigen::VectorXcd& out) const {
  const int n = p_.n_grid;
  std::copy(in.data(), in.data() + n, buf_real_);
  fftw_execute(plan_fwd_);
  out.resize(nc_);
  for (int k = 0; k < nc_; ++k) out[k] = Cplx(buf_cplx_[k][0], buf_cplx_[k][1]);
}

void KsSystem::irfft(const Eigen::VectorXcd& in, Eigen::VectorXd& out) const {
  const int n = p_.n_grid;
  for (int k = 0; k < nc_; ++k) {
    buf_cplx_[k][0] = in[k].real();
    buf_cplx_[k][1] = in[k].imag();
  }
  fftw_execute(plan_bwd_);
  out.resize(n);
  const double inv_n = 1.0 / n;
  for (int g = 0; g < n; ++g) out[g] = buf_real_[g] * inv_n;
}

void KsSystem::nonlinear(const Eigen::VectorXcd& v, const Eigen::VectorXcd& force_hat,
                         Eigen::VectorXcd& out) const {
  Eigen::VectorXd u;
  irfft(v, u);
  Eigen::VectorXd u2 = u.array().square();
  Eigen::VectorXcd u2_hat(nc_);
  rfft(u2, u2_hat);
  out.resize(nc_);
  for (int k = 0; k < nc_; ++k) {
    // -(u^2/2)_x = -0.5 i q (u^2)^
    out[k] = dealias_[k] * Cplx(0.0, -0.5 * q_[k]) * u2_hat[k] + force_hat[k];
  }
}

Eigen::VectorXd KsSystem::drift(const Eigen::VectorXd& u, const Eigen::VectorXd& act) const {
  Eigen::VectorXcd v(nc_), nl(nc_);
  rfft(u, v);
  const Eigen::VectorXcd force_hat = phi_hat_ * act.cast<Cplx>();
  nonlinear(v, force_hat, nl);
  for (int k = 0; k < nc_; ++k) nl[k] += lin_[k] * v[k];
  Eigen::VectorXd out;
  irfft(nl, out);
  return out;
}

Eigen::VectorXd KsSystem::step(const Eigen::VectorXd& u, const Eigen::VectorXd& act) const {
  Eigen::VectorXcd v(nc_);
  rfft(u, v);
  const Eigen::VectorXcd force_hat = phi_hat_ * act.cast<Cplx>();

  Eigen::VectorXcd nv(nc_), na(nc_), nb(nc_), nc(nc_), a(nc_), b(nc_), c(nc_);
  nonlinear(v, force_hat, nv);
  for (int k = 0; k < nc_; ++k) a[k] = E2_[k] * v[k] + Q_[k] * nv[k];
  nonlinear(a, force_hat, na);
  for (int k = 0; k < nc_; ++k) b[k] = E2_[k] * v[k] + Q_[k] * na[k];
  nonlinear(b, force_hat, nb);
  for (int k = 0; k < nc_; ++k) c[k] = E2_[k] * a[k] + Q_[k] * (2.0 * nb[k] - nv[k]);
  nonlinear(c, force_hat, nc);
  for (int k = 0; k < nc_; ++k) {
    v[k] = E_[k] * v[k] + f1_[k] * nv[k] + 2.0 * f2_[k] * (na[k] + nb[k]) + f3_[k] * nc[k];
  }
  Eigen::VectorXd out;
  irfft(v, out);
  return out;
}

Eigen::VectorXd KsSystem::steady_residual(const Eigen::VectorXd& u) const {
  return drift(u, Eigen::VectorXd::Zero(p_.n_actuators));
}

Eigen::VectorXd KsSystem::steady_jvp(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
  // d/du [ -(u^2/2)_x + L u ] applied to v: -(u v)_x + L v, dealiased like the
  // residual so Newton solves the same discrete system the integrator sees
  Eigen::VectorXcd vh(nc_), ph(nc_);
  rfft(v, vh);
  Eigen::VectorXd uv = u.cwiseProduct(v);
  rfft(uv, ph);
  for (int k = 0; k < nc_; ++k) {
    ph[k] = dealias_[k] * Cplx(0.0, -q_[k]) * ph[k] + lin_[k] * vh[k];
  }
  Eigen::VectorXd out;
  irfft(ph, out);
  return out;
}

KsSystem::NewtonResult KsSystem::newton_steady(const Eigen::VectorXd& u0, int max_iters,
                                               double tol) const {
  const int n = p_.n_grid;
  NewtonResult res;
  res.u = u0;
  Eigen::VectorXd g = steady_residual(res.u);
  double gnorm = g.lpNorm<Eigen::Infinity>();
  Eigen::MatrixXd jac(n, n);
  Eigen::VectorXd ej = Eigen::VectorXd::Zero(n);
  for (res.iters = 0; res.iters < max_iters; ++res.iters) {
    if (gnorm <= tol) {
      res.converged = true;
      break;
    }
    for (int j = 0; j < n; ++j) {
      ej[j] = 1.0;
      jac.col(j) = steady_jvp(res.u, ej);
      ej[j] = 0.0;
    }
    // pseudo-inverse solve: the periodic steady-state Jacobian carries exact
    // null directions (translation, constant shift); the minimal-norm step
    // has no component along them
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(jac);
    const Eigen::VectorXd delta = cod.solve(-g);
    double s = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < 12; ++bt) {
      Eigen::VectorXd cand = res.u + s * delta;
      Eigen::VectorXd gc = steady_residual(cand);
      const double cnorm = gc.lpNorm<Eigen::Infinity>();
      if (cnorm < gnorm) {
        res.u = std::move(cand);
        g = std::move(gc);
        gnorm = cnorm;
        accepted = true;
        break;
      }
      s *= 0.5;
    }
    if (!accepted) break;  // stagnated; report non-convergence unless done
  }
  res.converged = res.converged || gnorm <= tol;
  res.residual = gnorm;
  return res;
}

std::vector<Eigen::VectorXd> KsSystem::steady_states() const {
  const int n = p_.n_grid;
  const double L = p_.domain_size;
  std::vector<Eigen::VectorXd> seeds;
  for (int k = 1; k <= 3; ++k) {
    for (double amp : {0.4, 0.8, 1.2, 1.6, 2.4}) {
      Eigen::VectorXd u(n);
      for (int g = 0; g < n; ++g) u[g] = amp * std::sin(2.0 * M_PI * k * g * dx() / L);
      seeds.push_back(u);
    }
  }
  {
    // a couple of mixed-mode seeds widen the basin coverage
    Eigen::VectorXd u(n);
    for (int g = 0; g < n; ++g) {
      const double x = 2.0 * M_PI * g * dx() / L;
      u[g] = 1.2 * std::sin(x) + 0.8 * std::sin(2.0 * x);
    }
    seeds.push_back(u);
    for (int g = 0; g < n; ++g) {
      const double x = 2.0 * M_PI * g * dx() / L;
      u[g] = 0.6 * std::cos(x) - 1.0 * std::sin(3.0 * x);
    }
    seeds.push_back(u);
  }

  std::vector<Eigen::VectorXd> found;
  std::vector<Eigen::VectorXd> spectra;
  Eigen::VectorXcd vh(nc_);
  for (const auto& seed : seeds) {
    NewtonResult r = newton_steady(seed);
    if (!r.converged) continue;
    if (r.u.lpNorm<Eigen::Infinity>() < 1e-2) continue;  // trivial state
    rfft(r.u, vh);
    Eigen::VectorXd mag = vh.cwiseAbs();
    bool dup = false;
    for (const auto& m : spectra) {
      if ((m - mag).norm() <= 1e-4 * std::max(m.norm(), mag.norm())) {
        dup = true;
        break;
      }
    }
    if (!dup) {
      found.push_back(r.u);
      spectra.push_back(mag);
    }
  }
  std::sort(found.begin(), found.end(),
            [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.norm() < b.norm(); });
  return found;
}

KsEnv::KsEnv(const EnvConfig& cfg)
    : Env(cfg, /*state_scale=*/1.0),
      sys_(KsParams{cfg.ks_domain_size, cfg.ks_n_grid, cfg.dt, cfg.ks_n_actuators,
                    cfg.ks_actuator_width}) {}

Eigen::VectorXd KsEnv::drift(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  return sys_.drift(x, u);
}

Eigen::VectorXd KsEnv::integrate(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  return sys_.step(x, u);
}

std::vector<Equilibrium> KsEnv::compute_equilibria() const {
  std::vector<Equilibrium> out;
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(sys_.n());
  out.push_back({"zero", zero, equilibrium_residual(zero)});
  const auto states = sys_.steady_states();
  for (std::size_t i = 0; i < states.size(); ++i) {
    out.push_back({"E" + std::to_string(i + 1), states[i], equilibrium_residual(states[i])});
  }
  return out;
}

}  // namespace merl
