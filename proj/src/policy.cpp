#include "merl/policy.hpp"

#include <cmath>

namespace merl {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
}

Eigen::VectorXd PolicyParams::mean_flat() const {
  Eigen::VectorXd v(mean_param_count());
  mean.to_flat(v.data());
  return v;
}

void PolicyParams::set_mean_flat(const Eigen::VectorXd& v) {
  if (v.size() != mean_param_count()) throw std::logic_error("mean_flat size mismatch");
  mean.from_flat(v.data());
}

json PolicyParams::to_json() const {
  json j = mean.to_json();
  j["obs_dim"] = obs_dim();
  j["act_dim"] = act_dim();
  j["log_std"] = merl::to_json(log_std);
  return j;
}

PolicyParams PolicyParams::from_json(const json& j) {
  PolicyParams p;
  p.mean = Mlp::from_json(j);
  p.log_std = vector_from_json(j.at("log_std"));
  const int obs = j.at("obs_dim").get<int>();
  const int act = j.at("act_dim").get<int>();
  if (obs != p.mean.in_dim() || act != p.mean.out_dim() || p.log_std.size() != act) {
    throw ConfigError("checkpoint dims disagree with layer shapes");
  }
  return p;
}

void PolicyParams::save(const std::filesystem::path& path) const { save_json(path, to_json()); }

PolicyParams PolicyParams::load(const std::filesystem::path& path) {
  return from_json(load_json(path));
}

PolicyParams PolicyParams::init(int obs, int act, int hidden, RngStream& rng) {
  PolicyParams p;
  p.mean = Mlp::init(obs, hidden, act, 0.1, rng);
  p.log_std = Eigen::VectorXd::Zero(act);
  return p;
}

PolicyGrad PolicyGrad::zeros_like(const PolicyParams& p) {
  PolicyGrad g;
  g.mean = MlpGrad::zeros_like(p.mean);
  g.log_std = Eigen::VectorXd::Zero(p.log_std.size());
  return g;
}

void PolicyGrad::set_zero() {
  mean.set_zero();
  log_std.setZero();
}

int PolicyGrad::param_count() const { return mean.param_count() + static_cast<int>(log_std.size()); }

void PolicyGrad::to_flat(double* dst) const {
  mean.to_flat(dst);
  double* p = dst + mean.param_count();
  for (Eigen::Index i = 0; i < log_std.size(); ++i) *p++ = log_std[i];
}

Eigen::VectorXd forward_mean(const PolicyParams& p, const Eigen::VectorXd& obs) {
  MlpWorkspace ws;
  mlp_forward(p.mean, obs, ws);
  return ws.y;
}

double log_prob(const PolicyParams& p, const Eigen::VectorXd& obs, const Eigen::VectorXd& action) {
  const Eigen::VectorXd mu = forward_mean(p, obs);
  double lp = 0.0;
  for (Eigen::Index j = 0; j < action.size(); ++j) {
    const double z = (action[j] - mu[j]) * std::exp(-p.log_std[j]);
    lp += -0.5 * z * z - p.log_std[j] - 0.5 * kLog2Pi;
  }
  return lp;
}

Eigen::VectorXd sample_action(const PolicyParams& p, const Eigen::VectorXd& obs, RngStream& rng,
                              double* logp) {
  const Eigen::VectorXd mu = forward_mean(p, obs);
  Eigen::VectorXd a(mu.size());
  double lp = 0.0;
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    const double z = rng.normal();
    a[j] = mu[j] + std::exp(p.log_std[j]) * z;
    lp += -0.5 * z * z - p.log_std[j] - 0.5 * kLog2Pi;
  }
  if (logp) *logp = lp;
  return a;
}

double entropy(const PolicyParams& p) {
  return p.log_std.sum() + 0.5 * p.log_std.size() * (1.0 + kLog2Pi);
}

void grad_log_prob(const PolicyParams& p, const Eigen::VectorXd& obs,
                   const Eigen::VectorXd& action, PolicyGrad& g) {
  MlpWorkspace ws;
  mlp_forward(p.mean, obs, ws);
  Eigen::VectorXd dmu(action.size());
  for (Eigen::Index j = 0; j < action.size(); ++j) {
    const double inv_var = std::exp(-2.0 * p.log_std[j]);
    const double diff = action[j] - ws.y[j];
    dmu[j] = diff * inv_var;
    g.log_std[j] += diff * diff * inv_var - 1.0;
  }
  mlp_backward(p.mean, obs, ws, dmu, g.mean);
}

Eigen::VectorXd mean_jacobian_row_norms(const PolicyParams& p, const Eigen::VectorXd& obs) {
  MlpWorkspace ws;
  mlp_forward(p.mean, obs, ws);
  MlpGrad g = MlpGrad::zeros_like(p.mean);
  Eigen::VectorXd norms(p.act_dim());
  Eigen::VectorXd ej = Eigen::VectorXd::Zero(p.act_dim());
  Eigen::VectorXd flat(p.mean_param_count());
  for (int j = 0; j < p.act_dim(); ++j) {
    g.set_zero();
    ej[j] = 1.0;
    mlp_backward(p.mean, obs, ws, ej, g);
    ej[j] = 0.0;
    g.to_flat(flat.data());
    norms[j] = flat.squaredNorm();
  }
  return norms;
}

double kl_gaussian(const PolicyParams& p, const PolicyParams& q, const Eigen::VectorXd& obs) {
  const Eigen::VectorXd mu_p = forward_mean(p, obs);
  const Eigen::VectorXd mu_q = forward_mean(q, obs);
  double kl = 0.0;
  for (Eigen::Index j = 0; j < mu_p.size(); ++j) {
    const double var_p = std::exp(2.0 * p.log_std[j]);
    const double var_q = std::exp(2.0 * q.log_std[j]);
    const double dm = mu_q[j] - mu_p[j];
    kl += p.log_std[j] - q.log_std[j] + 0.5 * (var_q + dm * dm) / var_p - 0.5;
  }
  return kl;
}

}  // namespace merl
