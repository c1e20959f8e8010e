#include "merl/complexity.hpp"

#include <algorithm>
#include <cmath>

#include "merl/stats.hpp"

namespace merl {

namespace {
constexpr double kSqrt2Pi = 2.5066282746310002;

// flat-order coefficient pointers into a live net, so single parameters can
// be bumped without reserializing the whole block
std::vector<double*> mean_param_ptrs(PolicyParams& p) {
  std::vector<double*> ptrs;
  ptrs.reserve(p.mean_param_count());
  auto push_mat = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) ptrs.push_back(&m(r, c));
  };
  auto push_vec = [&](Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) ptrs.push_back(&v[i]);
  };
  push_mat(p.mean.W1);
  push_vec(p.mean.b1);
  push_mat(p.mean.W2);
  push_vec(p.mean.b2);
  push_mat(p.mean.W_out);
  push_vec(p.mean.b_out);
  return ptrs;
}

}  // namespace

double vector_norm(const Eigen::VectorXd& v, Pnorm p) {
  switch (p) {
    case Pnorm::P1:
      return v.lpNorm<1>();
    case Pnorm::P2:
      return v.norm();
    case Pnorm::PInf:
      return v.lpNorm<Eigen::Infinity>();
    case Pnorm::PF:
      return v.norm();
  }
  return 0.0;
}

double spectral_norm_power_iteration(const Eigen::MatrixXd& W, double tol, int max_iters) {
  if (W.size() == 0) return 0.0;
  // iterate on the smaller Gram matrix; both share nonzero eigenvalues
  const Eigen::MatrixXd B = (W.rows() >= W.cols()) ? Eigen::MatrixXd(W.transpose() * W)
                                                   : Eigen::MatrixXd(W * W.transpose());
  const int n = static_cast<int>(B.rows());
  if (B.cwiseAbs().maxCoeff() == 0.0) return 0.0;

  Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
  // the all-ones start can sit exactly in the kernel; fall back to basis
  // vectors until B v != 0
  if ((B * v).norm() == 0.0) {
    for (int i = 0; i < n; ++i) {
      if (B.col(i).norm() != 0.0) {
        v = Eigen::VectorXd::Unit(n, i);
        break;
      }
    }
  }

  double lambda = 0.0, resid = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    const Eigen::VectorXd w = B * v;
    lambda = v.dot(w);  // Rayleigh quotient, ||v|| == 1
    resid = (w - lambda * v).norm();
    if (resid <= tol * std::max(lambda, 1.0)) return std::sqrt(std::max(lambda, 0.0));
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    v = w / wn;
  }
  throw std::runtime_error("power iteration did not converge: lambda=" + fmt_double(lambda) +
                           " residual=" + fmt_double(resid) + " after " +
                           std::to_string(max_iters) + " iterations");
}

double operator_norm(const Eigen::MatrixXd& W, Pnorm p) {
  switch (p) {
    case Pnorm::P1:
      return W.cwiseAbs().colwise().sum().maxCoeff();
    case Pnorm::PInf:
      return W.cwiseAbs().rowwise().sum().maxCoeff();
    case Pnorm::PF:
      return W.norm();
    case Pnorm::P2:
      return spectral_norm_power_iteration(W);
  }
  return 0.0;
}

double layer_product_norm(const PolicyParams& p, Pnorm norm) {
  return operator_norm(p.mean.W1, norm) * operator_norm(p.mean.W2, norm) *
         operator_norm(p.mean.W_out, norm);
}

void PolicyMeanModel::output_grad(const Eigen::VectorXd& x, int j, Eigen::VectorXd& g) const {
  MlpWorkspace ws;
  mlp_forward(p_->mean, x, ws);
  MlpGrad scratch = MlpGrad::zeros_like(p_->mean);
  Eigen::VectorXd ej = Eigen::VectorXd::Zero(p_->act_dim());
  ej[j] = 1.0;
  mlp_backward(p_->mean, x, ws, ej, scratch);
  Eigen::VectorXd flat(scratch.param_count());
  scratch.to_flat(flat.data());
  g += flat;
}

double fim_trace_at(const MeanModel& model, const Eigen::VectorXd& sigma,
                    const Eigen::VectorXd& x) {
  double tr = 0.0;
  Eigen::VectorXd g(model.param_dim());
  for (int j = 0; j < model.act_dim(); ++j) {
    g.setZero();
    model.output_grad(x, j, g);
    tr += g.squaredNorm() / (sigma[j] * sigma[j]);
  }
  return tr;
}

FimTraceResult fim_trace_closed_form(const PolicyParams& p,
                                     const std::vector<Eigen::VectorXd>& states) {
  PolicyMeanModel model(p);
  const Eigen::VectorXd sigma = p.sigma();
  FimTraceResult res;
  res.samples.resize(static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    res.samples[static_cast<Eigen::Index>(i)] = fim_trace_at(model, sigma, states[i]);
  }
  res.mean = states.empty() ? 0.0 : res.samples.mean();
  return res;
}

McEstimate fim_trace_mc(const PolicyParams& p, const std::vector<Eigen::VectorXd>& states,
                        int n_action_samples, double fd_h, RngStream& rng) {
  if (n_action_samples < 2) throw std::logic_error("need >= 2 action samples");
  PolicyParams work = p;
  const std::vector<double*> ptrs = mean_param_ptrs(work);
  const int b = static_cast<int>(ptrs.size());
  PolicyGrad gp = PolicyGrad::zeros_like(work);
  PolicyGrad gm = PolicyGrad::zeros_like(work);
  Eigen::VectorXd gp_flat(gp.param_count()), gm_flat(gm.param_count());

  double mean_of_means = 0.0, var_acc = 0.0;
  for (const auto& x : states) {
    double s_mean = 0.0, s_m2 = 0.0;
    for (int a = 0; a < n_action_samples; ++a) {
      const Eigen::VectorXd action = sample_action(work, x, rng);
      double tr = 0.0;
      for (int d = 0; d < b; ++d) {
        const double orig = *ptrs[d];
        *ptrs[d] = orig + fd_h;
        gp.set_zero();
        grad_log_prob(work, x, action, gp);
        *ptrs[d] = orig - fd_h;
        gm.set_zero();
        grad_log_prob(work, x, action, gm);
        *ptrs[d] = orig;
        gp.to_flat(gp_flat.data());
        gm.to_flat(gm_flat.data());
        tr -= (gp_flat[d] - gm_flat[d]) / (2.0 * fd_h);
      }
      // Welford over action samples at this state
      const double delta = tr - s_mean;
      s_mean += delta / (a + 1);
      s_m2 += delta * (tr - s_mean);
    }
    mean_of_means += s_mean;
    var_acc += (s_m2 / (n_action_samples - 1)) / n_action_samples;
  }
  const double S = static_cast<double>(states.size());
  return {mean_of_means / S, std::sqrt(var_acc) / S};
}

HessianEstimate estimate_objective_hessian(const TrajectorySampler& sampler, int dim, int n_traj,
                                           RngStream& rng) {
  HessianEstimate est;
  est.matrix = Eigen::MatrixXd::Zero(dim, dim);
  double tr_mean = 0.0, tr_m2 = 0.0;
  Eigen::VectorXd g(dim);
  Eigen::MatrixXd contrib(dim, dim);
  for (int i = 0; i < n_traj; ++i) {
    const TrajectorySample ts = sampler(rng);
    g.setZero();
    for (const auto& step_g : ts.grads) g += step_g;
    contrib.noalias() = g * g.transpose();
    for (const auto& h : ts.hessians) contrib += h;
    contrib *= ts.discounted_cost;
    est.matrix += contrib;
    const double tr = contrib.trace();
    const double delta = tr - tr_mean;
    tr_mean += delta / (i + 1);
    tr_m2 += delta * (tr - tr_mean);
  }
  est.matrix /= static_cast<double>(n_traj);
  est.trace = tr_mean;
  est.trace_std_err = n_traj > 1 ? std::sqrt(tr_m2 / (n_traj - 1) / n_traj) : 0.0;
  return est;
}

namespace {

// shared by the dense and trace estimators: one on-policy trajectory on the
// noiseless env, returning per-step (state input, action) and discounted cost
struct RawTraj {
  double cost = 0.0;
  std::vector<Eigen::VectorXd> inputs;
  std::vector<Eigen::VectorXd> actions;
};

RawTraj sample_raw_traj(const PolicyParams& policy, Env& env, double gamma, RngStream& rng) {
  RawTraj out;
  EnvState s = env.initial_state(rng);
  double discount = 1.0;
  const int H = env.horizon() - 1;
  for (int h = 0; h <= H; ++h) {
    const Eigen::VectorXd input = policy_input(env, s.x);
    const Eigen::VectorXd a = sample_action(policy, input, rng);
    out.inputs.push_back(input);
    out.actions.push_back(a);
    const Eigen::VectorXd u = env.clip_action(a);
    Eigen::VectorXd x_next = env.integrate(s.x, u);
    if (!x_next.allFinite() || x_next.lpNorm<Eigen::Infinity>() > env.blowup_threshold()) {
      for (int j = h; j <= H; ++j) {
        out.cost += discount * env.sentinel_cost();
        discount *= gamma;
      }
      break;
    }
    out.cost += discount * env.cost(x_next, u);
    discount *= gamma;
    s.x = std::move(x_next);
    s.h += 1;
  }
  return out;
}

Eigen::VectorXd mean_block_grad(const PolicyParams& p, const Eigen::VectorXd& obs,
                                const Eigen::VectorXd& action, PolicyGrad& scratch,
                                Eigen::VectorXd& flat_full) {
  scratch.set_zero();
  grad_log_prob(p, obs, action, scratch);
  scratch.to_flat(flat_full.data());
  return flat_full.head(p.mean_param_count());
}

}  // namespace

HessianEstimate objective_hessian_estimate(const PolicyParams& policy, Env& env, int n_traj,
                                           double gamma, double fd_h, RngStream& rng,
                                           int max_params) {
  const int b = policy.mean_param_count();
  if (b > max_params) {
    throw std::logic_error("dense objective-Hessian estimator is for test-scale policies (" +
                           std::to_string(b) + " params > " + std::to_string(max_params) +
                           "); use objective_hessian_trace");
  }
  PolicyParams work = policy;
  const std::vector<double*> ptrs = mean_param_ptrs(work);
  PolicyGrad scratch = PolicyGrad::zeros_like(work);
  Eigen::VectorXd flat_full(scratch.param_count());

  TrajectorySampler sampler = [&](RngStream& r) {
    const RawTraj traj = sample_raw_traj(work, env, gamma, r);
    TrajectorySample ts;
    ts.discounted_cost = traj.cost;
    for (std::size_t h = 0; h < traj.inputs.size(); ++h) {
      ts.grads.push_back(mean_block_grad(work, traj.inputs[h], traj.actions[h], scratch,
                                         flat_full));
      Eigen::MatrixXd hess(b, b);
      for (int d = 0; d < b; ++d) {
        const double orig = *ptrs[d];
        *ptrs[d] = orig + fd_h;
        const Eigen::VectorXd gp =
            mean_block_grad(work, traj.inputs[h], traj.actions[h], scratch, flat_full);
        *ptrs[d] = orig - fd_h;
        const Eigen::VectorXd gm =
            mean_block_grad(work, traj.inputs[h], traj.actions[h], scratch, flat_full);
        *ptrs[d] = orig;
        hess.col(d) = (gp - gm) / (2.0 * fd_h);
      }
      ts.hessians.push_back(std::move(hess));
    }
    return ts;
  };
  return estimate_objective_hessian(sampler, b, n_traj, rng);
}

McEstimate objective_hessian_trace(const PolicyParams& policy, Env& env, int n_traj,
                                   int n_probes, double gamma, double fd_h, RngStream& rng) {
  PolicyParams work = policy;
  const int b = work.mean_param_count();
  const Eigen::VectorXd theta0 = work.mean_flat();
  PolicyGrad scratch = PolicyGrad::zeros_like(work);
  Eigen::VectorXd flat_full(scratch.param_count());

  double mean = 0.0, m2 = 0.0;
  for (int i = 0; i < n_traj; ++i) {
    const RawTraj traj = sample_raw_traj(work, env, gamma, rng);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(b);
    for (std::size_t h = 0; h < traj.inputs.size(); ++h) {
      g += mean_block_grad(work, traj.inputs[h], traj.actions[h], scratch, flat_full);
    }
    double hess_tr = 0.0;
    for (int p = 0; p < n_probes; ++p) {
      Eigen::VectorXd v(b);
      for (int d = 0; d < b; ++d) v[d] = rng.uniform() < 0.5 ? -1.0 : 1.0;
      double acc = 0.0;
      work.set_mean_flat(theta0 + fd_h * v);
      for (std::size_t h = 0; h < traj.inputs.size(); ++h) {
        acc += v.dot(mean_block_grad(work, traj.inputs[h], traj.actions[h], scratch, flat_full));
      }
      work.set_mean_flat(theta0 - fd_h * v);
      for (std::size_t h = 0; h < traj.inputs.size(); ++h) {
        acc -= v.dot(mean_block_grad(work, traj.inputs[h], traj.actions[h], scratch, flat_full));
      }
      work.set_mean_flat(theta0);
      hess_tr += acc / (2.0 * fd_h);
    }
    hess_tr /= static_cast<double>(n_probes);
    const double sample = traj.cost * (g.squaredNorm() + hess_tr);
    const double delta = sample - mean;
    mean += delta / (i + 1);
    m2 += delta * (sample - mean);
  }
  return {mean, n_traj > 1 ? std::sqrt(m2 / (n_traj - 1) / n_traj) : 0.0};
}

KdeResult kde(const Eigen::VectorXd& samples, int grid_points, double bandwidth) {
  const int n = static_cast<int>(samples.size());
  if (n < 1) throw std::logic_error("kde needs at least one sample");
  KdeResult res;
  const double lo_s = samples.minCoeff(), hi_s = samples.maxCoeff();
  const double mean = samples.mean();
  const double var = (samples.array() - mean).square().sum() / n;
  if (var == 0.0) {
    res.degenerate = true;
    res.grid = Eigen::VectorXd::Constant(1, lo_s);
    res.density = Eigen::VectorXd::Constant(1, 1.0);  // point mass marker
    return res;
  }

  double b = bandwidth;
  if (b <= 0.0) {
    std::vector<double> sorted(samples.data(), samples.data() + n);
    std::sort(sorted.begin(), sorted.end());
    const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    const double std_dev = std::sqrt(var);
    double scale = std_dev;
    if (iqr > 0.0) scale = std::min(std_dev, iqr / 1.34);
    b = 0.9 * scale * std::pow(static_cast<double>(n), -0.2);
  }
  res.bandwidth = b;

  const double lo = lo_s - 3.0 * b, hi = hi_s + 3.0 * b;
  res.grid.resize(grid_points);
  res.density.resize(grid_points);
  const double dg = (hi - lo) / (grid_points - 1);
  const double inv_norm = 1.0 / (n * b * kSqrt2Pi);
  for (int i = 0; i < grid_points; ++i) {
    const double x = lo + i * dg;
    res.grid[i] = x;
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
      const double z = (x - samples[j]) / b;
      acc += std::exp(-0.5 * z * z);
    }
    res.density[i] = acc * inv_norm;
  }
  // trapezoid renormalization; the raw leakage past the 3-bandwidth pad is
  // already ~1e-6, this pins the integral at 1 exactly
  double integral = 0.0;
  for (int i = 0; i + 1 < grid_points; ++i) {
    integral += 0.5 * (res.density[i] + res.density[i + 1]) * dg;
  }
  if (integral > 0.0) res.density /= integral;
  return res;
}

MomentSummary skewness_kurtosis(const Eigen::VectorXd& samples) {
  MomentSummary s;
  const int n = static_cast<int>(samples.size());
  if (n == 0) return s;
  s.mean = samples.mean();
  std::vector<double> sorted(samples.data(), samples.data() + n);
  std::sort(sorted.begin(), sorted.end());
  s.median = quantile_sorted(sorted, 0.5);
  const Eigen::ArrayXd c = samples.array() - s.mean;
  const double m2 = c.square().sum() / n;
  if (m2 <= 0.0) return s;
  const double m3 = c.cube().sum() / n;
  const double m4 = c.square().square().sum() / n;
  s.skewness = m3 / std::pow(m2, 1.5);
  s.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  return s;
}

json ComplexityReport::to_json() const {
  json j;
  j["vector_norms"] = json{{"p1", vector_norm_p1}, {"p2", vector_norm_p2},
                           {"pinf", vector_norm_pinf}};
  j["layer_products"] = json{{"p1", layer_product_p1},
                             {"p2", layer_product_p2},
                             {"pinf", layer_product_pinf},
                             {"pF", layer_product_pf}};
  j["fim_trace_mean"] = fim_trace_mean;
  j["fim_trace_samples"] = merl::to_json(fim_trace_samples);
  j["fim_moments"] = json{{"mean", fim_moments.mean},
                          {"median", fim_moments.median},
                          {"skewness", fim_moments.skewness},
                          {"excess_kurtosis", fim_moments.excess_kurtosis}};
  j["kde"] = json{{"grid", merl::to_json(fim_kde.grid)},
                  {"density", merl::to_json(fim_kde.density)},
                  {"bandwidth", fim_kde.bandwidth},
                  {"degenerate", fim_kde.degenerate}};
  j["n_states"] = n_states;
  return j;
}

ComplexityReport ComplexityReport::from_json(const json& j) {
  ComplexityReport r;
  r.vector_norm_p1 = j.at("vector_norms").at("p1").get<double>();
  r.vector_norm_p2 = j.at("vector_norms").at("p2").get<double>();
  r.vector_norm_pinf = j.at("vector_norms").at("pinf").get<double>();
  r.layer_product_p1 = j.at("layer_products").at("p1").get<double>();
  r.layer_product_p2 = j.at("layer_products").at("p2").get<double>();
  r.layer_product_pinf = j.at("layer_products").at("pinf").get<double>();
  r.layer_product_pf = j.at("layer_products").at("pF").get<double>();
  r.fim_trace_mean = j.at("fim_trace_mean").get<double>();
  r.fim_trace_samples = vector_from_json(j.at("fim_trace_samples"));
  r.fim_moments.mean = j.at("fim_moments").at("mean").get<double>();
  r.fim_moments.median = j.at("fim_moments").at("median").get<double>();
  r.fim_moments.skewness = j.at("fim_moments").at("skewness").get<double>();
  r.fim_moments.excess_kurtosis = j.at("fim_moments").at("excess_kurtosis").get<double>();
  r.fim_kde.grid = vector_from_json(j.at("kde").at("grid"));
  r.fim_kde.density = vector_from_json(j.at("kde").at("density"));
  r.fim_kde.bandwidth = j.at("kde").at("bandwidth").get<double>();
  r.fim_kde.degenerate = j.at("kde").at("degenerate").get<bool>();
  r.n_states = j.at("n_states").get<int>();
  return r;
}

std::vector<std::string> ComplexityReport::csv_header() {
  return {"vector_norm_p1",   "vector_norm_p2",   "vector_norm_pinf",
          "layer_product_p1", "layer_product_p2", "layer_product_pinf",
          "layer_product_pF", "fim_trace_mean"};
}

std::vector<std::string> ComplexityReport::csv_row() const {
  return {fmt_double(vector_norm_p1),   fmt_double(vector_norm_p2),
          fmt_double(vector_norm_pinf), fmt_double(layer_product_p1),
          fmt_double(layer_product_p2), fmt_double(layer_product_pinf),
          fmt_double(layer_product_pf), fmt_double(fim_trace_mean)};
}

ComplexityReport measure_policy(const PolicyParams& p, const std::vector<Eigen::VectorXd>& states,
                                int kde_grid_points) {
  ComplexityReport r;
  const Eigen::VectorXd flat = p.mean_flat();
  r.vector_norm_p1 = vector_norm(flat, Pnorm::P1);
  r.vector_norm_p2 = vector_norm(flat, Pnorm::P2);
  r.vector_norm_pinf = vector_norm(flat, Pnorm::PInf);
  r.layer_product_p1 = layer_product_norm(p, Pnorm::P1);
  r.layer_product_p2 = layer_product_norm(p, Pnorm::P2);
  r.layer_product_pinf = layer_product_norm(p, Pnorm::PInf);
  r.layer_product_pf = layer_product_norm(p, Pnorm::PF);
  const FimTraceResult fim = fim_trace_closed_form(p, states);
  r.fim_trace_mean = fim.mean;
  r.fim_trace_samples = fim.samples;
  r.n_states = static_cast<int>(states.size());
  if (r.n_states > 0) {
    r.fim_kde = kde(fim.samples, kde_grid_points);
    r.fim_moments = skewness_kurtosis(fim.samples);
  }
  return r;
}

}  // namespace merl
