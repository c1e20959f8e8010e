#include "merl/robustness.hpp"

#include <algorithm>
#include <cmath>

#include "merl/stats.hpp"

namespace merl {

namespace {
// channel tags for stream derivation; conditional evaluation uses its own set
// so unconditional and conditional estimates never share draws
enum Channel : std::uint64_t {
  kInit = 1,
  kPolicy = 2,
  kObs = 3,
  kCondX0 = 4,
  kCondPolicy = 5,
  kCondObs = 6,
};

constexpr double kMinCleanLoss = 1e-12;
}  // namespace

LossEstimate estimate_loss(const PolicyParams& policy, Env& env, double sigma_y, int n_episodes,
                           double gamma, std::uint64_t crn_base, bool sample_actions) {
  if (n_episodes < 1) throw std::logic_error("estimate_loss: need >= 1 episode");
  LossEstimate out;
  out.per_episode.resize(n_episodes);
  const int H = env.horizon() - 1;
  for (int i = 0; i < n_episodes; ++i) {
    const std::uint64_t ep = static_cast<std::uint64_t>(i);
    RngStream init_rng = RngStream::derived(crn_base, {kInit, ep});
    RngStream policy_rng = RngStream::derived(crn_base, {kPolicy, ep});
    RngStream obs_rng = RngStream::derived(crn_base, {kObs, ep});
    const EnvState s0 = env.initial_state(init_rng);
    const RolloutResult rr = rollout_cost(env, policy, s0.x, H, gamma, sigma_y, policy_rng,
                                          obs_rng, sample_actions);
    out.per_episode[i] = rr.discounted_cost;
    if (rr.truncated) ++out.n_blowups;
  }
  out.mean = out.per_episode.mean();
  if (n_episodes > 1) {
    const double var =
        (out.per_episode.array() - out.mean).square().sum() / (n_episodes - 1);
    out.std_err = std::sqrt(var / n_episodes);
  }
  return out;
}

LossEstimate estimate_loss(const PolicyParams& policy, Env& env, double sigma_y, int n_episodes,
                           double gamma, RngStream& rng, bool sample_actions) {
  return estimate_loss(policy, env, sigma_y, n_episodes, gamma, rng.raw(), sample_actions);
}

ExcessRiskReport excess_risk(const PolicyParams& policy, Env& env, double sigma_y,
                             int n_episodes, double gamma, RngStream& rng,
                             bool sample_actions, bool crn) {
  if (sigma_y < 0.0) throw std::logic_error("excess_risk: sigma_y must be >= 0");
  const std::uint64_t noisy_base = rng.raw();
  const std::uint64_t clean_base = crn ? noisy_base : rng.raw();
  const LossEstimate noisy =
      estimate_loss(policy, env, sigma_y, n_episodes, gamma, noisy_base, sample_actions);
  const LossEstimate clean =
      estimate_loss(policy, env, 0.0, n_episodes, gamma, clean_base, sample_actions);

  ExcessRiskReport rep;
  rep.sigma_y = sigma_y;
  rep.equilibrium_label = env.target().label;
  rep.j_noisy = noisy.mean;
  rep.j_noisy_stderr = noisy.std_err;
  rep.j_clean = clean.mean;
  rep.j_clean_stderr = clean.std_err;
  rep.n_episodes = n_episodes;
  rep.n_blowups_noisy = noisy.n_blowups;
  rep.n_blowups_clean = clean.n_blowups;
  rep.crn = crn;
  rep.r = rep.j_noisy - rep.j_clean;
  if (rep.j_clean < kMinCleanLoss) {
    throw ConfigError("excess_risk: noiseless loss " + fmt_double(rep.j_clean) +
                      " is below 1e-12, rate undefined");
  }
  rep.r_rate = rep.r / rep.j_clean;
  return rep;
}

std::vector<ConditionalSample> conditional_excess_risk(const PolicyParams& policy, Env& env,
                                                       double sigma_y,
                                                       const std::vector<Eigen::VectorXd>& x0s,
                                                       int episodes_per_x0, double gamma,
                                                       std::uint64_t crn_base,
                                                       bool sample_actions) {
  if (x0s.empty()) throw std::logic_error("conditional_excess_risk: need >= 1 initial state");
  if (episodes_per_x0 < 1) throw std::logic_error("conditional_excess_risk: need >= 1 episode");
  const int H = env.horizon() - 1;
  std::vector<ConditionalSample> out;
  out.reserve(x0s.size());
  for (std::size_t k = 0; k < x0s.size(); ++k) {
    ConditionalSample cs;
    cs.x0_index = static_cast<int>(k);
    for (int j = 0; j < episodes_per_x0; ++j) {
      const std::uint64_t kk = static_cast<std::uint64_t>(k);
      const std::uint64_t jj = static_cast<std::uint64_t>(j);
      // replay the identical policy/observation streams for both arms
      {
        RngStream policy_rng = RngStream::derived(crn_base, {kCondPolicy, kk, jj});
        RngStream obs_rng = RngStream::derived(crn_base, {kCondObs, kk, jj});
        cs.j_noisy += rollout_cost(env, policy, x0s[k], H, gamma, sigma_y, policy_rng, obs_rng,
                                   sample_actions)
                          .discounted_cost;
      }
      {
        RngStream policy_rng = RngStream::derived(crn_base, {kCondPolicy, kk, jj});
        RngStream obs_rng = RngStream::derived(crn_base, {kCondObs, kk, jj});
        cs.j_clean += rollout_cost(env, policy, x0s[k], H, gamma, 0.0, policy_rng, obs_rng,
                                   sample_actions)
                          .discounted_cost;
      }
    }
    cs.j_noisy /= episodes_per_x0;
    cs.j_clean /= episodes_per_x0;
    cs.diff = cs.j_noisy - cs.j_clean;
    if (cs.j_clean < kMinCleanLoss) {
      throw ConfigError("conditional_excess_risk: noiseless loss below 1e-12 at x0 index " +
                        std::to_string(k));
    }
    cs.rate = cs.diff / cs.j_clean;
    out.push_back(std::move(cs));
  }
  return out;
}

std::vector<ConditionalSample> conditional_excess_risk(const PolicyParams& policy, Env& env,
                                                       double sigma_y, int n_x0,
                                                       int episodes_per_x0, double gamma,
                                                       RngStream& rng, bool sample_actions) {
  if (n_x0 < 1) throw std::logic_error("conditional_excess_risk: need >= 1 initial state");
  const std::uint64_t crn_base = rng.raw();
  std::vector<Eigen::VectorXd> x0s;
  x0s.reserve(n_x0);
  for (int k = 0; k < n_x0; ++k) {
    RngStream x0_rng = RngStream::derived(crn_base, {kCondX0, static_cast<std::uint64_t>(k)});
    x0s.push_back(env.initial_state(x0_rng).x);
  }
  return conditional_excess_risk(policy, env, sigma_y, x0s, episodes_per_x0, gamma, crn_base,
                                 sample_actions);
}

BoxplotStats boxplot_stats(const std::vector<double>& samples) {
  if (samples.size() < 5) throw std::logic_error("boxplot_stats: need >= 5 samples");
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  BoxplotStats bs;
  bs.q1 = quantile_sorted(sorted, 0.25);
  bs.median = quantile_sorted(sorted, 0.5);
  bs.q3 = quantile_sorted(sorted, 0.75);
  const double iqr = bs.q3 - bs.q1;
  const double lo_fence = bs.q1 - 1.5 * iqr;
  const double hi_fence = bs.q3 + 1.5 * iqr;
  bs.whisker_lo = bs.q1;
  bs.whisker_hi = bs.q3;
  for (double v : sorted) {
    if (v >= lo_fence) {
      bs.whisker_lo = v;  // smallest sample inside the fence
      break;
    }
  }
  for (auto it = sorted.rbegin(); it != sorted.rend(); ++it) {
    if (*it <= hi_fence) {
      bs.whisker_hi = *it;  // largest sample inside the fence
      break;
    }
  }
  for (double v : sorted) {
    if (v < lo_fence || v > hi_fence) bs.outliers.push_back(v);
  }
  return bs;
}

json ExcessRiskReport::to_json() const {
  json j;
  j["sigma_y"] = sigma_y;
  j["equilibrium_label"] = equilibrium_label;
  j["j_noisy"] = j_noisy;
  j["j_noisy_stderr"] = j_noisy_stderr;
  j["j_clean"] = j_clean;
  j["j_clean_stderr"] = j_clean_stderr;
  j["r"] = r;
  j["r_rate"] = r_rate;
  j["n_episodes"] = n_episodes;
  j["n_blowups_noisy"] = n_blowups_noisy;
  j["n_blowups_clean"] = n_blowups_clean;
  j["crn"] = crn;
  j["conditional_rates"] = merl::to_json(conditional_rates);
  return j;
}

ExcessRiskReport ExcessRiskReport::from_json(const json& j) {
  ExcessRiskReport r;
  r.sigma_y = j.at("sigma_y").get<double>();
  r.equilibrium_label = j.at("equilibrium_label").get<std::string>();
  r.j_noisy = j.at("j_noisy").get<double>();
  r.j_noisy_stderr = j.at("j_noisy_stderr").get<double>();
  r.j_clean = j.at("j_clean").get<double>();
  r.j_clean_stderr = j.at("j_clean_stderr").get<double>();
  r.r = j.at("r").get<double>();
  r.r_rate = j.at("r_rate").get<double>();
  r.n_episodes = j.at("n_episodes").get<int>();
  r.n_blowups_noisy = j.value("n_blowups_noisy", 0);
  r.n_blowups_clean = j.value("n_blowups_clean", 0);
  r.crn = j.at("crn").get<bool>();
  r.conditional_rates = vector_from_json(j.at("conditional_rates"));
  return r;
}

}  // namespace merl
