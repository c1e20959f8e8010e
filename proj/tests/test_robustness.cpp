#include <cmath>
#include <doctest.h>

#include "merl/robustness.hpp"
#include "test_util.hpp"

using namespace merl;
using merl_test::LinearEnv;
using merl_test::LinearEnvOpts;
using merl_test::TeleportEnv;

namespace {

PolicyParams small_policy(int dim, uint64_t seed) {
  RngStream rng(seed);
  PolicyParams p = PolicyParams::init(dim, dim, 8, rng);
  p.log_std = Eigen::VectorXd::Constant(dim, -1.0);
  return p;
}

}  // namespace

TEST_SUITE("robustness") {

TEST_CASE("teleporting dynamics give exactly zero loss and an undefined rate") {
  LinearEnvOpts opts;
  opts.dim = 2;
  opts.kappa = 0.0;
  TeleportEnv env(opts);
  const PolicyParams p = small_policy(2, 60);

  RngStream rng(61);
  const LossEstimate le = estimate_loss(p, env, 0.3, 32, 0.99, rng);
  CHECK(le.mean == 0.0);
  CHECK(le.std_err == 0.0);
  CHECK(le.per_episode == Eigen::VectorXd::Zero(32));
  CHECK(le.n_blowups == 0);

  RngStream rng2(62);
  CHECK_THROWS_AS((void)excess_risk(p, env, 0.3, 8, 0.99, rng2), ConfigError);
}

TEST_CASE("estimate_loss is reproducible from its crn base") {
  LinearEnvOpts opts;
  LinearEnv env(opts);
  const PolicyParams p = small_policy(2, 63);
  const LossEstimate a = estimate_loss(p, env, 0.2, 40, 0.99, /*crn_base=*/777);
  const LossEstimate b = estimate_loss(p, env, 0.2, 40, 0.99, /*crn_base=*/777);
  CHECK(a.mean == b.mean);
  CHECK(a.per_episode == b.per_episode);

  const LossEstimate c = estimate_loss(p, env, 0.2, 40, 0.99, /*crn_base=*/778);
  CHECK(c.mean != a.mean);
}

TEST_CASE("standard error shrinks like one over sqrt n") {
  LinearEnvOpts opts;
  LinearEnv env(opts);
  const PolicyParams p = small_policy(2, 64);
  const LossEstimate small = estimate_loss(p, env, 0.0, 200, 0.99, 5);
  const LossEstimate big = estimate_loss(p, env, 0.0, 3200, 0.99, 5);
  REQUIRE(small.std_err > 0.0);
  const double ratio = small.std_err / big.std_err;
  CHECK(ratio > 2.0);  // expect about 4
  CHECK(ratio < 8.0);

  // std_err is the sample standard deviation of per-episode losses over sqrt n
  const Eigen::VectorXd& pe = small.per_episode;
  const double mean = pe.mean();
  const double sd = std::sqrt((pe.array() - mean).square().sum() / (pe.size() - 1));
  CHECK(small.std_err == doctest::Approx(sd / std::sqrt(double(pe.size()))).epsilon(1e-12));
  CHECK(small.mean == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("zero observation noise gives bit-exact zero excess risk under crn") {
  LinearEnvOpts opts;
  LinearEnv env(opts);
  const PolicyParams p = small_policy(2, 65);
  RngStream rng(66);
  const ExcessRiskReport r = excess_risk(p, env, /*sigma_y=*/0.0, 24, 0.99, rng);
  CHECK(r.r == 0.0);  // bit-exact: both arms replay identical streams
  CHECK(r.r_rate == 0.0);
  CHECK(r.j_noisy == r.j_clean);
  CHECK(r.crn);
}

TEST_CASE("excess risk arithmetic is bitwise consistent") {
  LinearEnvOpts opts;
  LinearEnv env(opts);
  const PolicyParams p = small_policy(2, 67);
  RngStream rng(68);
  const ExcessRiskReport r = excess_risk(p, env, 0.4, 64, 0.99, rng);
  CHECK(r.r == r.j_noisy - r.j_clean);
  CHECK(r.r_rate == r.r / r.j_clean);
  CHECK(r.sigma_y == 0.4);
  CHECK(r.n_episodes == 64);
  CHECK(r.j_clean > 0.0);

  // same seed, same report
  RngStream rng2(68);
  const ExcessRiskReport r2 = excess_risk(p, env, 0.4, 64, 0.99, rng2);
  CHECK(r2.r == r.r);
  CHECK(r2.j_noisy == r.j_noisy);
}

TEST_CASE("rate is invariant to uniform cost rescaling") {
  LinearEnvOpts opts;
  opts.cost_scale = 1.0;
  LinearEnv env1(opts);
  opts.cost_scale = 37.5;
  LinearEnv env2(opts);
  const PolicyParams p = small_policy(2, 69);

  RngStream ra(70), rb(70);
  const ExcessRiskReport r1 = excess_risk(p, env1, 0.3, 48, 0.99, ra);
  const ExcessRiskReport r2 = excess_risk(p, env2, 0.3, 48, 0.99, rb);
  CHECK(r2.j_clean == doctest::Approx(37.5 * r1.j_clean).epsilon(1e-10));
  CHECK(r2.r == doctest::Approx(37.5 * r1.r).epsilon(1e-8));
  CHECK(r2.r_rate == doctest::Approx(r1.r_rate).epsilon(1e-8));
}

TEST_CASE("crn pairing cuts the variance of the difference") {
  LinearEnvOpts opts;
  LinearEnv env(opts);
  const PolicyParams p = small_policy(2, 71);

  // replicate the paired and unpaired estimators over independent seeds and
  // compare the spread of r
  std::vector<double> paired, unpaired;
  for (uint64_t s = 0; s < 24; ++s) {
    RngStream r1(100 + s), r2(200 + s);
    paired.push_back(excess_risk(p, env, 0.2, 16, 0.99, r1, true, true).r);
    unpaired.push_back(excess_risk(p, env, 0.2, 16, 0.99, r2, true, false).r);
  }
  auto sd = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= v.size();
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / (v.size() - 1));
  };
  CHECK(sd(paired) < 0.5 * sd(unpaired));
}

TEST_CASE("conditional rates vanish at zero noise and follow the definition") {
  LinearEnvOpts opts;
  LinearEnv env(opts);
  const PolicyParams p = small_policy(2, 72);

  std::vector<Eigen::VectorXd> x0s;
  RngStream xr(73);
  for (int i = 0; i < 6; ++i) x0s.push_back(xr.normal_vec(2));

  const auto zero = conditional_excess_risk(p, env, 0.0, x0s, 4, 0.99, 900);
  REQUIRE(zero.size() == 6);
  for (const auto& s : zero) {
    CHECK(s.diff == 0.0);
    CHECK(s.rate == 0.0);
  }

  const auto cond = conditional_excess_risk(p, env, 0.35, x0s, 4, 0.99, 900);
  REQUIRE(cond.size() == 6);
  for (int i = 0; i < 6; ++i) {
    CHECK(cond[i].x0_index == i);
    CHECK(cond[i].diff == cond[i].j_noisy - cond[i].j_clean);
    CHECK(cond[i].rate == cond[i].diff / cond[i].j_clean);
    CHECK(cond[i].j_clean > 0.0);
  }

  // deterministic in the crn base
  const auto again = conditional_excess_risk(p, env, 0.35, x0s, 4, 0.99, 900);
  for (int i = 0; i < 6; ++i) CHECK(again[i].diff == cond[i].diff);
}

TEST_CASE("conditional means recover the unconditional difference") {
  // law of total expectation: E_x0[J(x0, sigma) - J(x0, 0)] == R. Compare the
  // x0-averaged conditional estimate to the unconditional one at matched
  // episode counts within joint monte-carlo error.
  LinearEnvOpts opts;
  opts.sigma_e = 0.7;
  LinearEnv env(opts);
  const PolicyParams p = small_policy(2, 74);

  RngStream rng(75);
  const int n_x0 = 256;
  const auto cond = conditional_excess_risk(p, env, 0.3, n_x0, 2, 0.99, rng);
  double cond_mean = 0.0;
  for (const auto& s : cond) cond_mean += s.diff;
  cond_mean /= cond.size();
  double cond_var = 0.0;
  for (const auto& s : cond) cond_var += (s.diff - cond_mean) * (s.diff - cond_mean);
  const double cond_se = std::sqrt(cond_var / (cond.size() - 1) / cond.size());

  RngStream rng2(76);
  const ExcessRiskReport uncond = excess_risk(p, env, 0.3, 1024, 0.99, rng2);
  const double uncond_se = std::hypot(uncond.j_noisy_stderr, uncond.j_clean_stderr);

  CHECK(std::abs(cond_mean - uncond.r) < 4.0 * std::hypot(cond_se, uncond_se) + 1e-12);
}

TEST_CASE("boxplot stats reproduce the classic five numbers") {
  const BoxplotStats b = boxplot_stats({5.0, 3.0, 1.0, 2.0, 4.0});
  CHECK(b.q1 == 2.0);
  CHECK(b.median == 3.0);
  CHECK(b.q3 == 4.0);
  CHECK(b.whisker_lo == 1.0);
  CHECK(b.whisker_hi == 5.0);
  CHECK(b.outliers.empty());
}

TEST_CASE("boxplot flags points beyond 1.5 iqr") {
  std::vector<double> v{1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 40.0};
  const BoxplotStats b = boxplot_stats(v);
  // type-7 quartiles of 9 points: q1 = 3, q3 = 7, iqr = 4, fence = 13
  CHECK(b.q1 == 3.0);
  CHECK(b.q3 == 7.0);
  CHECK(b.whisker_hi == 8.0);
  CHECK(b.whisker_lo == 1.0);
  REQUIRE(b.outliers.size() == 1);
  CHECK(b.outliers[0] == 40.0);
}

TEST_CASE("boxplot handles degenerate and tiny inputs") {
  const BoxplotStats b = boxplot_stats({2.0, 2.0, 2.0, 2.0, 2.0});
  CHECK(b.q1 == 2.0);
  CHECK(b.q3 == 2.0);
  CHECK(b.whisker_lo == 2.0);
  CHECK(b.whisker_hi == 2.0);
  CHECK(b.outliers.empty());
  CHECK_THROWS_AS(boxplot_stats({1.0, 2.0, 3.0, 4.0}), std::logic_error);
}

TEST_CASE("excess risk report round trips as json") {
  ExcessRiskReport r;
  r.sigma_y = 0.5;
  r.equilibrium_label = "C+";
  r.j_noisy = 3.25;
  r.j_noisy_stderr = 0.01;
  r.j_clean = 2.5;
  r.j_clean_stderr = 0.02;
  r.r = 0.75;
  r.r_rate = 0.3;
  r.n_episodes = 128;
  r.n_blowups_noisy = 2;
  r.n_blowups_clean = 1;
  r.crn = true;
  r.conditional_rates = Eigen::Vector3d(0.1, 0.2, 0.3);
  const ExcessRiskReport back = ExcessRiskReport::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
  CHECK(back.sigma_y == r.sigma_y);
  CHECK(back.equilibrium_label == r.equilibrium_label);
  CHECK(back.r_rate == r.r_rate);
  CHECK(back.conditional_rates == r.conditional_rates);
  CHECK(back.n_blowups_noisy == 2);
}

}  // TEST_SUITE
