#include <cmath>
#include <doctest.h>

#include "merl/policy.hpp"
#include "test_util.hpp"

using namespace merl;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

double log_prob_oracle(const PolicyParams& p, const Eigen::VectorXd& obs,
                       const Eigen::VectorXd& a) {
  const Eigen::VectorXd mu = forward_mean(p, obs);
  const Eigen::VectorXd sigma = p.sigma();
  double lp = -0.5 * p.act_dim() * kLog2Pi;
  for (int j = 0; j < p.act_dim(); ++j) {
    const double z = (a[j] - mu[j]) / sigma[j];
    lp -= p.log_std[j] + 0.5 * z * z;
  }
  return lp;
}

PolicyParams random_policy(int obs, int act, uint64_t seed) {
  RngStream rng(seed);
  PolicyParams p = PolicyParams::init(obs, act, 8, rng);
  p.log_std = 0.4 * rng.normal_vec(act);
  // nonzero biases exercise every gradient block
  p.mean.b_out = 0.2 * rng.normal_vec(act);
  return p;
}

}  // namespace

TEST_SUITE("policy") {

TEST_CASE("log_prob matches the diagonal Gaussian density") {
  const PolicyParams p = random_policy(3, 2, 10);
  RngStream rng(11);
  for (int k = 0; k < 5; ++k) {
    const Eigen::VectorXd obs = rng.normal_vec(3);
    const Eigen::VectorXd a = rng.normal_vec(2);
    CHECK(log_prob(p, obs, a) == doctest::Approx(log_prob_oracle(p, obs, a)).epsilon(1e-13));
  }
}

TEST_CASE("grad_log_prob matches central finite differences") {
  PolicyParams p = random_policy(3, 2, 12);
  RngStream rng(13);
  const Eigen::VectorXd obs = rng.normal_vec(3);
  const Eigen::VectorXd a = forward_mean(p, obs) + rng.normal_vec(2);

  PolicyGrad g = PolicyGrad::zeros_like(p);
  grad_log_prob(p, obs, a, g);
  Eigen::VectorXd analytic(g.param_count());
  g.to_flat(analytic.data());

  const int nm = p.mean_param_count();
  const int n = p.param_count();
  const double h = 1e-6;
  double max_rel = 0.0;
  for (int i = 0; i < n; ++i) {
    PolicyParams pp = p, pm = p;
    if (i < nm) {
      Eigen::VectorXd tp = p.mean_flat(), tm = p.mean_flat();
      tp[i] += h;
      tm[i] -= h;
      pp.set_mean_flat(tp);
      pm.set_mean_flat(tm);
    } else {
      pp.log_std[i - nm] += h;
      pm.log_std[i - nm] -= h;
    }
    const double fd = (log_prob(pp, obs, a) - log_prob(pm, obs, a)) / (2.0 * h);
    const double denom = std::max(1.0, std::abs(fd));
    max_rel = std::max(max_rel, std::abs(analytic[i] - fd) / denom);
  }
  CHECK(max_rel < 1e-6);
}

TEST_CASE("mean_jacobian_row_norms matches finite differences") {
  const PolicyParams p = random_policy(2, 3, 14);
  RngStream rng(15);
  const Eigen::VectorXd obs = rng.normal_vec(2);
  const Eigen::VectorXd analytic = mean_jacobian_row_norms(p, obs);

  const int nm = p.mean_param_count();
  const double h = 1e-6;
  Eigen::MatrixXd jac(3, nm);
  const Eigen::VectorXd theta = p.mean_flat();
  PolicyParams bumped = p;
  for (int i = 0; i < nm; ++i) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    bumped.set_mean_flat(tp);
    const Eigen::VectorXd mp = forward_mean(bumped, obs);
    bumped.set_mean_flat(tm);
    const Eigen::VectorXd mm = forward_mean(bumped, obs);
    jac.col(i) = (mp - mm) / (2.0 * h);
  }
  for (int j = 0; j < 3; ++j)
    CHECK(analytic[j] == doctest::Approx(jac.row(j).squaredNorm()).epsilon(1e-5));
}

TEST_CASE("entropy has the closed Gaussian form") {
  PolicyParams p = random_policy(2, 3, 16);
  const double expect = p.log_std.sum() + 0.5 * 3 * (1.0 + kLog2Pi);
  CHECK(entropy(p) == doctest::Approx(expect).epsilon(1e-14));
  // unit-variance special case: d/2 * (1 + log 2 pi)
  p.log_std.setZero();
  CHECK(entropy(p) == doctest::Approx(1.5 * (1.0 + kLog2Pi)).epsilon(1e-14));
}

TEST_CASE("sample_action has the right moments and reports its own density") {
  const PolicyParams p = random_policy(2, 2, 17);
  RngStream rng(18);
  const Eigen::VectorXd obs = rng.normal_vec(2);
  const Eigen::VectorXd mu = forward_mean(p, obs);
  const Eigen::VectorXd sigma = p.sigma();

  const int n = 40000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(2), sumsq = Eigen::VectorXd::Zero(2);
  for (int k = 0; k < n; ++k) {
    double lp = 0.0;
    const Eigen::VectorXd a = sample_action(p, obs, rng, &lp);
    if (k < 16) CHECK(lp == doctest::Approx(log_prob(p, obs, a)).epsilon(1e-12));
    sum += a;
    sumsq += (a - mu).cwiseAbs2();
  }
  for (int j = 0; j < 2; ++j) {
    CHECK(std::abs(sum[j] / n - mu[j]) < 5.0 * sigma[j] / std::sqrt(double(n)));
    const double var = sumsq[j] / n;
    CHECK(std::abs(var - sigma[j] * sigma[j]) <
          5.0 * sigma[j] * sigma[j] * std::sqrt(2.0 / n));
  }
}

TEST_CASE("kl_gaussian is zero between identical policies") {
  const PolicyParams p = random_policy(3, 2, 19);
  RngStream rng(20);
  for (int k = 0; k < 4; ++k)
    CHECK(kl_gaussian(p, p, rng.normal_vec(3)) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("kl_gaussian matches the diagonal closed form and is nonnegative") {
  const PolicyParams p = random_policy(3, 2, 21);
  PolicyParams q = random_policy(3, 2, 22);
  RngStream rng(23);
  const Eigen::VectorXd obs = rng.normal_vec(3);

  // kl_gaussian(p, q) = KL(q || p)
  const Eigen::VectorXd mp = forward_mean(p, obs), mq = forward_mean(q, obs);
  const Eigen::VectorXd sp = p.sigma(), sq = q.sigma();
  double expect = 0.0;
  for (int j = 0; j < 2; ++j) {
    expect += p.log_std[j] - q.log_std[j] +
              (sq[j] * sq[j] + (mq[j] - mp[j]) * (mq[j] - mp[j])) / (2.0 * sp[j] * sp[j]) - 0.5;
  }
  CHECK(kl_gaussian(p, q, obs) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(kl_gaussian(p, q, obs) >= 0.0);
  CHECK(kl_gaussian(q, p, obs) >= 0.0);
}

TEST_CASE("kl_gaussian agrees with a Monte Carlo estimate") {
  const PolicyParams p = random_policy(2, 2, 24);
  PolicyParams q = random_policy(2, 2, 25);
  RngStream rng(26);
  const Eigen::VectorXd obs = rng.normal_vec(2);

  const int n = 60000;
  double acc = 0.0, acc2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const Eigen::VectorXd a = sample_action(q, obs, rng);
    const double d = log_prob(q, obs, a) - log_prob(p, obs, a);
    acc += d;
    acc2 += d * d;
  }
  const double mc = acc / n;
  const double se = std::sqrt((acc2 / n - mc * mc) / n);
  CHECK(std::abs(kl_gaussian(p, q, obs) - mc) < 5.0 * se + 1e-9);
}

TEST_CASE("checkpoint save and load round trips bit-exactly") {
  merl_test::TempDir dir;
  const PolicyParams p = random_policy(3, 2, 27);
  const auto path = dir / "policy.json";
  p.save(path);
  const PolicyParams back = PolicyParams::load(path);
  CHECK(back.log_std == p.log_std);
  CHECK(back.mean.W1 == p.mean.W1);
  CHECK(back.mean.W2 == p.mean.W2);
  CHECK(back.mean.W_out == p.mean.W_out);
  CHECK(back.mean.b_out == p.mean.b_out);
  CHECK(forward_mean(back, Eigen::VectorXd::Ones(3)) ==
        forward_mean(p, Eigen::VectorXd::Ones(3)));
}

TEST_CASE("mean_flat round trips and drives the forward pass") {
  PolicyParams p = random_policy(2, 2, 28);
  const Eigen::VectorXd theta = p.mean_flat();
  CHECK(theta.size() == p.mean_param_count());

  PolicyParams q = random_policy(2, 2, 29);
  q.set_mean_flat(theta);
  CHECK(q.mean_flat() == theta);
  const Eigen::VectorXd obs = Eigen::VectorXd::Constant(2, 0.3);
  CHECK(forward_mean(q, obs) == forward_mean(p, obs));

  CHECK(p.param_count() == p.mean_param_count() + 2);
}

TEST_CASE("init draws log_std at zero") {
  RngStream rng(30);
  const PolicyParams p = PolicyParams::init(3, 2, 16, rng);
  CHECK(p.log_std.isZero());
  CHECK(p.obs_dim() == 3);
  CHECK(p.act_dim() == 2);
  CHECK(p.sigma() == Eigen::VectorXd::Ones(2));
}

}  // TEST_SUITE
