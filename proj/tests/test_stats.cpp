#include <cmath>
#include <doctest.h>

#include "merl/stats.hpp"

using namespace merl;

namespace {

// O(n^2) counting definition of average ranks, as an independent oracle:
// rank_i = 1 + #{j : v_j < v_i} + #{j != i : v_j == v_i} / 2
std::vector<double> ranks_by_counting(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    int less = 0, equal = 0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (v[j] < v[i]) ++less;
      else if (v[j] == v[i] && j != i) ++equal;
    }
    r[i] = 1.0 + less + equal / 2.0;
  }
  return r;
}

}  // namespace

TEST_SUITE("stats") {

TEST_CASE("quantiles interpolate linearly") {
  const std::vector<double> v{1, 2, 3, 4, 5};
  CHECK(quantile_sorted(v, 0.0) == 1.0);
  CHECK(quantile_sorted(v, 1.0) == 5.0);
  CHECK(quantile_sorted(v, 0.5) == 3.0);
  CHECK(quantile_sorted(v, 0.25) == 2.0);
  CHECK(quantile_sorted(v, 0.125) == doctest::Approx(1.5));
  CHECK(quantile_linear({5, 1, 3, 2, 4}, 0.5) == 3.0);
  CHECK_THROWS(quantile_sorted({}, 0.5));
}

TEST_CASE("mean and standard error") {
  CHECK(mean_of({1, 2, 3, 4}) == doctest::Approx(2.5));
  // sample sd of {1,2,3,4} is sqrt(5/3)
  CHECK(std_err_of({1, 2, 3, 4}) == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
  CHECK(std_err_of({7}) == 0.0);
}

TEST_CASE("average ranks handle ties") {
  const std::vector<double> v{10, 20, 20, 30};
  const std::vector<double> want{1, 2.5, 2.5, 4};
  CHECK(average_ranks(v) == want);
}

TEST_CASE("average ranks match the counting oracle on random data") {
  RngStream rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> v(40);
    // coarse grid forces plenty of ties
    for (auto& x : v) x = std::floor(rng.uniform() * 8.0);
    CHECK(average_ranks(v) == ranks_by_counting(v));
  }
}

TEST_CASE("spearman is +-1 on monotone data") {
  const std::vector<double> x{1, 2, 3, 4, 5, 6};
  const std::vector<double> up{2, 7, 9, 20, 21, 30};
  std::vector<double> down(up.rbegin(), up.rend());
  CHECK(spearman_rho(x, up) == doctest::Approx(1.0));
  CHECK(spearman_rho(x, down) == doctest::Approx(-1.0));
}

TEST_CASE("spearman is 0 when an input is constant") {
  CHECK(spearman_rho({1, 2, 3}, {5, 5, 5}) == 0.0);
}

TEST_CASE("spearman rejects bad sizes") {
  CHECK_THROWS_AS(spearman_rho({1, 2, 3}, {1, 2}), std::logic_error);
  CHECK_THROWS_AS(spearman_rho({1}, {1}), std::logic_error);
}

TEST_CASE("spearman is invariant under monotone transforms") {
  RngStream rng(17);
  std::vector<double> x(30), y(30);
  for (int i = 0; i < 30; ++i) {
    x[i] = rng.normal();
    y[i] = rng.normal();
  }
  const double rho = spearman_rho(x, y);
  std::vector<double> ex(30), cy(30);
  for (int i = 0; i < 30; ++i) {
    ex[i] = std::exp(x[i]);          // strictly increasing
    cy[i] = y[i] * y[i] * y[i] + 2;  // strictly increasing
  }
  CHECK(spearman_rho(ex, cy) == doctest::Approx(rho));
}

TEST_CASE("bootstrap interval is deterministic and brackets a perfect rho") {
  const std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8};
  const std::vector<double> y{10, 20, 30, 40, 50, 60, 70, 80};
  RngStream r1(3), r2(3);
  const BootstrapCi a = bootstrap_spearman_ci(x, y, 200, 0.9, r1);
  const BootstrapCi b = bootstrap_spearman_ci(x, y, 200, 0.9, r2);
  CHECK(a.lo == b.lo);
  CHECK(a.hi == b.hi);
  // every resample of perfectly monotone pairs is still monotone
  CHECK(a.lo == doctest::Approx(1.0));
  CHECK(a.hi == doctest::Approx(1.0));
}

TEST_CASE("bootstrap interval brackets the point estimate on noisy data") {
  RngStream rng(23);
  std::vector<double> x(20), y(20);
  for (int i = 0; i < 20; ++i) {
    x[i] = rng.normal();
    y[i] = 0.8 * x[i] + 0.4 * rng.normal();
  }
  const double rho = spearman_rho(x, y);
  RngStream br(5);
  const BootstrapCi ci = bootstrap_spearman_ci(x, y, 500, 0.9, br);
  CHECK(ci.lo <= rho);
  CHECK(rho <= ci.hi);
  CHECK(ci.lo < ci.hi);
}

}  // TEST_SUITE
