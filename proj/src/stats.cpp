#include "merl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace merl {

double quantile_sorted(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) throw std::logic_error("quantile of empty sample");
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = prob * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double quantile_linear(std::vector<double> samples, double prob) {
  std::sort(samples.begin(), samples.end());
  return quantile_sorted(samples, prob);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_err_of(const std::vector<double>& v) {
  const std::size_t n = v.size();
  if (n < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // ranks are 1-based
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::logic_error("spearman_rho: size mismatch");
  if (x.size() < 2) throw std::logic_error("spearman_rho: need >= 2 pairs");
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const double mx = mean_of(rx), my = mean_of(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mx, dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

BootstrapCi bootstrap_spearman_ci(const std::vector<double>& x, const std::vector<double>& y,
                                  int n_resamples, double confidence, RngStream& rng) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::logic_error("bootstrap_spearman_ci: need >= 2 pairs of equal length");
  }
  if (n_resamples < 2 || confidence <= 0.0 || confidence >= 1.0) {
    throw std::logic_error("bootstrap_spearman_ci: bad resample count or confidence");
  }
  const std::size_t n = x.size();
  std::vector<double> rhos(static_cast<std::size_t>(n_resamples));
  std::vector<double> bx(n), by(n);
  for (int r = 0; r < n_resamples; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = rng.index(n);
      bx[i] = x[k];
      by[i] = y[k];
    }
    rhos[static_cast<std::size_t>(r)] = spearman_rho(bx, by);
  }
  std::sort(rhos.begin(), rhos.end());
  const double tail = 0.5 * (1.0 - confidence);
  return {quantile_sorted(rhos, tail), quantile_sorted(rhos, 1.0 - tail)};
}

}  // namespace merl
