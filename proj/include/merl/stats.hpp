// Small statistics kit: linear-interpolation quantiles, average-rank Spearman
// correlation, and a percentile bootstrap for its confidence interval.
#pragma once

#include <vector>

#include "merl/rng.hpp"

namespace merl {

// Quantile with linear interpolation between order statistics (the common
// spreadsheet/numpy default). quantile_sorted assumes ascending input.
double quantile_sorted(const std::vector<double>& sorted, double prob);
double quantile_linear(std::vector<double> samples, double prob);

double mean_of(const std::vector<double>& v);
// sample standard deviation / sqrt(n); 0 for n < 2
double std_err_of(const std::vector<double>& v);

// Ranks 1..n with ties replaced by the average of their positions.
std::vector<double> average_ranks(const std::vector<double>& v);

// Pearson correlation of the average ranks. Returns 0 when either input has
// zero rank variance (all values tied).
double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

struct BootstrapCi {
  double lo = 0.0;
  double hi = 0.0;
};

// Percentile bootstrap over paired resamples of (x, y).
BootstrapCi bootstrap_spearman_ci(const std::vector<double>& x, const std::vector<double>& y,
                                  int n_resamples, double confidence, RngStream& rng);

}  // namespace merl
