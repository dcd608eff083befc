#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace dsde::stats {

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;       // unbiased sample variance
  double std_error = 0.0; // of the mean
  std::size_t n = 0;
};

MeanVar mean_var(std::span<const double> xs);

double log_sum_exp(std::span<const double> logs);

// ESS of importance weights given in log space: (sum w)^2 / sum w^2.
double effective_sample_size(std::span<const double> log_weights);

// Normalized weights from log weights (sum to 1 exactly up to fp rounding).
std::vector<double> normalize_log_weights(std::span<const double> log_weights);

// Weighted mean/std-error of values under unnormalized weights w_i = exp(lw_i),
// estimating E[w f] by sum w_i f_i / n (the unnormalized Girsanov form).
MeanVar weighted_mean_unnormalized(std::span<const double> values,
                                   std::span<const double> log_weights);

// Self-normalized variant: sum w_i f_i / sum w_i.
MeanVar weighted_mean_self_normalized(std::span<const double> values,
                                      std::span<const double> log_weights);

// Kolmogorov-Smirnov distance between a weighted sample and an analytic CDF.
double ks_distance_cdf(std::vector<double> xs, std::vector<double> weights,
                       const std::function<double(double)>& cdf);

// KS distance between two weighted samples.
double ks_distance_two_sample(std::vector<double> xs, std::vector<double> wx,
                              std::vector<double> ys, std::vector<double> wy);

// Standard error of the mean of a correlated series via batch means.
double batch_means_std_error(std::span<const double> xs, std::size_t n_batches = 64);

// Least-squares slope of y against x.
double regression_slope(std::span<const double> x, std::span<const double> y);

}  // namespace dsde::stats
