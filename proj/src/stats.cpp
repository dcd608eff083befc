#include "dsde/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace dsde::stats {

MeanVar mean_var(std::span<const double> xs) {
  MeanVar r;
  r.n = xs.size();
  if (r.n == 0) return r;
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(r.n);
  double s2 = 0.0;
  for (double x : xs) s2 += (x - m) * (x - m);
  r.mean = m;
  r.var = r.n > 1 ? s2 / static_cast<double>(r.n - 1) : 0.0;
  r.std_error = r.n > 1 ? std::sqrt(r.var / static_cast<double>(r.n)) : 0.0;
  return r;
}

double log_sum_exp(std::span<const double> logs) {
  if (logs.empty()) return -std::numeric_limits<double>::infinity();
  double m = -std::numeric_limits<double>::infinity();
  for (double l : logs) m = std::max(m, l);
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double l : logs) acc += std::exp(l - m);
  return m + std::log(acc);
}

double effective_sample_size(std::span<const double> log_weights) {
  if (log_weights.empty()) return 0.0;
  const double ls = log_sum_exp(log_weights);
  std::vector<double> doubled(log_weights.size());
  for (std::size_t i = 0; i < log_weights.size(); ++i) doubled[i] = 2.0 * log_weights[i];
  const double ls2 = log_sum_exp(doubled);
  return std::exp(2.0 * ls - ls2);
}

std::vector<double> normalize_log_weights(std::span<const double> log_weights) {
  const double ls = log_sum_exp(log_weights);
  std::vector<double> w(log_weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i] - ls);
  return w;
}

MeanVar weighted_mean_unnormalized(std::span<const double> values,
                                   std::span<const double> log_weights) {
  if (values.size() != log_weights.size())
    throw std::invalid_argument("values/weights length mismatch");
  std::vector<double> wf(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    wf[i] = std::exp(log_weights[i]) * values[i];
  return mean_var(wf);
}

MeanVar weighted_mean_self_normalized(std::span<const double> values,
                                      std::span<const double> log_weights) {
  if (values.size() != log_weights.size())
    throw std::invalid_argument("values/weights length mismatch");
  const auto w = normalize_log_weights(log_weights);
  MeanVar r;
  r.n = values.size();
  double m = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) m += w[i] * values[i];
  r.mean = m;
  // Delta-method variance of the ratio estimator.
  double s2 = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    s2 += w[i] * w[i] * (values[i] - m) * (values[i] - m);
  r.var = s2 * static_cast<double>(r.n);
  r.std_error = std::sqrt(s2);
  return r;
}

namespace {

struct SortedWeighted {
  std::vector<double> xs;
  std::vector<double> cum;  // normalized cumulative weights
};

SortedWeighted sort_and_accumulate(std::vector<double> xs, std::vector<double> ws) {
  if (xs.size() != ws.size()) throw std::invalid_argument("sample/weight length mismatch");
  std::vector<std::size_t> idx(xs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  SortedWeighted out;
  out.xs.resize(xs.size());
  out.cum.resize(xs.size());
  double total = 0.0;
  for (double w : ws) total += w;
  double acc = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    acc += ws[idx[k]];
    out.xs[k] = xs[idx[k]];
    out.cum[k] = acc / total;
  }
  return out;
}

}  // namespace

double ks_distance_cdf(std::vector<double> xs, std::vector<double> weights,
                       const std::function<double(double)>& cdf) {
  if (weights.empty()) weights.assign(xs.size(), 1.0);
  const auto s = sort_and_accumulate(std::move(xs), std::move(weights));
  double d = 0.0;
  double prev = 0.0;
  for (std::size_t k = 0; k < s.xs.size(); ++k) {
    const double f = cdf(s.xs[k]);
    d = std::max(d, std::abs(f - prev));
    d = std::max(d, std::abs(s.cum[k] - f));
    prev = s.cum[k];
  }
  return d;
}

double ks_distance_two_sample(std::vector<double> xs, std::vector<double> wx,
                              std::vector<double> ys, std::vector<double> wy) {
  if (wx.empty()) wx.assign(xs.size(), 1.0);
  if (wy.empty()) wy.assign(ys.size(), 1.0);
  const auto a = sort_and_accumulate(std::move(xs), std::move(wx));
  const auto b = sort_and_accumulate(std::move(ys), std::move(wy));
  double d = 0.0;
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0;
  while (i < a.xs.size() || j < b.xs.size()) {
    const double xa = i < a.xs.size() ? a.xs[i] : std::numeric_limits<double>::infinity();
    const double xb = j < b.xs.size() ? b.xs[j] : std::numeric_limits<double>::infinity();
    if (xa <= xb) fa = a.cum[i++];
    if (xb <= xa) fb = b.cum[j++];
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

double batch_means_std_error(std::span<const double> xs, std::size_t n_batches) {
  if (xs.size() < 2 * n_batches) n_batches = std::max<std::size_t>(2, xs.size() / 2);
  const std::size_t len = xs.size() / n_batches;
  std::vector<double> means(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    double m = 0.0;
    for (std::size_t k = 0; k < len; ++k) m += xs[b * len + k];
    means[b] = m / static_cast<double>(len);
  }
  const auto mv = mean_var(means);
  return mv.std_error;
}

double regression_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("regression needs matching samples, n >= 2");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace dsde::stats
