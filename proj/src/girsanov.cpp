#include "dsde/girsanov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dsde/parallel.hpp"

namespace dsde::girsanov {

double log_weight(const sim::WeightedTrajectory& traj, double t) {
  const auto k = paths::aligned_index(t, 0.0, traj.path.grid.dt);
  if (k >= traj.log_weight_series.size())
    throw std::invalid_argument("log_weight: time beyond simulated horizon");
  return traj.log_weight_series[k];
}

WeightedEstimate weighted_expectation_arrays(std::span<const double> f_values,
                                             std::span<const double> log_weights,
                                             bool self_normalized) {
  if (f_values.size() != log_weights.size())
    throw std::invalid_argument("weighted_expectation: size mismatch");
  std::vector<double> fv, lw;
  fv.reserve(f_values.size());
  lw.reserve(f_values.size());
  std::size_t excluded = 0;
  for (std::size_t i = 0; i < f_values.size(); ++i) {
    if (std::isfinite(f_values[i]) && std::isfinite(log_weights[i])) {
      fv.push_back(f_values[i]);
      lw.push_back(log_weights[i]);
    } else {
      ++excluded;
    }
  }
  WeightedEstimate est;
  est.n_used = fv.size();
  est.n_excluded = excluded;
  if (fv.empty()) throw std::runtime_error("weighted_expectation: no usable trajectories");
  const stats::MeanVar mv = self_normalized ? stats::weighted_mean_self_normalized(fv, lw)
                                            : stats::weighted_mean_unnormalized(fv, lw);
  est.value = mv.mean;
  est.std_error = mv.std_error;
  est.ess = stats::effective_sample_size(lw);
  return est;
}

WeightedEstimate weighted_expectation(const sim::Batch& batch, const SegmentFn& f, double t,
                                      bool self_normalized) {
  if (batch.mode != sim::Mode::reference_with_weights)
    throw std::invalid_argument("weighted_expectation: batch was not run with weights");
  std::vector<double> fv(batch.trajs.size()), lw(batch.trajs.size());
  for (std::size_t i = 0; i < batch.trajs.size(); ++i) {
    const auto& traj = batch.trajs[i];
    if (traj.blown_up) {
      fv[i] = std::numeric_limits<double>::quiet_NaN();
      lw[i] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    fv[i] = f(traj.segment(t));
    lw[i] = log_weight(traj, t);
  }
  return weighted_expectation_arrays(fv, lw, self_normalized);
}

MartingaleReport martingale_check(const sim::Batch& batch, const std::vector<double>& times) {
  if (batch.mode != sim::Mode::reference_with_weights)
    throw std::invalid_argument("martingale_check: batch was not run with weights");
  MartingaleReport rep;
  rep.times = times;
  rep.pass = true;
  for (double t : times) {
    std::vector<double> lw;
    lw.reserve(batch.trajs.size());
    for (const auto& traj : batch.trajs) {
      if (traj.blown_up) continue;
      lw.push_back(log_weight(traj, t));
    }
    if (lw.empty()) throw std::runtime_error("martingale_check: no usable trajectories");
    std::vector<double> w(lw.size());
    for (std::size_t i = 0; i < lw.size(); ++i) w[i] = std::exp(lw[i]);
    const stats::MeanVar mv = stats::mean_var(w);
    const double z = mv.std_error > 0.0 ? (mv.mean - 1.0) / mv.std_error : 0.0;
    const double ess = stats::effective_sample_size(lw);
    rep.mean_weight.push_back(mv.mean);
    rep.std_error.push_back(mv.std_error);
    rep.z_score.push_back(z);
    rep.ess.push_back(ess);
    if (std::abs(z) > 3.0) rep.pass = false;
    if (ess < 0.01 * static_cast<double>(lw.size())) rep.low_ess_flag = true;
  }
  return rep;
}

IntegrabilityReport integrability_diagnostic(const sim::Batch& batch, double threshold) {
  IntegrabilityReport rep;
  rep.threshold = threshold;
  std::vector<double> totals;
  totals.reserve(batch.trajs.size());
  for (const auto& traj : batch.trajs) {
    if (traj.z_values.empty()) continue;
    double s = 0.0;
    for (const auto& z : traj.z_values) s += z.squaredNorm() * batch.dt;
    totals.push_back(s);
  }
  if (totals.empty()) throw std::invalid_argument("integrability_diagnostic: no drift evaluations");
  rep.n = totals.size();
  std::sort(totals.begin(), totals.end());
  rep.max = totals.back();
  double sum = 0.0;
  std::size_t exceeding = 0;
  for (double s : totals) {
    sum += s;
    if (s > threshold) ++exceeding;
  }
  rep.mean = sum / static_cast<double>(totals.size());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(totals.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, totals.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return totals[lo] * (1.0 - frac) + totals[hi] * frac;
  };
  rep.q50 = quantile(0.5);
  rep.q90 = quantile(0.9);
  rep.q99 = quantile(0.99);
  rep.frac_exceeding = static_cast<double>(exceeding) / static_cast<double>(totals.size());
  return rep;
}

std::vector<WeightedEstimate> weighted_functionals(const models::ModelSpec& model,
                                                   const models::PathDrift& Z,
                                                   const std::vector<paths::Segment>& inits,
                                                   const sim::SimConfig& cfg, double t,
                                                   const std::vector<SegmentFn>& fs,
                                                   bool self_normalized) {
  sim::SimConfig c = cfg;
  c.mode = sim::Mode::reference_with_weights;
  const std::size_t nf = fs.size();
  std::vector<std::vector<double>> fv(nf, std::vector<double>(c.n_traj));
  std::vector<double> lw(c.n_traj);
  sim::simulate_each(model, &Z, inits, c, [&](std::size_t i, const sim::WeightedTrajectory& traj) {
    if (traj.blown_up) {
      for (std::size_t j = 0; j < nf; ++j) fv[j][i] = std::numeric_limits<double>::quiet_NaN();
      lw[i] = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    const paths::Segment seg = traj.segment(t);
    for (std::size_t j = 0; j < nf; ++j) fv[j][i] = fs[j](seg);
    lw[i] = log_weight(traj, t);
  });
  std::vector<WeightedEstimate> out;
  out.reserve(nf);
  for (std::size_t j = 0; j < nf; ++j)
    out.push_back(weighted_expectation_arrays(fv[j], lw, self_normalized));
  return out;
}

std::vector<stats::MeanVar> direct_functionals(const models::ModelSpec& model,
                                               const models::PathDrift& Z,
                                               const std::vector<paths::Segment>& inits,
                                               const sim::SimConfig& cfg, double t,
                                               const std::vector<SegmentFn>& fs) {
  sim::SimConfig c = cfg;
  c.mode = sim::Mode::perturbed_direct;
  const std::size_t nf = fs.size();
  std::vector<std::vector<double>> fv(nf, std::vector<double>(c.n_traj));
  sim::simulate_each(model, &Z, inits, c, [&](std::size_t i, const sim::WeightedTrajectory& traj) {
    const paths::Segment seg = traj.segment(t);
    for (std::size_t j = 0; j < nf; ++j)
      fv[j][i] = traj.blown_up ? std::numeric_limits<double>::quiet_NaN() : fs[j](seg);
  });
  std::vector<stats::MeanVar> out;
  out.reserve(nf);
  for (std::size_t j = 0; j < nf; ++j) {
    std::vector<double> clean;
    clean.reserve(fv[j].size());
    for (double v : fv[j])
      if (std::isfinite(v)) clean.push_back(v);
    if (clean.empty()) throw std::runtime_error("direct_functionals: all trajectories blew up");
    out.push_back(stats::mean_var(clean));
  }
  return out;
}

}  // namespace dsde::girsanov
