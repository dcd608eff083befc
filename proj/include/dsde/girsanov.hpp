#pragma once

#include <functional>
#include <vector>

#include "dsde/simulate.hpp"
#include "dsde/stats.hpp"

namespace dsde::girsanov {

struct WeightedEstimate {
  double value = 0.0;
  double std_error = 0.0;
  double ess = 0.0;
  std::size_t n_used = 0;
  std::size_t n_excluded = 0;  // blown-up or non-finite-weight trajectories
};

using SegmentFn = std::function<double(const paths::Segment&)>;

// log R(t) read from the recorded series; t must be a grid node.
double log_weight(const sim::WeightedTrajectory& traj, double t);

// Monte Carlo estimate of (S_t^Z f)(xi) = E[f(X_t) R(t)] over a batch in
// reference-with-weights mode. Unnormalized by default; the self-normalized
// variant (sum w f / sum w) is a variance-reduction option.
WeightedEstimate weighted_expectation(const sim::Batch& batch, const SegmentFn& f, double t,
                                      bool self_normalized = false);

// Same estimator from pre-extracted per-trajectory arrays; shared by the
// streaming pipelines.
WeightedEstimate weighted_expectation_arrays(std::span<const double> f_values,
                                             std::span<const double> log_weights,
                                             bool self_normalized = false);

struct MartingaleReport {
  std::vector<double> times;
  std::vector<double> mean_weight;
  std::vector<double> std_error;
  std::vector<double> z_score;
  std::vector<double> ess;
  bool pass = false;          // |z| <= 3 at every time
  bool low_ess_flag = false;  // diagnostic only; never turns pass off by itself
};

// E R(t) = 1 check at the given times.
MartingaleReport martingale_check(const sim::Batch& batch, const std::vector<double>& times);

struct IntegrabilityReport {
  double threshold = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double q50 = 0.0, q90 = 0.0, q99 = 0.0;
  double frac_exceeding = 0.0;
  std::size_t n = 0;
};

// Distribution of int_0^T |Z(X_s)|^2 ds per trajectory — the discrete proxy
// for square-integrability of the perturbing drift.
IntegrabilityReport integrability_diagnostic(const sim::Batch& batch, double threshold);

// Streaming weighted functionals: runs reference-with-weights trajectories
// and returns one estimate per test function evaluated on the time-t state
// segment. Memory stays O(n_traj), not O(n_traj * n_steps).
std::vector<WeightedEstimate> weighted_functionals(const models::ModelSpec& model,
                                                   const models::PathDrift& Z,
                                                   const std::vector<paths::Segment>& inits,
                                                   const sim::SimConfig& cfg, double t,
                                                   const std::vector<SegmentFn>& fs,
                                                   bool self_normalized = false);

// Plain-mean counterpart on perturbed-direct trajectories (the oracle side
// of the weak-uniqueness equivalence).
std::vector<stats::MeanVar> direct_functionals(const models::ModelSpec& model,
                                               const models::PathDrift& Z,
                                               const std::vector<paths::Segment>& inits,
                                               const sim::SimConfig& cfg, double t,
                                               const std::vector<SegmentFn>& fs);

}  // namespace dsde::girsanov
