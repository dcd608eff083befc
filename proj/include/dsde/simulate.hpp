#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "dsde/grid.hpp"
#include "dsde/model.hpp"

namespace dsde::sim {

enum class Mode { reference, perturbed_direct, reference_with_weights };

struct SimConfig {
  double dt = 0.01;
  double horizon = 1.0;
  std::size_t n_traj = 1;
  std::uint64_t seed = 0;
  Mode mode = Mode::reference;
  int threads = 1;
};

// One simulated trajectory with everything Girsanov reweighting needs:
// the path (including the initial window), the Brownian increments, the
// drift evaluations Z(X_t) on the reference path and the running log R(t).
struct WeightedTrajectory {
  paths::Path path;  // grid starts at -tau
  double tau = 0.0;
  std::vector<Eigen::VectorXd> dW;        // per step after time 0
  std::vector<Eigen::VectorXd> z_values;  // empty when Z absent
  std::vector<double> log_weight_series;  // per node from t = 0; [0] = 0
  bool blown_up = false;
  std::size_t blowup_step = 0;

  paths::Segment segment(double t) const { return paths::segment_at(path, t, tau); }
};

struct Batch {
  std::vector<WeightedTrajectory> trajs;
  double dt = 0.0;
  double tau = 0.0;
  Mode mode = Mode::reference;
  std::size_t n_blowups = 0;
};

using TrajectorySink = std::function<void(std::size_t, const WeightedTrajectory&)>;

// Euler-Maruyama over [0, horizon] from the given initial segments (one
// shared segment, or one per trajectory). Trajectory i always uses RNG
// stream (seed, i); the sink is invoked from worker threads and must only
// touch per-index state.
void simulate_each(const models::ModelSpec& model, const models::PathDrift* Z,
                   const std::vector<paths::Segment>& inits, const SimConfig& cfg,
                   const TrajectorySink& sink);

// Convenience wrapper that stores the whole batch. Use only at sizes where
// n_traj * n_steps paths fit comfortably in memory.
Batch simulate(const models::ModelSpec& model, const models::PathDrift* Z,
               const std::vector<paths::Segment>& inits, const SimConfig& cfg);

// n samples from the reference invariant measure mu0 (exact sampler when
// the model has one, Metropolis otherwise).
std::vector<Eigen::VectorXd> sample_mu0(const models::ModelSpec& model, std::size_t n,
                                        std::uint64_t seed,
                                        models::McmcDiagnostics* diag = nullptr);

// n samples from the path-space reference measure mu: X(0) ~ mu0 evolved
// under the reference dynamics for time tau, returned as segments.
std::vector<paths::Segment> sample_mu(const models::ModelSpec& model, std::size_t n, double tau,
                                      double dt, std::uint64_t seed, int threads = 1);

// Binary dump: little-endian 64-bit floats, row-major
// [trajectory][node][coordinate], plus a JSON sidecar giving the shape, dt,
// tau and seed.
void dump_trajectories(const Batch& batch, const std::string& bin_path,
                       const std::string& sidecar_path, std::uint64_t seed);

// Recomputes log R(t_k) from (z_values, dW); must match log_weight_series.
std::vector<double> recompute_log_weights(const WeightedTrajectory& traj, double dt);

}  // namespace dsde::sim
