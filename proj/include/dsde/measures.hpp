#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "dsde/grid.hpp"
#include "dsde/model.hpp"
#include "dsde/stats.hpp"

namespace dsde::measures {

// Weighted atoms on path segments. Storage is chunked: each chunk holds one
// contiguous block of states (d x n_nodes) plus the anchor columns that are
// actual atoms, so overlapping segment windows share storage instead of
// being copied per atom.
class WeightedEmpiricalMeasure {
 public:
  struct Chunk {
    Eigen::MatrixXd states;             // d x n_nodes, column k = state at node k
    std::vector<std::size_t> anchors;   // column index of each atom's right endpoint
    std::vector<double> log_weights;    // one per anchor
  };

  WeightedEmpiricalMeasure(double tau, double dt) : tau_(tau), dt_(dt) {
    win_ = paths::Segment::n_nodes_for(tau, dt);
  }

  static WeightedEmpiricalMeasure from_segments(const std::vector<paths::Segment>& segs,
                                                std::vector<double> log_weights);
  // tau = 0 measure straight from a state matrix (d x n).
  static WeightedEmpiricalMeasure from_states(const Eigen::MatrixXd& states,
                                              std::vector<double> log_weights);

  void add_chunk(Chunk c);

  double tau() const { return tau_; }
  double dt() const { return dt_; }
  std::size_t size() const { return n_atoms_; }
  const std::vector<Chunk>& chunks() const { return chunks_; }

  // Materializes atom (chunk, local index) as a segment; for bulk work
  // prefer for_each which avoids the flat-index lookup.
  void for_each(const std::function<void(const paths::Segment&, double)>& fn) const;

  std::vector<double> all_log_weights() const;
  double ess() const;

  // Self-normalized weighted expectation of f over atoms.
  stats::MeanVar expect(const std::function<double(const paths::Segment&)>& f) const;

  // Same estimate, but the standard error treats each chunk (one
  // trajectory-block) as a single observation, so within-block time
  // correlation does not fake precision.
  stats::MeanVar chunked_expect(const std::function<double(const paths::Segment&)>& f) const;

  // nu_theta: atoms replaced by xi(theta), weights unchanged. theta must be
  // grid-aligned in [-tau, 0].
  WeightedEmpiricalMeasure marginal(double theta) const;

  // Values of coordinate `coord` at theta, paired with normalized weights.
  std::pair<std::vector<double>, std::vector<double>> coordinate_sample(int coord,
                                                                        double theta = 0.0) const;

  bool low_ess_flag = false;
  std::size_t n_blowups = 0;

 private:
  double tau_ = 0.0, dt_ = 1.0;
  std::size_t win_ = 1;
  std::vector<Chunk> chunks_;
  std::size_t n_atoms_ = 0;
};

struct CesaroParams {
  double block_length = 1.0;   // c; the averaging horizon is n_blocks * c
  std::size_t n_blocks = 10;
  std::size_t burn_blocks = 0; // leading blocks simulated but not recorded
  std::size_t n_traj = 1000;
  double dt = 0.01;
  std::uint64_t seed = 0;
  int threads = 1;
  // With resampling, the ensemble is systematically resampled by Girsanov
  // weight at each block boundary and weights restart from 1 — same target,
  // bounded weight variance. Without it, weights accumulate over the whole
  // horizon exactly as in the defining time average.
  bool resample = true;
  std::size_t record_stride = 1;  // record every k-th grid node as an atom
};

// Discrete Cesaro average nu_n = (1/cn) int_0^{cn} mu S_t^Z dt: trajectories
// start from the stationary path measure mu and every recorded node
// contributes one weighted segment atom.
WeightedEmpiricalMeasure cesaro_invariant(const models::ModelSpec& model,
                                          const models::PathDrift& Z, const CesaroParams& params);

struct GridSpec {
  int nodes_per_axis = 201;
  double pad_bandwidths = 4.0;  // extend each axis by this many bandwidths
};

struct DensityEstimate {
  std::vector<Eigen::VectorXd> axes;  // rectangular grid, one node vector per axis
  Eigen::VectorXd rho;                // row-major over the axes
  Eigen::VectorXd bandwidth;
  double mass_check = 0.0;            // int rho dmu0 over the grid
  bool flagged = false;               // mass_check outside [0.95, 1.05]
  int d = 1;

  std::size_t n_points() const { return static_cast<std::size_t>(rho.size()); }
};

// rho0 = (weighted Gaussian KDE of the atoms) / mu0-density on a grid
// covering the sample mass region. Bandwidth defaults to Silverman's rule
// with the effective (ESS) sample size.
DensityEstimate density_ratio(const WeightedEmpiricalMeasure& marg, const models::ModelSpec& model,
                              const GridSpec& grid = {},
                              std::optional<Eigen::VectorXd> bandwidth = std::nullopt,
                              int threads = 1);

// Quadrature of rho log rho against mu0 (>= 0 up to estimation error).
double relative_entropy(const DensityEstimate& rho, const models::ModelSpec& model);

struct ExpIntegrability {
  double value = 0.0;       // estimate of mu(e^{lambda |Z|^2})
  double log_value = 0.0;
  double max_exponent = 0.0;
  bool heavy_tail_flag = false;  // one sample dominates the log-sum-exp
};

// Monte Carlo mu(e^{lambda |Z|^2}) over segments drawn from mu.
ExpIntegrability exp_integrability(const std::vector<paths::Segment>& segments,
                                   const models::PathDrift& Z, double lambda);

// Quadrature of rho^p against mu0.
double lp_moment(const DensityEstimate& rho, const models::ModelSpec& model, double p);

enum class DirichletForm { sqrt, log, power };

// mu0(|sigma^* grad g(rho)|^2) with g = sqrt, log, or (.)^{p/2}; central
// differences on the estimate's grid, density floored at 1e-12.
double dirichlet_energy(const DensityEstimate& rho, const models::ModelSpec& model,
                        DirichletForm form, double p = 2.0);

}  // namespace dsde::measures
