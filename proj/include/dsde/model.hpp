#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dsde/grid.hpp"
#include "dsde/rng.hpp"

namespace dsde::models {

using StateFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using MatrixFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;
using ScalarFn = std::function<double(const Eigen::VectorXd&)>;

struct McmcDiagnostics {
  double acceptance_rate = 0.0;
  double step_size = 0.0;
};

// A diffusion model: reference drift, diffusion matrix, reference measure
// and whatever analytic structure is known about it.
struct ModelSpec {
  std::string name;
  int d = 1;  // state dimension
  int m = 1;  // noise dimension

  StateFn drift;            // Z0
  MatrixFn sigma;           // d x m
  ScalarFn log_mu0;         // log reference density, normalized iff flag set
  bool log_mu0_normalized = false;

  // Exact sampler when the reference law is known in closed form.
  std::function<Eigen::VectorXd(rng::Philox&)> exact_sampler;
  // Metropolis fallback (gruschin).
  std::function<std::vector<Eigen::VectorXd>(std::size_t, std::uint64_t, McmcDiagnostics*)>
      mcmc_sampler;

  std::optional<double> lsi_kappa;
  std::optional<double> lsi_beta;
  std::optional<Eigen::MatrixXd> stationary_cov;  // of mu0, when known
  // Axis-aligned box holding essentially all mu0 mass, for quadrature on
  // models without Gaussian structure (lo, hi per axis).
  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> quad_box;

  bool has_sampler() const { return exact_sampler != nullptr || mcmc_sampler != nullptr; }
};

// Path-dependent perturbation Z: Segment -> R^m.
struct PathDrift {
  std::function<Eigen::VectorXd(const paths::Segment&)> apply;
  double tau = 0.0;  // delay window the drift reads
  std::optional<double> bound;
  std::optional<double> support_radius;
};

// Z0 = 1/2 (div(sigma sigma^*) - (sigma sigma^*) grad V), componentwise.
// div_a may be empty, in which case central differences with step
// 1e-5 (1 + |x|) are used.
StateFn gradient_drift(const StateFn& grad_V, const MatrixFn& sigma, StateFn div_a = nullptr);

struct OuParams {
  int d = 1;
};
struct HamiltonianParams {
  int d = 1;  // position dimension; state lives in R^{2d}
};
struct GruschinParams {
  int l = 1;
  int m_exp = 2;   // outer exponent m >= 2
  double c1 = 0.0;
  double c2 = 1.0; // required nonzero by the model family; V does not read it
  double c3 = 1.0;
  double c4 = 1.0;
};
struct GalerkinOuParams {
  std::vector<double> lambdas;  // spectrum, all > 0
  std::vector<double> qs;       // noise amplitudes per mode
};

ModelSpec build_ou(const OuParams& p);
ModelSpec build_hamiltonian(const HamiltonianParams& p);
ModelSpec build_gruschin(const GruschinParams& p);
ModelSpec build_galerkin_ou(const GalerkinOuParams& p);

// Solves A S + S A^T + Q = 0 for the stationary covariance of a linear SDE.
Eigen::MatrixXd lyapunov_stationary_cov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q);

// Drift combinators.
PathDrift constant_drift(const Eigen::VectorXd& c);
// Z(xi) = K xi(0).
PathDrift state_linear_drift(const Eigen::MatrixXd& K);
// Z(xi) = K xi(-tau).
PathDrift delay_linear_drift(const Eigen::MatrixXd& K, double tau);
// Z(xi) = int_{-tau}^0 h(xi(theta)) dtheta, trapezoid on the segment grid.
PathDrift integral_drift(const StateFn& h, double tau);
// Z 1_{|Z| <= n}.
PathDrift truncate_drift(const PathDrift& Z, double n);

}  // namespace dsde::models
