#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dsde/model.hpp"

namespace dsde::ineq {

struct BoundReport {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool precondition_ok = true;
  bool pass = false;
  double slack = 0.0;  // rhs - lhs
  std::vector<std::pair<std::string, double>> inputs;
};

// Smallest lambda > kappa with (1 + sqrt(1 + 8 lambda / tau)) *
// (1 - sqrt(kappa / lambda)) >= 16; the condition is monotone in lambda,
// solved by bisection to 1e-10. tau = 0 returns kappa.
double lambda_kappa_tau(double kappa, double tau);

// q_lambda = 2 sqrt(lambda) / (s + sqrt(s^2 - 16 sqrt(lambda) s / (1 +
// sqrt(1 + 8 lambda / tau)))) with s = sqrt(lambda) - sqrt(kappa); defined
// for lambda >= lambda_kappa_tau (discriminant nonnegative).
double q_lambda(double lambda, double kappa, double tau);

struct EntBoundResult {
  double value = 0.0;
  bool precondition_ok = false;  // requires p0 > 1 and 2 lambda (p0-1) > (3 p0-1)(t0+tau)
};

// Upper bound on the relative entropy of the constructed invariant measure:
// ((t0+tau)(3 p0 - 1) log_mgf + 4 lambda p0 log_c0) /
// (2 lambda (p0 - 1) - (3 p0 - 1)(t0 + tau)).
EntBoundResult ent_bound(double t0, double tau, double p0, double lambda, double log_mgf,
                         double log_c0);

// Right sides of the two Sobolev-type density estimates:
// (bound_sqrt, bound_log) = ((log_mgf + beta) / (lambda - kappa), 4 mean_Z2).
std::pair<double, double> si_bounds(double lambda, double kappa, double beta, double log_mgf,
                                    double mean_Z2);

// Nelson's critical hypercontractivity exponent (1 + e^{2 t0}) / 2.
double nelson_p0(double t0);

struct TestFunction {
  std::string name;
  models::ScalarFn f;
  models::StateFn grad;  // analytic gradient of f
};

// e^{a . x / 2} for several directions a, plus low Hermite polynomials.
std::vector<TestFunction> exponential_family(int d);
// Polynomial family suited to the degenerate 2-d diffusion (no growth
// faster than the potential tails).
std::vector<TestFunction> polynomial_family_2d();

struct QuadratureSpec {
  int gh_order = 64;     // per axis, Gaussian reference measures
  int box_nodes = 257;   // per axis, trapezoid on the model's quad box
};

struct LsiResult {
  std::vector<BoundReport> reports;
  double kappa_hat = 0.0;  // sup over the family of entropy / Dirichlet form
};

// Log-Sobolev check mu0(f^2 log f^2) <= kappa mu0(|sigma^* grad f|^2) + beta
// for each normalized family member (beta = 0 scan; model kappa used for
// pass/fail when known, else the empirical kappa_hat).
LsiResult lsi_test(const models::ModelSpec& model, const std::vector<TestFunction>& family,
                   const QuadratureSpec& quad = {});

struct HyperNormParams {
  double t0 = 0.5;
  double p0 = 1.0;          // target norm is L^2 -> L^{2 p0}
  std::size_t n_mc = 4096;  // Monte Carlo fallback when no exact semigroup
  std::uint64_t seed = 0;
  QuadratureSpec quad = {};
};

// Lower bound on ||P_t0||_{L^2(mu0) -> L^{2 p0}(mu0)}: max over the family
// of ||P_t0 f||_{2 p0} / ||f||_2. The 1-d linear-Gaussian semigroup is
// evaluated exactly (P_t f(x) = E f(x e^{-t} + sqrt(1 - e^{-2t}) Z)),
// everything else by simulation.
double hyper_norm(const models::ModelSpec& model, const std::vector<TestFunction>& family,
                  const HyperNormParams& params);

struct HarnackParams {
  double p = 2.0;
  double t = 1.0;
  std::optional<double> C;  // scanned over a log-grid when absent
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> point_pairs;
  std::size_t n_mc = 20000;
  std::uint64_t seed = 0;
  int threads = 1;
};

// Harnack inequality (P_t f(x))^p <= e^{Phi_p(t,x,y)} P_t f^p (y) for
// nonnegative f; Phi_p = C p |x-y|^2 / ((p-1) t), except the kinetic
// two-block model which uses C |x-y|^2 / min(1, t^3). PASS at 3 combined
// standard errors.
std::vector<BoundReport> harnack_check(const models::ModelSpec& model,
                                       const std::vector<TestFunction>& family,
                                       const HarnackParams& params);

}  // namespace dsde::ineq
