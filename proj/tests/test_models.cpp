#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "dsde/model.hpp"
#include "dsde/rng.hpp"
#include "dsde/simulate.hpp"
#include "dsde/stats.hpp"

using namespace dsde;

namespace {

Eigen::VectorXd scalar(double v) {
  Eigen::VectorXd x(1);
  x(0) = v;
  return x;
}

// Mean/covariance of exact-sampler draws checked against analytic values
// within 4 standard errors.
void check_gaussian_sampler(const models::ModelSpec& model, const Eigen::MatrixXd& cov,
                            std::size_t n = 100000) {
  rng::Philox gen(99, 1);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(model.d);
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(model.d, model.d);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd x = model.exact_sampler(gen);
    mean += x;
    m2 += x * x.transpose();
  }
  mean /= static_cast<double>(n);
  m2 /= static_cast<double>(n);
  for (int i = 0; i < model.d; ++i) {
    const double se_mean = std::sqrt(cov(i, i) / static_cast<double>(n));
    CHECK(std::abs(mean(i)) <= 4.0 * se_mean);
    for (int j = 0; j < model.d; ++j) {
      // Var of x_i x_j for a Gaussian: cov_ii cov_jj + cov_ij^2.
      const double se = std::sqrt((cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) /
                                  static_cast<double>(n));
      CHECK(std::abs(m2(i, j) - cov(i, j)) <= 4.0 * se + 1e-12);
    }
  }
}

}  // namespace

TEST_CASE("gradient drift: sigma = sqrt(2) I with quadratic potential gives -x") {
  const auto sigma = [](const Eigen::VectorXd& x) {
    return Eigen::MatrixXd(std::sqrt(2.0) * Eigen::MatrixXd::Identity(x.size(), x.size()));
  };
  const auto grad_V = [](const Eigen::VectorXd& x) { return x; };
  const auto z0 = models::gradient_drift(grad_V, sigma);
  for (int k = 0; k < 100; ++k) {
    const Eigen::VectorXd x = scalar(-5.0 + 0.1 * k);
    CHECK(z0(x)(0) == doctest::Approx(-x(0)).epsilon(1e-9));
  }
}

TEST_CASE("gradient drift: constant potential gives zero drift") {
  const auto sigma = [](const Eigen::VectorXd& x) {
    return Eigen::MatrixXd(Eigen::MatrixXd::Identity(x.size(), x.size()));
  };
  const auto grad_V = [](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(Eigen::VectorXd::Zero(x.size()));
  };
  const auto z0 = models::gradient_drift(grad_V, sigma);
  CHECK(z0(scalar(3.0)).norm() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("ou model: drift -x, sigma sqrt(2), standard normal reference") {
  const auto m = models::build_ou({.d = 1});
  CHECK(m.d == 1);
  CHECK(m.m == 1);
  CHECK(m.drift(scalar(2.0))(0) == doctest::Approx(-2.0));
  CHECK(m.sigma(scalar(0.0))(0, 0) == doctest::Approx(std::sqrt(2.0)));
  CHECK(*m.lsi_kappa == doctest::Approx(1.0));
  CHECK(m.log_mu0(scalar(0.0)) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));
  check_gaussian_sampler(m, Eigen::MatrixXd::Identity(1, 1));
}

TEST_CASE("galerkin model: single mode reduces to a linear scalar SDE") {
  const auto m = models::build_galerkin_ou({.lambdas = {2.0}, .qs = {1.0}});
  CHECK(m.drift(scalar(1.0))(0) == doctest::Approx(-2.0));
  CHECK(m.sigma(scalar(0.0))(0, 0) == doctest::Approx(1.0));
  CHECK((*m.stationary_cov)(0, 0) == doctest::Approx(0.25));
  CHECK(*m.lsi_kappa == doctest::Approx(0.5));  // 1 / lambda_min
  check_gaussian_sampler(m, Eigen::MatrixXd::Identity(1, 1) * 0.25);
}

TEST_CASE("galerkin model: earlier-mode marginals unchanged by adding modes") {
  const auto small = models::build_galerkin_ou({.lambdas = {1.0, 4.0}, .qs = {1.0, 0.5}});
  const auto big =
      models::build_galerkin_ou({.lambdas = {1.0, 4.0, 9.0, 16.0}, .qs = {1.0, 0.5, 0.3, 0.2}});
  for (int i = 0; i < 2; ++i)
    CHECK((*small.stationary_cov)(i, i) == doctest::Approx((*big.stationary_cov)(i, i)));
}

TEST_CASE("hamiltonian model: drift (y, -x-y), noise only on the velocity block") {
  const auto m = models::build_hamiltonian({.d = 1});
  CHECK(m.d == 2);
  CHECK(m.m == 1);
  Eigen::VectorXd x(2);
  x << 1.0, 2.0;
  const Eigen::VectorXd dr = m.drift(x);
  CHECK(dr(0) == doctest::Approx(2.0));
  CHECK(dr(1) == doctest::Approx(-3.0));
  const Eigen::MatrixXd sig = m.sigma(x);
  CHECK(sig(0, 0) == doctest::Approx(0.0));
  CHECK(sig(1, 0) == doctest::Approx(1.0));
  // Lyapunov stationary covariance is I/2 for this system.
  CHECK((*m.stationary_cov)(0, 0) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK((*m.stationary_cov)(1, 1) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK((*m.stationary_cov)(0, 1) == doctest::Approx(0.0).epsilon(1e-10));
  check_gaussian_sampler(m, *m.stationary_cov);
}

TEST_CASE("lyapunov solve matches a hand-computed diagonal case") {
  // dX = -a X dt + q dW -> stationary variance q^2 / (2a).
  Eigen::MatrixXd A(1, 1), Q(1, 1);
  A << -3.0;
  Q << 4.0;  // q^2
  CHECK(models::lyapunov_stationary_cov(A, Q)(0, 0) == doctest::Approx(4.0 / 6.0));
}

TEST_CASE("gruschin model: drift structure and metropolis sampler") {
  const auto m = models::build_gruschin({});
  CHECK(m.d == 2);
  Eigen::VectorXd x(2);
  x << 0.5, -0.3;
  // sigma = diag(1, x1^l).
  const Eigen::MatrixXd sig = m.sigma(x);
  CHECK(sig(0, 0) == doctest::Approx(1.0));
  CHECK(sig(1, 1) == doctest::Approx(0.5));
  CHECK(sig(0, 1) == doctest::Approx(0.0));
  CHECK_FALSE(m.lsi_kappa.has_value());

  // Parameter validation.
  CHECK_THROWS(models::build_gruschin({.l = 0}));
  CHECK_THROWS(models::build_gruschin({.m_exp = 1}));
  CHECK_THROWS(models::build_gruschin({.c2 = 0.0}));
  CHECK_THROWS(models::build_gruschin({.c4 = -1.0}));

  // Sampler moments against quadrature of the normalized density.
  models::McmcDiagnostics diag;
  const auto xs = m.mcmc_sampler(20000, 11, &diag);
  CHECK(diag.acceptance_rate > 0.1);
  CHECK(diag.acceptance_rate < 0.6);
  double mean1 = 0.0, m2_2 = 0.0;
  for (const auto& s : xs) {
    mean1 += s(0);
    m2_2 += s(1) * s(1);
  }
  mean1 /= static_cast<double>(xs.size());
  m2_2 /= static_cast<double>(xs.size());
  // Density is symmetric in x1 around c1 = 0 and in x2 around 0.
  CHECK(std::abs(mean1) < 0.1);
  CHECK(m2_2 > 0.05);
}

TEST_CASE("gruschin gradient drift kills the (sigma sigma*) x2 term near x1 = 0") {
  const auto m = models::build_gruschin({});
  Eigen::VectorXd x(2);
  x << 0.0, 1.0;
  // Z0_2 = -1/2 x1^{2l} dV/dx2 vanishes at x1 = 0.
  CHECK(m.drift(x)(1) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("constant and linear drift combinators") {
  const auto zc = models::constant_drift(scalar(0.7));
  CHECK(zc.apply(paths::Segment::single(scalar(123.0)))(0) == doctest::Approx(0.7));
  CHECK(*zc.bound == doctest::Approx(0.7));

  Eigen::MatrixXd K(1, 1);
  K << -0.5;
  const auto zl = models::state_linear_drift(K);
  CHECK(zl.apply(paths::Segment::single(scalar(2.0)))(0) == doctest::Approx(-1.0));

  const auto zd = models::delay_linear_drift(K, 1.0);
  CHECK(zd.tau == doctest::Approx(1.0));
  std::vector<Eigen::VectorXd> vals;
  for (int k = 0; k <= 4; ++k) vals.push_back(scalar(k));
  paths::Segment seg(1.0, 0.25, vals);
  CHECK(zd.apply(seg)(0) == doctest::Approx(-0.0));  // reads xi(-tau) = 0
}

TEST_CASE("integral drift: trapezoid on the segment grid") {
  // h constant c over tau = 2 -> Z = 2c.
  const auto zc = models::integral_drift(
      [](const Eigen::VectorXd&) { return Eigen::VectorXd::Constant(1, 3.0); }, 2.0);
  const auto seg = paths::Segment::constant(2.0, 0.5, scalar(0.0));
  CHECK(zc.apply(seg)(0) == doctest::Approx(6.0));

  // h(x) = x on a linear ramp 0 -> 1 over tau = 1: exact value 1/2.
  const auto zl = models::integral_drift([](const Eigen::VectorXd& x) { return x; }, 1.0);
  std::vector<Eigen::VectorXd> vals;
  for (int k = 0; k <= 4; ++k) vals.push_back(scalar(k / 4.0));
  CHECK(zl.apply(paths::Segment(1.0, 0.25, vals))(0) == doctest::Approx(0.5));

  CHECK_THROWS(models::integral_drift([](const Eigen::VectorXd& x) { return x; }, 0.0));
}

TEST_CASE("truncate drift: indicator cutoff and sup-norm metadata") {
  Eigen::MatrixXd K(1, 1);
  K << 1.0;
  const auto z = models::state_linear_drift(K);
  const auto zt = models::truncate_drift(z, 2.0);
  CHECK(*zt.bound == doctest::Approx(2.0));
  CHECK(zt.apply(paths::Segment::single(scalar(1.5)))(0) == doctest::Approx(1.5));
  CHECK(zt.apply(paths::Segment::single(scalar(2.5)))(0) == doctest::Approx(0.0));

  const auto z0 = models::truncate_drift(models::constant_drift(scalar(0.0)), 1.0);
  CHECK(z0.apply(paths::Segment::single(scalar(9.0)))(0) == doctest::Approx(0.0));
}
