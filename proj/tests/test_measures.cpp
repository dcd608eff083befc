#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "dsde/measures.hpp"
#include "dsde/model.hpp"
#include "dsde/simulate.hpp"
#include "dsde/stats.hpp"

using namespace dsde;

namespace {

Eigen::VectorXd scalar(double v) {
  Eigen::VectorXd x(1);
  x(0) = v;
  return x;
}

double normal_cdf(double x, double mean = 0.0, double sd = 1.0) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
}

// Exact mu0 sample as a tau=0 measure with unit weights.
measures::WeightedEmpiricalMeasure mu0_measure(const models::ModelSpec& m, std::size_t n,
                                               std::uint64_t seed) {
  const auto xs = sim::sample_mu0(m, n, seed);
  Eigen::MatrixXd states(m.d, static_cast<long>(n));
  for (std::size_t i = 0; i < n; ++i) states.col(static_cast<long>(i)) = xs[i];
  return measures::WeightedEmpiricalMeasure::from_states(states,
                                                         std::vector<double>(n, 0.0));
}

}  // namespace

TEST_CASE("measure bookkeeping: atoms, weights, marginal identity at tau=0") {
  Eigen::MatrixXd states(1, 3);
  states << 1.0, 2.0, 3.0;
  const auto m = measures::WeightedEmpiricalMeasure::from_states(states, {0.0, 0.0, std::log(2.0)});
  CHECK(m.size() == 3);
  CHECK(m.ess() == doctest::Approx(16.0 / 6.0));
  const auto marg = m.marginal(0.0);
  CHECK(marg.size() == 3);
  const auto mean = m.expect([](const paths::Segment& s) { return s.back()(0); });
  CHECK(mean.mean == doctest::Approx((1.0 + 2.0 + 6.0) / 4.0));
  CHECK_THROWS(m.marginal(-0.5));
  CHECK_THROWS(measures::WeightedEmpiricalMeasure::from_states(states, {0.0, 0.0}));
}

TEST_CASE("cesaro with Z = 0 reproduces the reference invariant law") {
  const auto model = models::build_ou({.d = 1});
  const auto z0 = models::constant_drift(scalar(0.0));
  measures::CesaroParams cp;
  cp.block_length = 1.0;
  cp.n_blocks = 10;
  cp.burn_blocks = 0;
  cp.n_traj = 1000;
  cp.dt = 0.01;
  cp.seed = 5;
  cp.threads = 4;
  const auto nu = measures::cesaro_invariant(model, z0, cp);
  CHECK(nu.size() == 1000 * 10 * 100);
  CHECK(nu.n_blowups == 0);
  auto [xs, ws] = nu.coordinate_sample(0);
  CHECK(stats::ks_distance_cdf(xs, ws, [](double x) { return normal_cdf(x); }) < 0.02);
}

TEST_CASE("cesaro with constant Z targets the shifted stationary law") {
  // Z = c/sqrt(2) makes the total drift -x + c; stationary law N(c, 1).
  const double c = 1.0;
  const auto model = models::build_ou({.d = 1});
  const auto z = models::constant_drift(scalar(c / std::sqrt(2.0)));
  measures::CesaroParams cp;
  cp.block_length = 1.0;
  cp.n_blocks = 12;
  cp.burn_blocks = 6;
  cp.n_traj = 2000;
  cp.dt = 0.01;
  cp.seed = 9;
  cp.threads = 4;
  const auto nu = measures::cesaro_invariant(model, z, cp);
  auto [xs, ws] = nu.coordinate_sample(0);
  CHECK(stats::ks_distance_cdf(xs, ws, [&](double x) { return normal_cdf(x, c); }) < 0.02);

  // Plain (non-resampled) mode targets the same law, with worse ESS.
  measures::CesaroParams plain = cp;
  plain.resample = false;
  plain.n_blocks = 6;
  plain.burn_blocks = 3;
  const auto nu2 = measures::cesaro_invariant(model, z, plain);
  auto [xs2, ws2] = nu2.coordinate_sample(0);
  CHECK(stats::ks_distance_cdf(xs2, ws2, [&](double x) { return normal_cdf(x, c); }) < 0.05);
  CHECK(nu2.ess() / static_cast<double>(nu2.size()) < nu.ess() / static_cast<double>(nu.size()));
}

TEST_CASE("density ratio of mu0 against itself is flat") {
  const auto model = models::build_ou({.d = 1});
  const auto m = mu0_measure(model, 100000, 13);
  const auto est = measures::density_ratio(m, model, {}, std::nullopt, 4);
  CHECK_FALSE(est.flagged);
  CHECK(est.mass_check == doctest::Approx(1.0).epsilon(0.05));
  // Max deviation from 1 on the central 95% region.
  for (long i = 0; i < est.rho.size(); ++i) {
    const double x = est.axes[0](i);
    if (std::abs(x) <= 1.96) CHECK(std::abs(est.rho(i) - 1.0) < 0.1);
  }
}

TEST_CASE("density ratio input guards") {
  const auto model = models::build_ou({.d = 1});
  const auto small = mu0_measure(model, 50, 17);
  CHECK_THROWS(measures::density_ratio(small, model));
  const auto m = mu0_measure(model, 1000, 17);
  Eigen::VectorXd bad(1);
  bad << -0.1;
  CHECK_THROWS(measures::density_ratio(m, model, {}, bad));
  // Degenerate weights error out rather than returning NaN.
  Eigen::MatrixXd states(1, 200);
  for (int i = 0; i < 200; ++i) states(0, i) = i * 0.01;
  std::vector<double> lw(200, -std::numeric_limits<double>::infinity());
  const auto degenerate = measures::WeightedEmpiricalMeasure::from_states(states, lw);
  CHECK_THROWS(measures::density_ratio(degenerate, model));
}

TEST_CASE("shifted gaussian: density ratio, entropy, lp moment, dirichlet energies") {
  // Atoms drawn exactly from N(sqrt(2) c, 1) with c = 0.5 against
  // mu0 = N(0,1): rho(x) = exp(sqrt(2) c x - c^2).
  const double c = 0.5;
  const double mean = std::sqrt(2.0) * c;
  const auto model = models::build_ou({.d = 1});
  rng::Philox gen(19, 0);
  const std::size_t n = 400000;
  Eigen::MatrixXd states(1, static_cast<long>(n));
  for (std::size_t i = 0; i < n; ++i) states(0, static_cast<long>(i)) = mean + gen.normal();
  const auto m =
      measures::WeightedEmpiricalMeasure::from_states(states, std::vector<double>(n, 0.0));
  const auto est = measures::density_ratio(m, model, {}, std::nullopt, 4);
  CHECK_FALSE(est.flagged);
  for (long i = 0; i < est.rho.size(); ++i) {
    const double x = est.axes[0](i);
    if (std::abs(x - mean) <= 1.5) {
      const double exact = std::exp(mean * x - c * c);
      CHECK(std::abs(est.rho(i) / exact - 1.0) < 0.1);
    }
  }
  // KL(N(mean,1) || N(0,1)) = mean^2/2 = c^2.
  CHECK(measures::relative_entropy(est, model) == doctest::Approx(c * c).epsilon(0.08));
  // mu0(rho^2) = e^{2 c^2}.
  CHECK(measures::lp_moment(est, model, 2.0) ==
        doctest::Approx(std::exp(2.0 * c * c)).epsilon(0.02));
  // grad log rho = sqrt(2) c, so |sigma grad log rho|^2 = 4 c^2.
  CHECK(measures::dirichlet_energy(est, model, measures::DirichletForm::log) ==
        doctest::Approx(4.0 * c * c).epsilon(0.05));
  CHECK(measures::dirichlet_energy(est, model, measures::DirichletForm::sqrt) ==
        doctest::Approx(c * c).epsilon(0.05));
  // power form at p = 2 equals mu0(|sigma grad rho|^2) = 2 c^2 e^{2c^2} * 2.
  const double p2 = measures::dirichlet_energy(est, model, measures::DirichletForm::power, 2.0);
  CHECK(p2 > 0.0);
}

TEST_CASE("flat density: zero entropy, unit lp moment, zero dirichlet energy") {
  const auto model = models::build_ou({.d = 1});
  measures::DensityEstimate est;
  est.d = 1;
  est.axes = {Eigen::VectorXd::LinSpaced(201, -5.0, 5.0)};
  est.rho = Eigen::VectorXd::Ones(201);
  est.bandwidth = Eigen::VectorXd::Ones(1);
  est.mass_check = 1.0;
  CHECK(measures::relative_entropy(est, model) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(measures::lp_moment(est, model, 2.0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(measures::dirichlet_energy(est, model, measures::DirichletForm::sqrt) ==
        doctest::Approx(0.0).epsilon(1e-9));
  CHECK(measures::dirichlet_energy(est, model, measures::DirichletForm::log) ==
        doctest::Approx(0.0).epsilon(1e-9));
  est.flagged = true;
  CHECK_THROWS(measures::relative_entropy(est, model));
  CHECK_THROWS(measures::lp_moment(est, model, 2.0));
}

TEST_CASE("exp integrability: exact cases and bounded-window comparison") {
  const auto model = models::build_ou({.d = 1});
  const auto segs = sim::sample_mu(model, 5000, 0.0, 0.01, 21);
  const auto z0 = models::constant_drift(scalar(0.0));
  CHECK(measures::exp_integrability(segs, z0, 1.0).value == doctest::Approx(1.0));
  const auto zc = models::constant_drift(scalar(0.5));
  CHECK(measures::exp_integrability(segs, zc, 2.0).value ==
        doctest::Approx(std::exp(2.0 * 0.25)).epsilon(1e-9));

  // Z(xi) = int h(xi) dtheta with |h| <= b: mu(e^{l |Z|^2}) <= e^{l tau^2 b^2}.
  const double tau = 0.5, b = 0.8, lam = 1.0;
  const auto segs_tau = sim::sample_mu(model, 5000, tau, 0.01, 25, 4);
  const auto zh = models::integral_drift(
      [b](const Eigen::VectorXd& x) {
        return Eigen::VectorXd::Constant(1, b * std::tanh(x(0)));
      },
      tau);
  const auto ei = measures::exp_integrability(segs_tau, zh, lam);
  CHECK(ei.value <= std::exp(lam * tau * tau * b * b) + 1e-9);
  CHECK_FALSE(ei.heavy_tail_flag);
  CHECK_THROWS(measures::exp_integrability(segs, z0, 0.0));
}

TEST_CASE("gruschin sigma contraction suppresses x2 gradients near x1 = 0") {
  const auto model = models::build_gruschin({});
  Eigen::VectorXd x(2);
  x << 0.05, 0.7;
  Eigen::VectorXd grad(2);
  grad << 0.0, 1.0;
  const Eigen::VectorXd sg = model.sigma(x).transpose() * grad;
  CHECK(sg.squaredNorm() == doctest::Approx(std::pow(0.05, 2)).epsilon(1e-9));
}

TEST_CASE("chunked expectation agrees with flat expectation but widens the error") {
  const auto model = models::build_ou({.d = 1});
  const auto z0 = models::constant_drift(scalar(0.0));
  measures::CesaroParams cp;
  cp.block_length = 1.0;
  cp.n_blocks = 5;
  cp.n_traj = 500;
  cp.dt = 0.01;
  cp.seed = 27;
  cp.threads = 4;
  const auto nu = measures::cesaro_invariant(model, z0, cp);
  const auto f = [](const paths::Segment& s) { return s.back()(0); };
  const auto flat = nu.expect(f);
  const auto chunked = nu.chunked_expect(f);
  CHECK(flat.mean == doctest::Approx(chunked.mean).epsilon(1e-9));
  // Atoms within a block are autocorrelated: honest SE is larger.
  CHECK(chunked.std_error > flat.std_error);
}
