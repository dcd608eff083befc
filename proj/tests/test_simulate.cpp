#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "dsde/girsanov.hpp"
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

models::ModelSpec frozen_model() {
  models::ModelSpec m;
  m.name = "frozen";
  m.d = 1;
  m.m = 1;
  m.drift = [](const Eigen::VectorXd& x) { return Eigen::VectorXd(Eigen::VectorXd::Zero(x.size())); };
  m.sigma = [](const Eigen::VectorXd&) { return Eigen::MatrixXd(Eigen::MatrixXd::Zero(1, 1)); };
  return m;
}

}  // namespace

TEST_CASE("zero drift and zero noise give a constant path") {
  sim::SimConfig cfg;
  cfg.dt = 0.1;
  cfg.horizon = 1.0;
  cfg.n_traj = 3;
  cfg.seed = 1;
  const auto batch = sim::simulate(frozen_model(), nullptr, {paths::Segment::single(scalar(2.5))},
                                   cfg);
  for (const auto& t : batch.trajs)
    for (const auto& x : t.path.values) CHECK(x(0) == 2.5);
}

TEST_CASE("ou mean decays like e^{-t} from a deterministic start") {
  const auto m = models::build_ou({.d = 1});
  sim::SimConfig cfg;
  cfg.dt = 0.001;
  cfg.horizon = 1.0;
  cfg.n_traj = 100000;
  cfg.seed = 7;
  cfg.threads = 4;
  std::vector<double> endpoints(cfg.n_traj);
  sim::simulate_each(m, nullptr, {paths::Segment::single(scalar(1.0))}, cfg,
                     [&](std::size_t i, const sim::WeightedTrajectory& t) {
                       endpoints[i] = t.path.values.back()(0);
                     });
  const auto mv = stats::mean_var(endpoints);
  CHECK(std::abs(mv.mean - std::exp(-1.0)) <= 4.0 * mv.std_error + 2e-3);
  CHECK(mv.std_error < 0.01);
}

TEST_CASE("delay drift with zero coefficient reduces to the no-delay model") {
  const auto m = models::build_ou({.d = 1});
  Eigen::MatrixXd K0(1, 1);
  K0 << 0.0;
  const auto z = models::delay_linear_drift(K0, 0.5);
  sim::SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 1.0;
  cfg.n_traj = 20000;
  cfg.seed = 3;
  cfg.threads = 4;
  cfg.mode = sim::Mode::perturbed_direct;
  std::vector<double> with_delay(cfg.n_traj), without(cfg.n_traj);
  sim::simulate_each(m, &z, {paths::Segment::constant(0.5, 0.01, scalar(1.0))}, cfg,
                     [&](std::size_t i, const sim::WeightedTrajectory& t) {
                       with_delay[i] = t.path.values.back()(0);
                     });
  sim::SimConfig cfg2 = cfg;
  cfg2.mode = sim::Mode::reference;
  sim::simulate_each(m, nullptr, {paths::Segment::single(scalar(1.0))}, cfg2,
                     [&](std::size_t i, const sim::WeightedTrajectory& t) {
                       without[i] = t.path.values.back()(0);
                     });
  std::vector<double> w(cfg.n_traj, 1.0 / static_cast<double>(cfg.n_traj));
  CHECK(stats::ks_distance_two_sample(with_delay, w, without, w) < 0.02);
}

TEST_CASE("simulation is bit-identical across thread counts") {
  const auto m = models::build_ou({.d = 1});
  sim::SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 0.5;
  cfg.n_traj = 64;
  cfg.seed = 11;
  auto run = [&](int threads) {
    sim::SimConfig c = cfg;
    c.threads = threads;
    std::vector<double> out(cfg.n_traj);
    sim::simulate_each(m, nullptr, {paths::Segment::single(scalar(0.3))}, c,
                       [&](std::size_t i, const sim::WeightedTrajectory& t) {
                         out[i] = t.path.values.back()(0);
                       });
    return out;
  };
  const auto a = run(1), b = run(8);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("weak order one: endpoint second moment matches the exact Euler chain") {
  // For the scalar linear SDE the Euler chain X_{k+1} = (1-dt) X_k +
  // sqrt(2 dt) xi has closed-form moments: E X_n^2 = x^2 a^n + 2 dt
  // (1 - a^n)/(1 - a) with a = (1-dt)^2. The simulator must hit the
  // discrete value to Monte Carlo accuracy at each dt, and the discrete
  // value converges to the continuous limit at first order in dt.
  const auto m = models::build_ou({.d = 1});
  const double x0 = 2.0;
  const auto chain_m2 = [&](double dt) {
    const auto n = static_cast<std::size_t>(std::llround(1.0 / dt));
    const double a = (1.0 - dt) * (1.0 - dt);
    const double an = std::pow(a, static_cast<double>(n));
    return x0 * x0 * an + 2.0 * dt * (1.0 - an) / (1.0 - a);
  };
  for (double dt : {0.02, 0.01, 0.005}) {
    sim::SimConfig cfg;
    cfg.dt = dt;
    cfg.horizon = 1.0;
    cfg.n_traj = 200000;
    cfg.seed = 17;
    cfg.threads = 4;
    double acc = 0.0, acc2 = 0.0;
    sim::simulate_each(m, nullptr, {paths::Segment::single(scalar(x0))}, cfg,
                       [&](std::size_t, const sim::WeightedTrajectory& t) {
                         const double v = t.path.values.back()(0);
                         acc += v * v;
                         acc2 += v * v * v * v;
                       });
    const double n = static_cast<double>(cfg.n_traj);
    const double est = acc / n;
    const double se = std::sqrt((acc2 / n - est * est) / n);
    CHECK(std::abs(est - chain_m2(dt)) < 4.0 * se);
  }
  // First-order weak convergence of the chain itself, noise-free.
  const double exact = 1.0 - std::exp(-2.0) + x0 * x0 * std::exp(-2.0);
  std::vector<double> log_dt, log_err;
  for (double dt : {1e-3, 5e-4, 2.5e-4, 1.25e-4}) {
    log_dt.push_back(std::log(dt));
    log_err.push_back(std::log(std::abs(chain_m2(dt) - exact)));
  }
  const double slope = stats::regression_slope(log_dt, log_err);
  CHECK(slope > 0.9);
  CHECK(slope < 1.1);
}

TEST_CASE("sample_mu0 moments for ou and galerkin") {
  const auto ou = models::build_ou({.d = 1});
  const auto xs = sim::sample_mu0(ou, 100000, 23);
  double m1 = 0.0, m2 = 0.0;
  for (const auto& x : xs) {
    m1 += x(0);
    m2 += x(0) * x(0);
  }
  const double n = static_cast<double>(xs.size());
  m1 /= n;
  m2 /= n;
  CHECK(std::abs(m1) <= 4.0 / std::sqrt(n));
  CHECK(std::abs(m2 - 1.0) <= 4.0 * std::sqrt(2.0 / n));

  const auto gal = models::build_galerkin_ou({.lambdas = {1.0, 4.0}, .qs = {1.0, 1.0}});
  const auto ys = sim::sample_mu0(gal, 100000, 29);
  Eigen::Vector2d v = Eigen::Vector2d::Zero();
  for (const auto& y : ys) v += y.cwiseProduct(y);
  v /= n;
  CHECK(std::abs(v(0) - 0.5) <= 4.0 * std::sqrt(2.0 * 0.25 / n));
  CHECK(std::abs(v(1) - 0.125) <= 4.0 * std::sqrt(2.0 * 0.125 * 0.125 / n));
}

TEST_CASE("sample_mu: stationary marginals and lag-tau autocovariance") {
  const auto m = models::build_ou({.d = 1});
  const auto segs = sim::sample_mu(m, 40000, 1.0, 0.01, 31, 4);
  double c = 0.0, v0 = 0.0, vt = 0.0;
  std::vector<double> at0;
  for (const auto& s : segs) {
    const double a = s.front()(0), b = s.back()(0);
    c += a * b;
    v0 += a * a;
    vt += b * b;
    at0.push_back(b);
  }
  const double n = static_cast<double>(segs.size());
  c /= n;
  v0 /= n;
  vt /= n;
  CHECK(std::abs(v0 - 1.0) < 0.05);
  CHECK(std::abs(vt - 1.0) < 0.05);
  CHECK(std::abs(c - std::exp(-1.0)) < 0.05);
  std::vector<double> w(at0.size(), 1.0 / n);
  const auto phi = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
  CHECK(stats::ks_distance_cdf(at0, w, phi) < 0.02);
}

TEST_CASE("log weights: zero drift, constant drift, and double-entry recompute") {
  const auto m = models::build_ou({.d = 1});
  sim::SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 1.0;
  cfg.n_traj = 50;
  cfg.seed = 37;
  cfg.mode = sim::Mode::reference_with_weights;

  const auto z0 = models::constant_drift(scalar(0.0));
  const auto b0 = sim::simulate(m, &z0, {paths::Segment::single(scalar(0.0))}, cfg);
  for (const auto& t : b0.trajs)
    for (double lw : t.log_weight_series) CHECK(lw == 0.0);

  const auto zc = models::constant_drift(scalar(0.7));
  const auto bc = sim::simulate(m, &zc, {paths::Segment::single(scalar(0.0))}, cfg);
  for (const auto& t : bc.trajs) {
    // log R(T) = z W(T) - z^2 T / 2 with W(T) the summed increments.
    double wT = 0.0;
    for (const auto& dw : t.dW) wT += dw(0);
    CHECK(girsanov::log_weight(t, 1.0) ==
          doctest::Approx(0.7 * wT - 0.5 * 0.49 * 1.0).epsilon(1e-12));
  }

  Eigen::MatrixXd K(1, 1);
  K << 1.0;
  const auto zx = models::state_linear_drift(K);
  const auto bx = sim::simulate(m, &zx, {paths::Segment::single(scalar(0.0))}, cfg);
  for (const auto& t : bx.trajs) {
    const auto redo = sim::recompute_log_weights(t, cfg.dt);
    REQUIRE(redo.size() == t.log_weight_series.size());
    for (std::size_t k = 0; k < redo.size(); ++k) CHECK(redo[k] == t.log_weight_series[k]);
  }
}

TEST_CASE("weighted expectation: zero drift matches the plain mean") {
  const auto m = models::build_ou({.d = 1});
  sim::SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 1.0;
  cfg.n_traj = 5000;
  cfg.seed = 41;
  cfg.mode = sim::Mode::reference_with_weights;
  const auto z0 = models::constant_drift(scalar(0.0));
  const auto batch = sim::simulate(m, &z0, {paths::Segment::single(scalar(1.0))}, cfg);
  const auto est = girsanov::weighted_expectation(
      batch, [](const paths::Segment& s) { return s.back()(0); }, 1.0);
  double plain = 0.0;
  for (const auto& t : batch.trajs) plain += t.path.values.back()(0);
  plain /= static_cast<double>(cfg.n_traj);
  CHECK(est.value == doctest::Approx(plain).epsilon(1e-12));
  CHECK(est.ess == doctest::Approx(static_cast<double>(cfg.n_traj)));
}

TEST_CASE("martingale check: mean weight one, and low-ESS flag semantics") {
  const auto m = models::build_ou({.d = 1});
  sim::SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 2.0;
  cfg.n_traj = 20000;
  cfg.seed = 43;
  cfg.threads = 4;
  cfg.mode = sim::Mode::reference_with_weights;
  Eigen::MatrixXd K(1, 1);
  K << 0.4;
  const auto z = models::truncate_drift(models::state_linear_drift(K), 3.0);
  const auto inits = sim::sample_mu(m, cfg.n_traj, 0.0, cfg.dt, 43);
  const auto batch = sim::simulate(m, &z, inits, cfg);
  const auto rep = girsanov::martingale_check(batch, {0.5, 1.0, 2.0});
  CHECK(rep.pass);
  // ESS decreases with t for nonzero drift.
  CHECK(rep.ess[0] > rep.ess[1]);
  CHECK(rep.ess[1] > rep.ess[2]);

  // Tiny sample: wide errors flag low ESS instead of failing outright.
  sim::SimConfig tiny = cfg;
  tiny.n_traj = 10;
  Eigen::MatrixXd K1(1, 1);
  K1 << 1.0;
  const auto zbig = models::state_linear_drift(K1);
  const auto small_inits = sim::sample_mu(m, tiny.n_traj, 0.0, tiny.dt, 47);
  const auto small = sim::simulate(m, &zbig, small_inits, tiny);
  const auto srep = girsanov::martingale_check(small, {2.0});
  CHECK(srep.std_error[0] > 0.05);
}

TEST_CASE("integrability diagnostic: constant drift integrates exactly") {
  const auto m = models::build_ou({.d = 1});
  sim::SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 1.0;
  cfg.n_traj = 200;
  cfg.seed = 53;
  cfg.mode = sim::Mode::reference_with_weights;
  const auto zc = models::constant_drift(scalar(0.5));
  const auto batch = sim::simulate(m, &zc, {paths::Segment::single(scalar(0.0))}, cfg);
  const auto rep = girsanov::integrability_diagnostic(batch, 1.0);
  CHECK(rep.max == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(rep.mean == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(rep.frac_exceeding == 0.0);

  // Z(x) = x from stationarity: mean integral ~ E|X|^2 = 1.
  sim::SimConfig cfg2 = cfg;
  cfg2.n_traj = 20000;
  cfg2.threads = 4;
  Eigen::MatrixXd K(1, 1);
  K << 1.0;
  const auto zx = models::state_linear_drift(K);
  const auto inits = sim::sample_mu(m, cfg2.n_traj, 0.0, cfg2.dt, 59);
  const auto b2 = sim::simulate(m, &zx, inits, cfg2);
  const auto r2 = girsanov::integrability_diagnostic(b2, 1e9);
  CHECK(std::abs(r2.mean - 1.0) < 0.05);
}

TEST_CASE("blow-up is flagged and excluded, not clamped") {
  models::ModelSpec m;
  m.name = "explosive";
  m.d = 1;
  m.m = 1;
  // Super-linear repulsive drift explodes under Euler steps.
  m.drift = [](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(x.array().pow(3).matrix() * 1e6);
  };
  m.sigma = [](const Eigen::VectorXd&) {
    return Eigen::MatrixXd(Eigen::MatrixXd::Identity(1, 1));
  };
  sim::SimConfig cfg;
  cfg.dt = 0.1;
  cfg.horizon = 2.0;
  cfg.n_traj = 10;
  cfg.seed = 61;
  const auto batch = sim::simulate(m, nullptr, {paths::Segment::single(scalar(1.0))}, cfg);
  CHECK(batch.n_blowups == 10);
  for (const auto& t : batch.trajs) {
    CHECK(t.blown_up);
    for (const auto& x : t.path.values) CHECK(std::isfinite(x(0)));
  }
}

TEST_CASE("trajectory dump: binary payload and sidecar round-trip") {
  const auto m = models::build_ou({.d = 1});
  sim::SimConfig cfg;
  cfg.dt = 0.1;
  cfg.horizon = 0.5;
  cfg.n_traj = 4;
  cfg.seed = 67;
  const auto batch = sim::simulate(m, nullptr, {paths::Segment::single(scalar(0.2))}, cfg);
  const auto dir = std::filesystem::temp_directory_path();
  const auto bin = (dir / "traj_test.bin").string();
  const auto side = (dir / "traj_test.json").string();
  sim::dump_trajectories(batch, bin, side, cfg.seed);

  std::ifstream in(bin, std::ios::binary);
  std::vector<double> data(4 * 6);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(sizeof(double) * data.size()));
  CHECK(in.gcount() == static_cast<std::streamsize>(sizeof(double) * data.size()));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 6; ++k)
      CHECK(data[i * 6 + k] == batch.trajs[i].path.values[k](0));
  std::ifstream sidein(side);
  std::string text((std::istreambuf_iterator<char>(sidein)), std::istreambuf_iterator<char>());
  CHECK(text.find("[4, 6, 1]") != std::string::npos);
}
