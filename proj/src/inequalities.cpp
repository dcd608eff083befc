#include "dsde/inequalities.hpp"

#include <cmath>
#include <stdexcept>

#include "dsde/quadrature.hpp"
#include "dsde/rng.hpp"
#include "dsde/simulate.hpp"
#include "dsde/stats.hpp"

namespace dsde::ineq {

namespace {

double condition(double lambda, double kappa, double tau) {
  return (1.0 + std::sqrt(1.0 + 8.0 * lambda / tau)) * (1.0 - std::sqrt(kappa / lambda)) - 16.0;
}

// Discrete measure with sum_i w_i g(x_i) ~ mu0(g).
struct Mu0Quadrature {
  std::vector<Eigen::VectorXd> points;
  std::vector<double> weights;

  double integrate(const models::ScalarFn& g) const {
    double s = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) s += weights[i] * g(points[i]);
    return s;
  }
};

Mu0Quadrature mu0_quadrature(const models::ModelSpec& model, const QuadratureSpec& spec) {
  Mu0Quadrature q;
  if (model.stationary_cov) {
    if (model.d > 3)
      throw std::invalid_argument("quadrature: tensor Gauss-Hermite limited to d <= 3");
    const Eigen::MatrixXd& cov = *model.stationary_cov;
    Eigen::VectorXd sd(model.d);
    for (int j = 0; j < model.d; ++j) sd(j) = std::sqrt(cov(j, j));
    const auto rule = quad::gauss_hermite_normal(spec.gh_order);
    const std::size_t n1 = rule.nodes.size();
    std::size_t total = 1;
    for (int j = 0; j < model.d; ++j) total *= n1;
    q.points.reserve(total);
    q.weights.reserve(total);
    for (std::size_t f = 0; f < total; ++f) {
      Eigen::VectorXd x(model.d);
      double w = 1.0;
      std::size_t r = f;
      for (int j = model.d - 1; j >= 0; --j) {
        const std::size_t k = r % n1;
        r /= n1;
        x(j) = sd(j) * rule.nodes[k];
        w *= rule.weights[k];
      }
      q.points.push_back(std::move(x));
      q.weights.push_back(w);
    }
    return q;
  }
  if (model.quad_box) {
    if (model.d != 2)
      throw std::invalid_argument("quadrature: box rule implemented for d = 2 only");
    const auto& [lo, hi] = *model.quad_box;
    const auto gx = quad::trapezoid(lo(0), hi(0), spec.box_nodes);
    const auto gy = quad::trapezoid(lo(1), hi(1), spec.box_nodes);
    for (std::size_t i = 0; i < gx.nodes.size(); ++i)
      for (std::size_t j = 0; j < gy.nodes.size(); ++j) {
        Eigen::VectorXd x(2);
        x << gx.nodes[i], gy.nodes[j];
        q.points.push_back(x);
        q.weights.push_back(gx.weights[i] * gy.weights[j] * std::exp(model.log_mu0(x)));
      }
    return q;
  }
  throw std::invalid_argument("quadrature: model exposes neither Gaussian structure nor a box");
}

bool is_scalar_gaussian_ou(const models::ModelSpec& model) {
  return model.name == "ou" && model.d == 1;
}

// Exact one-dimensional linear-Gaussian semigroup value P_t g (x) =
// E g(x e^{-t} + sqrt(1 - e^{-2t}) Z).
double mehler_apply(const quad::Rule1D& rule, const models::ScalarFn& g, double t, double x) {
  const double r = std::exp(-t);
  const double s = std::sqrt(std::max(0.0, 1.0 - r * r));
  if (s == 0.0) {
    Eigen::VectorXd v(1);
    v(0) = x;
    return g(v);
  }
  double acc = 0.0;
  Eigen::VectorXd v(1);
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    v(0) = x * r + s * rule.nodes[k];
    acc += rule.weights[k] * g(v);
  }
  return acc;
}

// Monte Carlo P_t g (x) under the reference dynamics.
stats::MeanVar mc_semigroup(const models::ModelSpec& model, const models::ScalarFn& g, double t,
                            const Eigen::VectorXd& x, std::size_t n_mc, std::uint64_t seed,
                            int threads) {
  sim::SimConfig cfg;
  cfg.dt = t / std::ceil(t / 0.01);
  cfg.horizon = cfg.dt * std::round(t / cfg.dt);
  cfg.n_traj = n_mc;
  cfg.seed = seed;
  cfg.mode = sim::Mode::reference;
  cfg.threads = threads;
  std::vector<double> vals(n_mc);
  std::vector<paths::Segment> inits{paths::Segment::single(x)};
  sim::simulate_each(model, nullptr, inits, cfg,
                     [&](std::size_t i, const sim::WeightedTrajectory& traj) {
                       vals[i] = g(traj.path.values.back());
                     });
  return stats::mean_var(vals);
}

}  // namespace

double lambda_kappa_tau(double kappa, double tau) {
  if (!(kappa > 0.0) || tau < 0.0)
    throw std::invalid_argument("lambda_kappa_tau: need kappa > 0, tau >= 0");
  if (tau == 0.0) return kappa;
  double lo = kappa, hi = kappa + 1.0;
  while (condition(hi, kappa, tau) < 0.0) hi = kappa + 2.0 * (hi - kappa);
  while (hi - lo > 1e-13 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    (condition(mid, kappa, tau) >= 0.0 ? hi : lo) = mid;
  }
  return hi;
}

double q_lambda(double lambda, double kappa, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("q_lambda: tau must be > 0");
  if (!(kappa > 0.0)) throw std::invalid_argument("q_lambda: kappa must be > 0");
  const double sl = std::sqrt(lambda);
  const double s = sl - std::sqrt(kappa);
  double disc = s * s - 16.0 * sl * s / (1.0 + std::sqrt(1.0 + 8.0 * lambda / tau));
  if (disc < -1e-9 * s * s)
    throw std::invalid_argument("q_lambda: lambda below the admissible threshold");
  // The discriminant vanishes at the critical lambda; the square root would
  // amplify root-finding noise there, so a symmetric band snaps to zero.
  if (disc < 1e-12 * s * s) disc = 0.0;
  return 2.0 * sl / (s + std::sqrt(disc));
}

EntBoundResult ent_bound(double t0, double tau, double p0, double lambda, double log_mgf,
                         double log_c0) {
  EntBoundResult r;
  const double denom = 2.0 * lambda * (p0 - 1.0) - (3.0 * p0 - 1.0) * (t0 + tau);
  r.precondition_ok = p0 > 1.0 && denom > 0.0;
  r.value = ((t0 + tau) * (3.0 * p0 - 1.0) * log_mgf + 4.0 * lambda * p0 * log_c0) / denom;
  return r;
}

std::pair<double, double> si_bounds(double lambda, double kappa, double beta, double log_mgf,
                                    double mean_Z2) {
  if (!(lambda > kappa)) throw std::invalid_argument("si_bounds: need lambda > kappa");
  if (beta < 0.0) throw std::invalid_argument("si_bounds: beta must be >= 0");
  return {(log_mgf + beta) / (lambda - kappa), 4.0 * mean_Z2};
}

double nelson_p0(double t0) {
  if (!(t0 > 0.0)) throw std::invalid_argument("nelson_p0: t0 must be > 0");
  return 0.5 * (1.0 + std::exp(2.0 * t0));
}

std::vector<TestFunction> exponential_family(int d) {
  std::vector<TestFunction> fam;
  const double dirs[] = {0.5, 1.0, 2.0};
  for (double a : dirs) {
    TestFunction tf;
    tf.name = "exp_half_a" + std::to_string(a);
    tf.f = [a](const Eigen::VectorXd& x) { return std::exp(0.5 * a * x(0)); };
    tf.grad = [a, d](const Eigen::VectorXd& x) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
      g(0) = 0.5 * a * std::exp(0.5 * a * x(0));
      return g;
    };
    fam.push_back(std::move(tf));
  }
  TestFunction c;
  c.name = "constant";
  c.f = [](const Eigen::VectorXd&) { return 1.0; };
  c.grad = [d](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(d); };
  fam.push_back(std::move(c));
  TestFunction h2;
  h2.name = "hermite2";
  h2.f = [](const Eigen::VectorXd& x) { return x(0) * x(0) - 1.0; };
  h2.grad = [d](const Eigen::VectorXd& x) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
    g(0) = 2.0 * x(0);
    return g;
  };
  fam.push_back(std::move(h2));
  return fam;
}

std::vector<TestFunction> polynomial_family_2d() {
  std::vector<TestFunction> fam;
  auto add = [&](std::string name, models::ScalarFn f, models::StateFn g) {
    fam.push_back({std::move(name), std::move(f), std::move(g)});
  };
  add("one_plus_x1", [](const Eigen::VectorXd& x) { return 1.0 + x(0); },
      [](const Eigen::VectorXd&) { return (Eigen::VectorXd(2) << 1.0, 0.0).finished(); });
  add("one_plus_x2", [](const Eigen::VectorXd& x) { return 1.0 + x(1); },
      [](const Eigen::VectorXd&) { return (Eigen::VectorXd(2) << 0.0, 1.0).finished(); });
  add("x1_sq", [](const Eigen::VectorXd& x) { return x(0) * x(0); },
      [](const Eigen::VectorXd& x) { return (Eigen::VectorXd(2) << 2.0 * x(0), 0.0).finished(); });
  add("x1_x2", [](const Eigen::VectorXd& x) { return x(0) * x(1); },
      [](const Eigen::VectorXd& x) { return (Eigen::VectorXd(2) << x(1), x(0)).finished(); });
  add("gauss_bump", [](const Eigen::VectorXd& x) { return std::exp(-0.5 * x.squaredNorm()); },
      [](const Eigen::VectorXd& x) {
        return Eigen::VectorXd(-std::exp(-0.5 * x.squaredNorm()) * x);
      });
  return fam;
}

LsiResult lsi_test(const models::ModelSpec& model, const std::vector<TestFunction>& family,
                   const QuadratureSpec& quad_spec) {
  const Mu0Quadrature q = mu0_quadrature(model, quad_spec);
  struct Row {
    double lhs, dirichlet;
  };
  std::vector<Row> rows;
  rows.reserve(family.size());
  LsiResult out;
  for (const auto& tf : family) {
    const double m2 = q.integrate([&](const Eigen::VectorXd& x) {
      const double v = tf.f(x);
      return v * v;
    });
    if (!(m2 > 0.0) || !std::isfinite(m2))
      throw std::runtime_error("lsi_test: family member has degenerate L2 norm");
    const double ent = q.integrate([&](const Eigen::VectorXd& x) {
      const double v = tf.f(x);
      const double v2 = v * v;
      return v2 > 0.0 ? v2 * std::log(v2) : 0.0;
    });
    const double dir = q.integrate([&](const Eigen::VectorXd& x) {
      return (model.sigma(x).transpose() * tf.grad(x)).squaredNorm();
    });
    const double lhs = (ent - m2 * std::log(m2)) / m2;
    const double dirichlet = dir / m2;
    rows.push_back({lhs, dirichlet});
    if (dirichlet > 1e-12) out.kappa_hat = std::max(out.kappa_hat, lhs / dirichlet);
  }
  const double kappa = model.lsi_kappa ? *model.lsi_kappa : out.kappa_hat;
  const double beta = model.lsi_beta ? *model.lsi_beta : 0.0;
  for (std::size_t i = 0; i < family.size(); ++i) {
    BoundReport rep;
    rep.name = family[i].name;
    rep.lhs = rows[i].lhs;
    rep.rhs = kappa * rows[i].dirichlet + beta;
    rep.slack = rep.rhs - rep.lhs;
    rep.pass = rep.lhs <= rep.rhs + 1e-6 * std::max(1.0, std::abs(rep.rhs));
    rep.inputs = {{"kappa", kappa}, {"beta", beta}, {"dirichlet", rows[i].dirichlet}};
    out.reports.push_back(std::move(rep));
  }
  return out;
}

double hyper_norm(const models::ModelSpec& model, const std::vector<TestFunction>& family,
                  const HyperNormParams& p) {
  if (p.t0 < 0.0 || p.p0 < 1.0)
    throw std::invalid_argument("hyper_norm: need t0 >= 0 and p0 >= 1");
  double best = 0.0;
  if (is_scalar_gaussian_ou(model)) {
    const auto rule = quad::gauss_hermite_normal(p.quad.gh_order);
    for (const auto& tf : family) {
      const double l2 = std::sqrt(quad::gauss_hermite_expect(rule, [&](double x) {
        Eigen::VectorXd v(1);
        v(0) = x;
        const double y = tf.f(v);
        return y * y;
      }));
      if (!(l2 > 0.0)) continue;
      const double m = quad::gauss_hermite_expect(rule, [&](double x) {
        return std::pow(std::abs(mehler_apply(rule, tf.f, p.t0, x)), 2.0 * p.p0);
      });
      best = std::max(best, std::pow(m, 1.0 / (2.0 * p.p0)) / l2);
    }
    return best;
  }
  // Monte Carlo: outer sample over mu0, inner semigroup estimate per point.
  const std::size_t n_outer = std::max<std::size_t>(64, p.n_mc / 64);
  const std::size_t n_inner = std::max<std::size_t>(64, p.n_mc / n_outer);
  const auto xs = sim::sample_mu0(model, n_outer, rng::Philox::splitmix64(p.seed ^ 0x6f75ull));
  for (const auto& tf : family) {
    double m = 0.0, l2 = 0.0;
    for (std::size_t i = 0; i < n_outer; ++i) {
      const double pf =
          p.t0 == 0.0
              ? tf.f(xs[i])
              : mc_semigroup(model, tf.f, p.t0, xs[i], n_inner, p.seed + i + 1, 1).mean;
      m += std::pow(std::abs(pf), 2.0 * p.p0);
      const double v = tf.f(xs[i]);
      l2 += v * v;
    }
    m /= static_cast<double>(n_outer);
    l2 = std::sqrt(l2 / static_cast<double>(n_outer));
    if (l2 > 0.0) best = std::max(best, std::pow(m, 1.0 / (2.0 * p.p0)) / l2);
  }
  return best;
}

std::vector<BoundReport> harnack_check(const models::ModelSpec& model,
                                       const std::vector<TestFunction>& family,
                                       const HarnackParams& p) {
  if (!(p.p > 1.0)) throw std::invalid_argument("harnack_check: p must be > 1");
  if (p.point_pairs.empty()) throw std::invalid_argument("harnack_check: no point pairs");

  const bool exact = is_scalar_gaussian_ou(model);
  const auto rule = quad::gauss_hermite_normal(64);
  auto apply = [&](const models::ScalarFn& g, const Eigen::VectorXd& x) -> stats::MeanVar {
    if (exact) {
      stats::MeanVar mv;
      mv.mean = mehler_apply(rule, g, p.t, x(0));
      mv.n = 1;
      return mv;
    }
    return mc_semigroup(model, g, p.t, x, p.n_mc, p.seed + 1, p.threads);
  };

  auto phi = [&](double C, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    const double d2 = (x - y).squaredNorm();
    if (model.name == "hamiltonian") return C * d2 / std::min(1.0, p.t * p.t * p.t);
    return C * p.p * d2 / ((p.p - 1.0) * p.t);
  };

  struct Cell {
    stats::MeanVar left, right;  // P_t f (x) and P_t f^p (y)
  };
  std::vector<Cell> cells;
  cells.reserve(family.size() * p.point_pairs.size());
  for (const auto& tf : family)
    for (const auto& [x, y] : p.point_pairs) {
      Cell c;
      c.left = apply(tf.f, x);
      c.right = apply([&](const Eigen::VectorXd& v) { return std::pow(tf.f(v), p.p); }, y);
      cells.push_back(c);
    }

  auto passes_all = [&](double C) {
    std::size_t k = 0;
    for (std::size_t fi = 0; fi < family.size(); ++fi)
      for (const auto& [x, y] : p.point_pairs) {
        const Cell& c = cells[k++];
        const double lhs = std::pow(c.left.mean, p.p);
        const double lhs_se = p.p * std::pow(std::abs(c.left.mean), p.p - 1.0) * c.left.std_error;
        const double ephi = std::exp(phi(C, x, y));
        const double rhs = ephi * c.right.mean;
        const double rhs_se = ephi * c.right.std_error;
        const double tol = 3.0 * std::sqrt(lhs_se * lhs_se + rhs_se * rhs_se) +
                           1e-9 * std::max(1.0, std::abs(rhs));
        if (lhs > rhs + tol) return false;
      }
    return true;
  };

  double C = p.C.value_or(0.0);
  if (!p.C) {
    for (int j = -6; j <= 12; ++j) {
      C = std::pow(2.0, j);
      if (passes_all(C)) break;
    }
  }

  std::vector<BoundReport> out;
  std::size_t k = 0;
  for (const auto& tf : family)
    for (const auto& [x, y] : p.point_pairs) {
      const Cell& c = cells[k++];
      BoundReport rep;
      rep.name = tf.name;
      rep.lhs = std::pow(c.left.mean, p.p);
      const double ephi = std::exp(phi(C, x, y));
      rep.rhs = ephi * c.right.mean;
      rep.slack = rep.rhs - rep.lhs;
      const double lhs_se = p.p * std::pow(std::abs(c.left.mean), p.p - 1.0) * c.left.std_error;
      const double rhs_se = ephi * c.right.std_error;
      rep.pass = rep.lhs <= rep.rhs + 3.0 * std::sqrt(lhs_se * lhs_se + rhs_se * rhs_se) +
                               1e-9 * std::max(1.0, std::abs(rep.rhs));
      rep.inputs = {{"C", C},
                    {"p", p.p},
                    {"t", p.t},
                    {"dist2", (x - y).squaredNorm()}};
      out.push_back(std::move(rep));
    }
  return out;
}

}  // namespace dsde::ineq
