#include "dsde/model.hpp"

#include <cmath>
#include <stdexcept>

#include "dsde/quadrature.hpp"

namespace dsde::models {

namespace {

constexpr double kPi = 3.141592653589793238462643383279;

double log_gaussian(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                    const Eigen::VectorXd& variances) {
  double acc = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    const double z = x(i) - mean(i);
    acc += -0.5 * z * z / variances(i) - 0.5 * std::log(2.0 * kPi * variances(i));
  }
  return acc;
}

}  // namespace

StateFn gradient_drift(const StateFn& grad_V, const MatrixFn& sigma, StateFn div_a) {
  if (!grad_V || !sigma) throw std::invalid_argument("gradient_drift needs grad_V and sigma");
  if (!div_a) {
    // Central-difference divergence of a = sigma sigma^*.
    div_a = [sigma](const Eigen::VectorXd& x) {
      const double h = 1e-5 * (1.0 + x.norm());
      const int d = static_cast<int>(x.size());
      Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
      Eigen::VectorXd xp = x, xm = x;
      for (int j = 0; j < d; ++j) {
        xp(j) = x(j) + h;
        xm(j) = x(j) - h;
        const Eigen::MatrixXd sp = sigma(xp);
        const Eigen::MatrixXd sm = sigma(xm);
        const Eigen::MatrixXd da = (sp * sp.transpose() - sm * sm.transpose()) / (2.0 * h);
        out += da.col(j);
        xp(j) = x(j);
        xm(j) = x(j);
      }
      return out;
    };
  }
  return [grad_V, sigma, div_a](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const Eigen::MatrixXd s = sigma(x);
    const Eigen::VectorXd g = grad_V(x);
    if (g.size() != x.size()) throw std::invalid_argument("grad_V dimension mismatch");
    const Eigen::VectorXd dv = div_a(x);
    if (dv.size() != x.size()) throw std::invalid_argument("div_a dimension mismatch");
    return 0.5 * (dv - s * (s.transpose() * g));
  };
}

Eigen::MatrixXd lyapunov_stationary_cov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n || Q.rows() != n || Q.cols() != n)
    throw std::invalid_argument("lyapunov: square matrices of equal size required");
  // vec(A S + S A^T) = (I (x) A + A (x) I) vec(S)
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n * n, n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        K(i + n * j, k + n * j) += A(i, k);  // A S
        K(i + n * j, i + n * k) += A(j, k);  // S A^T
      }
  Eigen::VectorXd q(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) q(i + n * j) = -Q(i, j);
  const Eigen::VectorXd s = K.fullPivLu().solve(q);
  Eigen::MatrixXd S(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) S(i, j) = s(i + n * j);
  return 0.5 * (S + S.transpose());
}

ModelSpec build_ou(const OuParams& p) {
  if (p.d < 1) throw std::invalid_argument("ou: d >= 1 required");
  ModelSpec spec;
  spec.name = "ou";
  spec.d = p.d;
  spec.m = p.d;
  const int d = p.d;
  spec.drift = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return -x; };
  spec.sigma = [d](const Eigen::VectorXd&) -> Eigen::MatrixXd {
    return std::sqrt(2.0) * Eigen::MatrixXd::Identity(d, d);
  };
  spec.log_mu0 = [d](const Eigen::VectorXd& x) {
    return -0.5 * x.squaredNorm() - 0.5 * d * std::log(2.0 * kPi);
  };
  spec.log_mu0_normalized = true;
  spec.exact_sampler = [d](rng::Philox& gen) {
    Eigen::VectorXd x(d);
    for (int i = 0; i < d; ++i) x(i) = gen.normal();
    return x;
  };
  spec.lsi_kappa = 1.0;
  spec.lsi_beta = 0.0;
  spec.stationary_cov = Eigen::MatrixXd::Identity(d, d);
  return spec;
}

ModelSpec build_hamiltonian(const HamiltonianParams& p) {
  if (p.d < 1) throw std::invalid_argument("hamiltonian: d >= 1 required");
  const int d = p.d;
  ModelSpec spec;
  spec.name = "hamiltonian";
  spec.d = 2 * d;
  spec.m = d;
  spec.drift = [d](const Eigen::VectorXd& s) -> Eigen::VectorXd {
    Eigen::VectorXd out(2 * d);
    out.head(d) = s.tail(d);
    out.tail(d) = -s.head(d) - s.tail(d);
    return out;
  };
  spec.sigma = [d](const Eigen::VectorXd&) -> Eigen::MatrixXd {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2 * d, d);
    s.bottomRows(d) = Eigen::MatrixXd::Identity(d, d);
    return s;
  };
  // Stationary covariance from the Lyapunov equation; the solve is
  // self-validating against simulation.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * d, 2 * d);
  A.topRightCorner(d, d) = Eigen::MatrixXd::Identity(d, d);
  A.bottomLeftCorner(d, d) = -Eigen::MatrixXd::Identity(d, d);
  A.bottomRightCorner(d, d) = -Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(2 * d, 2 * d);
  Q.bottomRightCorner(d, d) = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd S = lyapunov_stationary_cov(A, Q);
  spec.stationary_cov = S;
  const Eigen::VectorXd vars = S.diagonal();  // S is diagonal here (I/2)
  const Eigen::VectorXd mean = Eigen::VectorXd::Zero(2 * d);
  spec.log_mu0 = [mean, vars](const Eigen::VectorXd& x) { return log_gaussian(x, mean, vars); };
  spec.log_mu0_normalized = true;
  spec.exact_sampler = [vars, d](rng::Philox& gen) {
    Eigen::VectorXd x(2 * d);
    for (int i = 0; i < 2 * d; ++i) x(i) = std::sqrt(vars(i)) * gen.normal();
    return x;
  };
  return spec;
}

namespace {

struct GruschinPotential {
  GruschinParams p;

  double inner(const Eigen::VectorXd& x) const {
    return p.c3 * std::pow(std::abs(x(0) - p.c1), p.l + 1) + p.c4 * x(1) * x(1);
  }
  double value(const Eigen::VectorXd& x) const {
    return p.c1 + std::pow(inner(x), p.m_exp);
  }
  Eigen::VectorXd grad(const Eigen::VectorXd& x) const {
    const double u = inner(x);
    const double um1 = p.m_exp * std::pow(u, p.m_exp - 1);
    const double z = x(0) - p.c1;
    Eigen::VectorXd g(2);
    g(0) = um1 * p.c3 * (p.l + 1) * std::pow(std::abs(z), p.l - 1) * z;
    g(1) = um1 * 2.0 * p.c4 * x(1);
    return g;
  }
};

}  // namespace

ModelSpec build_gruschin(const GruschinParams& p) {
  if (p.l < 1) throw std::invalid_argument("gruschin: l >= 1 required");
  if (p.m_exp < 2) throw std::invalid_argument("gruschin: m >= 2 required");
  if (p.c2 == 0.0) throw std::invalid_argument("gruschin: c2 != 0 required");
  if (!(p.c3 > 0.0) || !(p.c4 > 0.0))
    throw std::invalid_argument("gruschin: c3, c4 > 0 required");

  ModelSpec spec;
  spec.name = "gruschin";
  spec.d = 2;
  spec.m = 2;
  const GruschinPotential pot{p};
  const int l = p.l;
  spec.sigma = [l](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2, 2);
    s(0, 0) = 1.0;
    s(1, 1) = std::pow(x(0), l);
    return s;
  };
  // (sigma sigma^*)_22 depends only on x1, so div(a) vanishes and the
  // gradient-form drift is (-1/2 d1 V, -1/2 x1^{2l} d2 V).
  spec.drift = [pot, l](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const Eigen::VectorXd g = pot.grad(x);
    Eigen::VectorXd z(2);
    z(0) = -0.5 * g(0);
    z(1) = -0.5 * std::pow(x(0), 2 * l) * g(1);
    return z;
  };

  // Normalize mu0 by quadrature over a box containing ~all the mass.
  const double u_max = std::pow(45.0 + std::abs(p.c1), 1.0 / p.m_exp);
  const double r1 = std::pow(u_max / p.c3, 1.0 / (p.l + 1));
  const double r2 = std::sqrt(u_max / p.c4);
  const auto gx = quad::trapezoid(p.c1 - r1, p.c1 + r1, 801);
  const auto gy = quad::trapezoid(-r2, r2, 801);
  const double c1 = p.c1;
  const double mass = quad::trapezoid2d(gx, gy, [&pot](double a, double b) {
    Eigen::VectorXd x(2);
    x << a, b;
    return std::exp(-pot.value(x));
  });
  const double log_norm = std::log(mass);
  spec.log_mu0 = [pot, log_norm](const Eigen::VectorXd& x) {
    return -pot.value(x) - log_norm;
  };
  spec.log_mu0_normalized = true;
  Eigen::VectorXd box_lo(2), box_hi(2);
  box_lo << p.c1 - r1, -r2;
  box_hi << p.c1 + r1, r2;
  spec.quad_box = std::make_pair(box_lo, box_hi);

  // Random-walk Metropolis: step adapted toward 0.3 acceptance during a
  // 10^4 burn-in, then thinning 10.
  spec.mcmc_sampler = [pot, c1, r1, r2](std::size_t n, std::uint64_t seed,
                                        McmcDiagnostics* diag) {
    rng::Philox gen(seed, 0x6d636d63ull);
    Eigen::VectorXd x(2);
    x << c1, 0.0;
    double lp = -pot.value(x);
    double step = 0.5 * std::min(r1, r2);
    const std::size_t burn = 10000;
    const std::size_t thin = 10;
    std::size_t accepted = 0, proposed = 0, window_acc = 0;
    std::vector<Eigen::VectorXd> out;
    out.reserve(n);
    Eigen::VectorXd prop(2);
    for (std::size_t it = 0; out.size() < n; ++it) {
      prop(0) = x(0) + step * gen.normal();
      prop(1) = x(1) + step * gen.normal();
      const double lp_new = -pot.value(prop);
      ++proposed;
      if (std::log(std::max(gen.uniform(), 1e-300)) < lp_new - lp) {
        x = prop;
        lp = lp_new;
        ++accepted;
        ++window_acc;
      }
      if (it < burn && (it + 1) % 100 == 0) {
        const double rate = static_cast<double>(window_acc) / 100.0;
        step *= std::exp(0.5 * (rate - 0.3));
        window_acc = 0;
      }
      if (it >= burn && (it - burn) % thin == 0) out.push_back(x);
    }
    if (diag) {
      diag->acceptance_rate = static_cast<double>(accepted) / static_cast<double>(proposed);
      diag->step_size = step;
    }
    return out;
  };
  // A log-Sobolev constant exists for this family but is not explicit;
  // lsi_kappa stays unset and is estimated empirically downstream.
  return spec;
}

ModelSpec build_galerkin_ou(const GalerkinOuParams& p) {
  const int n = static_cast<int>(p.lambdas.size());
  if (n < 1 || p.qs.size() != p.lambdas.size())
    throw std::invalid_argument("galerkin_ou: matching nonempty lambda/q lists required");
  for (int i = 0; i < n; ++i) {
    if (!(p.lambdas[i] > 0.0)) throw std::invalid_argument("galerkin_ou: lambda_i > 0 required");
    if (!(p.qs[i] != 0.0)) throw std::invalid_argument("galerkin_ou: q_i != 0 required");
  }
  ModelSpec spec;
  spec.name = "galerkin_ou";
  spec.d = n;
  spec.m = n;
  Eigen::VectorXd lam(n), q(n), vars(n);
  for (int i = 0; i < n; ++i) {
    lam(i) = p.lambdas[i];
    q(i) = p.qs[i];
    vars(i) = q(i) * q(i) / (2.0 * lam(i));
  }
  spec.drift = [lam](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return -lam.cwiseProduct(x);
  };
  spec.sigma = [q, n](const Eigen::VectorXd&) -> Eigen::MatrixXd {
    return q.asDiagonal().toDenseMatrix();
  };
  const Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  spec.log_mu0 = [mean, vars](const Eigen::VectorXd& x) { return log_gaussian(x, mean, vars); };
  spec.log_mu0_normalized = true;
  spec.exact_sampler = [vars, n](rng::Philox& gen) {
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = std::sqrt(vars(i)) * gen.normal();
    return x;
  };
  spec.lsi_kappa = 1.0 / lam.minCoeff();
  spec.stationary_cov = vars.asDiagonal().toDenseMatrix();
  return spec;
}

PathDrift constant_drift(const Eigen::VectorXd& c) {
  PathDrift z;
  z.apply = [c](const paths::Segment&) { return c; };
  z.tau = 0.0;
  z.bound = c.norm();
  return z;
}

PathDrift state_linear_drift(const Eigen::MatrixXd& K) {
  PathDrift z;
  z.apply = [K](const paths::Segment& xi) -> Eigen::VectorXd { return K * xi.back(); };
  z.tau = 0.0;
  return z;
}

PathDrift delay_linear_drift(const Eigen::MatrixXd& K, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("delay drift requires tau > 0");
  PathDrift z;
  z.apply = [K](const paths::Segment& xi) -> Eigen::VectorXd { return K * xi.front(); };
  z.tau = tau;
  return z;
}

PathDrift integral_drift(const StateFn& h, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("integral drift undefined for tau = 0");
  PathDrift z;
  z.apply = [h](const paths::Segment& xi) -> Eigen::VectorXd {
    const std::size_t n = xi.size();
    Eigen::VectorXd acc = h(xi.node(0));
    acc *= 0.5;
    for (std::size_t k = 1; k + 1 < n; ++k) acc += h(xi.node(k));
    acc += 0.5 * h(xi.node(n - 1));
    return xi.dt() * acc;
  };
  z.tau = tau;
  return z;
}

PathDrift truncate_drift(const PathDrift& Z, double n) {
  if (!(n > 0.0)) throw std::invalid_argument("truncation level must be > 0");
  PathDrift out;
  const auto inner = Z.apply;
  out.apply = [inner, n](const paths::Segment& xi) -> Eigen::VectorXd {
    Eigen::VectorXd v = inner(xi);
    if (v.norm() > n) v.setZero();
    return v;
  };
  out.tau = Z.tau;
  out.bound = n;
  out.support_radius = Z.support_radius;
  return out;
}

}  // namespace dsde::models
