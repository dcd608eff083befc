#include "dsde/measures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dsde/parallel.hpp"
#include "dsde/rng.hpp"
#include "dsde/simulate.hpp"

namespace dsde::measures {

namespace {

constexpr double kDensityFloor = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Flat row-major indexing over a rectangular grid.
struct TensorGrid {
  const std::vector<Eigen::VectorXd>& axes;

  std::size_t n_points() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= static_cast<std::size_t>(a.size());
    return n;
  }
  void unflatten(std::size_t flat, std::vector<long>& idx) const {
    idx.resize(axes.size());
    for (std::size_t j = axes.size(); j-- > 0;) {
      const auto n = static_cast<std::size_t>(axes[j].size());
      idx[j] = static_cast<long>(flat % n);
      flat /= n;
    }
  }
  Eigen::VectorXd point(const std::vector<long>& idx) const {
    Eigen::VectorXd x(axes.size());
    for (std::size_t j = 0; j < axes.size(); ++j) x(static_cast<long>(j)) = axes[j](idx[j]);
    return x;
  }
  // Trapezoid quadrature weight of a node (uniform axes).
  double trap_weight(const std::vector<long>& idx) const {
    double w = 1.0;
    for (std::size_t j = 0; j < axes.size(); ++j) {
      const auto& a = axes[j];
      const double h = a.size() > 1 ? a(1) - a(0) : 1.0;
      const bool edge = idx[j] == 0 || idx[j] == a.size() - 1;
      w *= edge ? 0.5 * h : h;
    }
    return w;
  }
};

double weighted_quantile(std::vector<std::pair<double, double>> vw, double q) {
  std::sort(vw.begin(), vw.end());
  double total = 0.0;
  for (const auto& [v, w] : vw) total += w;
  double acc = 0.0;
  for (const auto& [v, w] : vw) {
    acc += w;
    if (acc >= q * total) return v;
  }
  return vw.back().first;
}

double mu0_density(const models::ModelSpec& model, const Eigen::VectorXd& x) {
  return std::exp(model.log_mu0(x));
}

// Quadrature of integrand(rho, x) against mu0 over the estimate's grid.
double grid_integral(const DensityEstimate& est, const models::ModelSpec& model,
                     const std::function<double(double, const Eigen::VectorXd&)>& integrand) {
  const TensorGrid tg{est.axes};
  std::vector<long> idx;
  double sum = 0.0;
  for (std::size_t f = 0; f < tg.n_points(); ++f) {
    tg.unflatten(f, idx);
    const Eigen::VectorXd x = tg.point(idx);
    sum += tg.trap_weight(idx) * integrand(est.rho(static_cast<long>(f)), x) *
           mu0_density(model, x);
  }
  return sum;
}

}  // namespace

WeightedEmpiricalMeasure WeightedEmpiricalMeasure::from_segments(
    const std::vector<paths::Segment>& segs, std::vector<double> log_weights) {
  if (segs.empty()) throw std::invalid_argument("measure needs at least one atom");
  if (segs.size() != log_weights.size())
    throw std::invalid_argument("atoms and log_weights length mismatch");
  WeightedEmpiricalMeasure m(segs.front().tau(), segs.front().dt());
  for (std::size_t i = 0; i < segs.size(); ++i) {
    Chunk c;
    c.states = segs[i].values();
    c.anchors = {static_cast<std::size_t>(segs[i].size() - 1)};
    c.log_weights = {log_weights[i]};
    m.add_chunk(std::move(c));
  }
  return m;
}

WeightedEmpiricalMeasure WeightedEmpiricalMeasure::from_states(const Eigen::MatrixXd& states,
                                                               std::vector<double> log_weights) {
  if (states.cols() == 0) throw std::invalid_argument("measure needs at least one atom");
  if (static_cast<std::size_t>(states.cols()) != log_weights.size())
    throw std::invalid_argument("atoms and log_weights length mismatch");
  WeightedEmpiricalMeasure m(0.0, 1.0);
  Chunk c;
  c.states = states;
  c.anchors.resize(static_cast<std::size_t>(states.cols()));
  std::iota(c.anchors.begin(), c.anchors.end(), std::size_t{0});
  c.log_weights = std::move(log_weights);
  m.add_chunk(std::move(c));
  return m;
}

void WeightedEmpiricalMeasure::add_chunk(Chunk c) {
  if (c.anchors.size() != c.log_weights.size())
    throw std::invalid_argument("chunk anchors/log_weights length mismatch");
  for (std::size_t a : c.anchors)
    if (a + 1 < win_ || a >= static_cast<std::size_t>(c.states.cols()))
      throw std::invalid_argument("chunk anchor leaves the stored state block");
  n_atoms_ += c.anchors.size();
  chunks_.push_back(std::move(c));
}

void WeightedEmpiricalMeasure::for_each(
    const std::function<void(const paths::Segment&, double)>& fn) const {
  for (const auto& c : chunks_) {
    for (std::size_t j = 0; j < c.anchors.size(); ++j) {
      const long a = static_cast<long>(c.anchors[j]);
      paths::Segment seg(tau_, dt_, c.states.middleCols(a + 1 - static_cast<long>(win_),
                                                        static_cast<long>(win_)));
      fn(seg, c.log_weights[j]);
    }
  }
}

std::vector<double> WeightedEmpiricalMeasure::all_log_weights() const {
  std::vector<double> out;
  out.reserve(n_atoms_);
  for (const auto& c : chunks_)
    out.insert(out.end(), c.log_weights.begin(), c.log_weights.end());
  return out;
}

double WeightedEmpiricalMeasure::ess() const { return stats::effective_sample_size(all_log_weights()); }

stats::MeanVar WeightedEmpiricalMeasure::expect(
    const std::function<double(const paths::Segment&)>& f) const {
  std::vector<double> fv, lw;
  fv.reserve(n_atoms_);
  lw.reserve(n_atoms_);
  for_each([&](const paths::Segment& seg, double w) {
    if (w == -kInf) return;
    fv.push_back(f(seg));
    lw.push_back(w);
  });
  if (fv.empty()) throw std::runtime_error("expect: no atoms with finite weight");
  return stats::weighted_mean_self_normalized(fv, lw);
}

stats::MeanVar WeightedEmpiricalMeasure::chunked_expect(
    const std::function<double(const paths::Segment&)>& f) const {
  // Per-chunk weighted sums, then a ratio estimator across chunks with a
  // delta-method standard error.
  std::vector<double> sw, swf;
  sw.reserve(chunks_.size());
  swf.reserve(chunks_.size());
  // Global max log-weight keeps the exponentials in range.
  double mx = -kInf;
  for (const auto& c : chunks_)
    for (double w : c.log_weights) mx = std::max(mx, w);
  if (mx == -kInf) throw std::runtime_error("chunked_expect: no atoms with finite weight");
  for (const auto& c : chunks_) {
    double s = 0.0, sf = 0.0;
    for (std::size_t j = 0; j < c.anchors.size(); ++j) {
      if (c.log_weights[j] == -kInf) continue;
      const double w = std::exp(c.log_weights[j] - mx);
      const long a = static_cast<long>(c.anchors[j]);
      paths::Segment seg(tau_, dt_, c.states.middleCols(a + 1 - static_cast<long>(win_),
                                                        static_cast<long>(win_)));
      s += w;
      sf += w * f(seg);
    }
    sw.push_back(s);
    swf.push_back(sf);
  }
  const std::size_t n = sw.size();
  double W = 0.0, F = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    W += sw[i];
    F += swf[i];
  }
  if (!(W > 0.0)) throw std::runtime_error("chunked_expect: zero total weight");
  stats::MeanVar out;
  out.mean = F / W;
  out.n = n;
  if (n > 1) {
    const double wbar = W / static_cast<double>(n);
    double s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = (swf[i] - out.mean * sw[i]) / wbar;
      s2 += r * r;
    }
    s2 /= static_cast<double>(n - 1);
    out.var = s2;
    out.std_error = std::sqrt(s2 / static_cast<double>(n));
  }
  return out;
}

WeightedEmpiricalMeasure WeightedEmpiricalMeasure::marginal(double theta) const {
  if (theta > paths::kAlignTol || theta < -tau_ - paths::kAlignTol)
    throw std::out_of_range("marginal: theta outside [-tau, 0]");
  const std::size_t back =
      tau_ == 0.0 ? 0 : static_cast<std::size_t>(std::round(-theta / dt_));
  if (tau_ > 0.0 && std::abs(-static_cast<double>(back) * dt_ - theta) >
                        paths::kAlignTol * std::max(1.0, std::abs(theta)))
    throw std::invalid_argument("marginal: theta not aligned to the segment grid");

  const long d = chunks_.empty() ? 0 : chunks_.front().states.rows();
  Eigen::MatrixXd states(d, static_cast<long>(n_atoms_));
  std::vector<double> lw;
  lw.reserve(n_atoms_);
  long col = 0;
  for (const auto& c : chunks_) {
    for (std::size_t j = 0; j < c.anchors.size(); ++j) {
      states.col(col++) = c.states.col(static_cast<long>(c.anchors[j] - back));
      lw.push_back(c.log_weights[j]);
    }
  }
  auto out = from_states(states, std::move(lw));
  out.low_ess_flag = low_ess_flag;
  out.n_blowups = n_blowups;
  return out;
}

std::pair<std::vector<double>, std::vector<double>> WeightedEmpiricalMeasure::coordinate_sample(
    int coord, double theta) const {
  const auto marg = marginal(theta);
  const auto& c = marg.chunks().front();
  std::vector<double> xs, ws;
  xs.reserve(marg.size());
  for (long j = 0; j < c.states.cols(); ++j)
    if (c.log_weights[static_cast<std::size_t>(j)] != -kInf)
      xs.push_back(c.states(coord, j));
  std::vector<double> lw;
  lw.reserve(xs.size());
  for (double w : c.log_weights)
    if (w != -kInf) lw.push_back(w);
  ws = stats::normalize_log_weights(lw);
  return {std::move(xs), std::move(ws)};
}

WeightedEmpiricalMeasure cesaro_invariant(const models::ModelSpec& model,
                                          const models::PathDrift& Z, const CesaroParams& p) {
  if (!(p.block_length > 0.0)) throw std::invalid_argument("cesaro: block length must be > 0");
  if (p.n_blocks == 0 || p.n_traj == 0)
    throw std::invalid_argument("cesaro: n_blocks and n_traj must be positive");
  const std::size_t steps =
      paths::aligned_index(p.block_length, 0.0, p.dt);  // throws if off-grid
  if (steps == 0) throw std::invalid_argument("cesaro: block length below dt");
  const double tau = Z.tau;
  const std::size_t win = paths::Segment::n_nodes_for(tau, p.dt);

  auto inits = sim::sample_mu(model, p.n_traj, tau, p.dt,
                              rng::Philox::splitmix64(p.seed ^ 0x6d75ull), p.threads);
  std::vector<double> carry(p.n_traj, 0.0);

  WeightedEmpiricalMeasure out(tau, p.dt);
  std::vector<WeightedEmpiricalMeasure::Chunk> block_chunks(p.n_traj);
  std::vector<paths::Segment> ends(p.n_traj, inits.front());
  std::vector<double> end_lw(p.n_traj, 0.0);

  const std::size_t total_blocks = p.burn_blocks + p.n_blocks;
  for (std::size_t b = 0; b < total_blocks; ++b) {
    sim::SimConfig cfg;
    cfg.dt = p.dt;
    cfg.horizon = p.block_length;
    cfg.n_traj = p.n_traj;
    cfg.seed = rng::Philox::splitmix64(p.seed + 0x632be59bd9b4e019ull * (b + 1));
    cfg.mode = sim::Mode::reference_with_weights;
    cfg.threads = p.threads;
    const bool record = b >= p.burn_blocks;

    sim::simulate_each(model, &Z, inits, cfg,
                       [&](std::size_t i, const sim::WeightedTrajectory& traj) {
      ends[i] = paths::segment_at(traj.path, p.block_length, tau);
      if (traj.blown_up) {
        end_lw[i] = -kInf;
      } else {
        end_lw[i] = carry[i] + traj.log_weight_series[steps];
      }
      if (!record) return;
      WeightedEmpiricalMeasure::Chunk c;
      c.states.resize(model.d, static_cast<long>(traj.path.values.size()));
      for (std::size_t k = 0; k < traj.path.values.size(); ++k)
        c.states.col(static_cast<long>(k)) = traj.path.values[k];
      if (!traj.blown_up && carry[i] != -kInf) {
        for (std::size_t r = p.record_stride; r <= steps; r += p.record_stride) {
          c.anchors.push_back(win - 1 + r);
          c.log_weights.push_back(carry[i] + traj.log_weight_series[r]);
        }
      }
      block_chunks[i] = std::move(c);
    });

    std::size_t blow = 0;
    for (double w : end_lw)
      if (w == -kInf) ++blow;
    if (record) {
      out.n_blowups += blow;
      for (auto& c : block_chunks)
        if (!c.anchors.empty()) out.add_chunk(std::move(c));
      block_chunks.assign(p.n_traj, {});
    }

    if (b + 1 == total_blocks) break;
    if (p.resample) {
      auto w = stats::normalize_log_weights(end_lw);
      // Systematic resampling; weights restart from 1 in the next block.
      rng::Philox rgen(cfg.seed, 0xfffffffeull);
      const double u = rgen.uniform();
      std::vector<paths::Segment> next;
      next.reserve(p.n_traj);
      double cum = w[0];
      std::size_t idx = 0;
      for (std::size_t j = 0; j < p.n_traj; ++j) {
        const double pos = (u + static_cast<double>(j)) / static_cast<double>(p.n_traj);
        while (cum < pos && idx + 1 < p.n_traj) cum += w[++idx];
        next.push_back(ends[idx]);
      }
      inits = std::move(next);
      std::fill(carry.begin(), carry.end(), 0.0);
    } else {
      inits = ends;
      carry = end_lw;
    }
  }

  if (out.size() == 0) throw std::runtime_error("cesaro: every trajectory blew up");
  if (out.ess() < 0.01 * static_cast<double>(out.size())) out.low_ess_flag = true;
  return out;
}

DensityEstimate density_ratio(const WeightedEmpiricalMeasure& marg, const models::ModelSpec& model,
                              const GridSpec& spec, std::optional<Eigen::VectorXd> bandwidth,
                              int threads) {
  if (!model.log_mu0 || !model.log_mu0_normalized)
    throw std::invalid_argument("density_ratio: model must expose a normalized mu0 density");
  const int d = model.d;
  if (d > 3) throw std::invalid_argument("density_ratio: gridded estimation limited to d <= 3");
  if (marg.size() < 100) throw std::invalid_argument("density_ratio: too few atoms (< 100)");

  // Atom states at theta = 0 with normalized weights.
  Eigen::MatrixXd X(d, static_cast<long>(marg.size()));
  std::vector<double> lw;
  lw.reserve(marg.size());
  {
    long col = 0;
    for (const auto& c : marg.chunks())
      for (std::size_t j = 0; j < c.anchors.size(); ++j) {
        X.col(col++) = c.states.col(static_cast<long>(c.anchors[j]));
        lw.push_back(c.log_weights[j]);
      }
  }
  const std::vector<double> w = stats::normalize_log_weights(lw);
  const double n_eff = stats::effective_sample_size(lw);
  if (!(n_eff > 0.0) || !std::isfinite(n_eff))
    throw std::invalid_argument("density_ratio: degenerate weights");

  Eigen::VectorXd h;
  if (bandwidth) {
    h = *bandwidth;
    if (h.size() != d || h.minCoeff() <= 0.0)
      throw std::invalid_argument("density_ratio: bandwidth must be positive, one per axis");
  } else {
    // Silverman's rule with the effective sample size.
    h.resize(d);
    for (int j = 0; j < d; ++j) {
      double mean = 0.0, m2 = 0.0;
      for (long i = 0; i < X.cols(); ++i) mean += w[static_cast<std::size_t>(i)] * X(j, i);
      for (long i = 0; i < X.cols(); ++i) {
        const double dx = X(j, i) - mean;
        m2 += w[static_cast<std::size_t>(i)] * dx * dx;
      }
      const double sd = std::sqrt(std::max(m2, 1e-300));
      h(j) = sd * std::pow(4.0 / ((d + 2.0) * n_eff), 1.0 / (d + 4.0));
    }
  }

  DensityEstimate est;
  est.d = d;
  est.bandwidth = h;
  est.axes.resize(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    std::vector<std::pair<double, double>> vw(static_cast<std::size_t>(X.cols()));
    for (long i = 0; i < X.cols(); ++i)
      vw[static_cast<std::size_t>(i)] = {X(j, i), w[static_cast<std::size_t>(i)]};
    const double lo = weighted_quantile(vw, 1e-4) - spec.pad_bandwidths * h(j);
    const double hi = weighted_quantile(vw, 1.0 - 1e-4) + spec.pad_bandwidths * h(j);
    est.axes[static_cast<std::size_t>(j)] =
        Eigen::VectorXd::LinSpaced(spec.nodes_per_axis, lo, hi);
  }

  const TensorGrid tg{est.axes};
  const std::size_t n_grid = tg.n_points();
  est.rho.resize(static_cast<long>(n_grid));

  if (d == 1) {
    // Sorted atoms let each node only visit the +-8h kernel window.
    std::vector<std::pair<double, double>> xs(static_cast<std::size_t>(X.cols()));
    for (long i = 0; i < X.cols(); ++i)
      xs[static_cast<std::size_t>(i)] = {X(0, i), w[static_cast<std::size_t>(i)]};
    std::sort(xs.begin(), xs.end());
    const double hh = h(0);
    par::parallel_for(n_grid, threads, [&](std::size_t f) {
      const double g = est.axes[0](static_cast<long>(f));
      const auto lo = std::lower_bound(xs.begin(), xs.end(),
                                       std::make_pair(g - 8.0 * hh, -kInf));
      const auto hi = std::upper_bound(xs.begin(), xs.end(),
                                       std::make_pair(g + 8.0 * hh, kInf));
      double kde = 0.0;
      for (auto it = lo; it != hi; ++it) {
        const double u = (g - it->first) / hh;
        kde += it->second * std::exp(-0.5 * u * u);
      }
      kde /= hh * std::sqrt(2.0 * M_PI);
      Eigen::VectorXd x(1);
      x(0) = g;
      est.rho(static_cast<long>(f)) = kde / std::max(mu0_density(model, x), kDensityFloor);
    });
  } else {
    par::parallel_for(n_grid, threads, [&](std::size_t f) {
      std::vector<long> idx;
      tg.unflatten(f, idx);
      const Eigen::VectorXd g = tg.point(idx);
      double kde = 0.0;
      for (long i = 0; i < X.cols(); ++i) {
        double q = 0.0;
        for (int j = 0; j < d; ++j) {
          const double u = (g(j) - X(j, i)) / h(j);
          q += u * u;
        }
        if (q < 64.0) kde += w[static_cast<std::size_t>(i)] * std::exp(-0.5 * q);
      }
      kde /= h.prod() * std::pow(2.0 * M_PI, 0.5 * d);
      est.rho(static_cast<long>(f)) = kde / std::max(mu0_density(model, g), kDensityFloor);
    });
  }

  est.mass_check = grid_integral(est, model, [](double r, const Eigen::VectorXd&) { return r; });
  est.flagged = est.mass_check < 0.95 || est.mass_check > 1.05;
  return est;
}

double relative_entropy(const DensityEstimate& est, const models::ModelSpec& model) {
  if (est.flagged)
    throw std::invalid_argument("relative_entropy: density estimate failed its mass check");
  return grid_integral(est, model, [](double r, const Eigen::VectorXd&) {
    const double rr = std::max(r, kDensityFloor);
    return rr * std::log(rr);
  });
}

ExpIntegrability exp_integrability(const std::vector<paths::Segment>& segments,
                                   const models::PathDrift& Z, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("exp_integrability: lambda must be > 0");
  if (segments.empty()) throw std::invalid_argument("exp_integrability: no segments");
  std::vector<double> exps;
  exps.reserve(segments.size());
  for (const auto& s : segments) exps.push_back(lambda * Z.apply(s).squaredNorm());
  const double lse = stats::log_sum_exp(exps);
  ExpIntegrability out;
  out.log_value = lse - std::log(static_cast<double>(exps.size()));
  out.value = std::exp(out.log_value);
  out.max_exponent = *std::max_element(exps.begin(), exps.end());
  out.heavy_tail_flag = out.max_exponent >= lse - std::log(2.0);
  return out;
}

double lp_moment(const DensityEstimate& est, const models::ModelSpec& model, double p) {
  if (!(p > 1.0)) throw std::invalid_argument("lp_moment: p must be > 1");
  if (est.flagged) throw std::invalid_argument("lp_moment: density estimate failed its mass check");
  return grid_integral(
      est, model, [p](double r, const Eigen::VectorXd&) { return std::pow(std::max(r, 0.0), p); });
}

double dirichlet_energy(const DensityEstimate& est, const models::ModelSpec& model,
                        DirichletForm form, double p) {
  for (const auto& a : est.axes)
    if (a.size() < 64)
      throw std::invalid_argument("dirichlet_energy: grid too coarse (< 64 nodes per axis)");
  for (long f = 0; f < est.rho.size(); ++f)
    if (est.rho(f) < 0.0) throw std::invalid_argument("dirichlet_energy: negative density node");

  auto g = [&](double r) {
    const double rr = std::max(r, kDensityFloor);
    switch (form) {
      case DirichletForm::sqrt: return std::sqrt(rr);
      case DirichletForm::log: return std::log(rr);
      case DirichletForm::power: return std::pow(rr, 0.5 * p);
    }
    return 0.0;
  };

  const TensorGrid tg{est.axes};
  const int d = est.d;
  std::vector<long> idx, nb;
  double sum = 0.0;
  for (std::size_t f = 0; f < tg.n_points(); ++f) {
    tg.unflatten(f, idx);
    // Central differences; boundary nodes are skipped (their mu0 mass is
    // negligible on a grid covering the sample region).
    bool interior = true;
    for (int j = 0; j < d; ++j)
      if (idx[static_cast<std::size_t>(j)] == 0 ||
          idx[static_cast<std::size_t>(j)] == est.axes[static_cast<std::size_t>(j)].size() - 1)
        interior = false;
    if (!interior) continue;
    Eigen::VectorXd grad(d);
    for (int j = 0; j < d; ++j) {
      const double hx = est.axes[static_cast<std::size_t>(j)](1) -
                        est.axes[static_cast<std::size_t>(j)](0);
      nb = idx;
      nb[static_cast<std::size_t>(j)] += 1;
      std::size_t fp = 0;
      for (std::size_t k = 0; k < static_cast<std::size_t>(d); ++k)
        fp = fp * static_cast<std::size_t>(est.axes[k].size()) + static_cast<std::size_t>(nb[k]);
      nb[static_cast<std::size_t>(j)] -= 2;
      std::size_t fm = 0;
      for (std::size_t k = 0; k < static_cast<std::size_t>(d); ++k)
        fm = fm * static_cast<std::size_t>(est.axes[k].size()) + static_cast<std::size_t>(nb[k]);
      grad(j) = (g(est.rho(static_cast<long>(fp))) - g(est.rho(static_cast<long>(fm)))) /
                (2.0 * hx);
    }
    const Eigen::VectorXd x = tg.point(idx);
    const Eigen::VectorXd sg = model.sigma(x).transpose() * grad;
    sum += tg.trap_weight(idx) * sg.squaredNorm() * mu0_density(model, x);
  }
  return sum;
}

}  // namespace dsde::measures
