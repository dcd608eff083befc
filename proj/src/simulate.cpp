#include "dsde/simulate.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "dsde/parallel.hpp"

namespace dsde::sim {

namespace {

std::size_t checked_steps(double horizon, double dt) {
  const double k = std::round(horizon / dt);
  if (k < 0.0 || std::abs(k * dt - horizon) > paths::kAlignTol * std::max(1.0, horizon))
    throw std::invalid_argument("horizon must be a nonnegative integer multiple of dt");
  return static_cast<std::size_t>(k);
}

bool finite(const Eigen::VectorXd& x) { return x.allFinite(); }

}  // namespace

void simulate_each(const models::ModelSpec& model, const models::PathDrift* Z,
                   const std::vector<paths::Segment>& inits, const SimConfig& cfg,
                   const TrajectorySink& sink) {
  if (inits.empty()) throw std::invalid_argument("simulate: at least one initial segment");
  if (inits.size() != 1 && inits.size() != cfg.n_traj)
    throw std::invalid_argument("simulate: inits must have size 1 or n_traj");
  if (cfg.mode != Mode::reference && Z == nullptr)
    throw std::invalid_argument("simulate: drift Z required in perturbed/weighted modes");

  const std::size_t n_steps = checked_steps(cfg.horizon, cfg.dt);
  const double tau = inits.front().tau();
  for (const auto& s : inits) {
    if (s.tau() != tau) throw std::invalid_argument("simulate: mixed init delay horizons");
    if (s.dim() != model.d) throw std::invalid_argument("simulate: init dimension mismatch");
    if (tau > 0.0 && std::abs(s.dt() - cfg.dt) > paths::kAlignTol)
      throw std::invalid_argument("simulate: init segment dt must equal cfg.dt");
  }
  if (Z != nullptr && Z->tau > tau + paths::kAlignTol)
    throw std::invalid_argument("simulate: drift needs a longer delay window than init provides");
  const std::size_t win = tau > 0.0 ? paths::Segment::n_nodes_for(tau, cfg.dt) : 1;
  const double sq_dt = std::sqrt(cfg.dt);
  const bool with_z = (cfg.mode != Mode::reference);
  const bool weighted = (cfg.mode == Mode::reference_with_weights);
  const bool perturbed = (cfg.mode == Mode::perturbed_direct);

  par::parallel_for(cfg.n_traj, cfg.threads, [&](std::size_t i) {
    rng::Philox gen(cfg.seed, i);
    const paths::Segment& init = inits.size() == 1 ? inits.front() : inits[i];

    WeightedTrajectory traj;
    traj.tau = tau;
    traj.path.grid = paths::TimeGrid(-tau, cfg.dt, n_steps + win - 1);
    traj.path.values.resize(n_steps + win);
    for (std::size_t k = 0; k < win; ++k) traj.path.values[k] = init.node(k);
    traj.dW.resize(n_steps);
    if (with_z) traj.z_values.resize(n_steps);
    traj.log_weight_series.assign(n_steps + 1, 0.0);

    // Rolling window, chronological order; column win-1 is the current state.
    Eigen::MatrixXd window(model.d, win);
    for (std::size_t k = 0; k < win; ++k) window.col(static_cast<long>(k)) = init.node(k);

    Eigen::VectorXd x = init.back();
    Eigen::VectorXd dw(model.m);
    double log_w = 0.0;
    for (std::size_t k = 0; k < n_steps; ++k) {
      for (int j = 0; j < model.m; ++j) dw(j) = sq_dt * gen.normal();
      traj.dW[k] = dw;

      Eigen::VectorXd drift = model.drift(x);
      const Eigen::MatrixXd sig = model.sigma(x);
      if (with_z) {
        const paths::Segment seg = tau > 0.0 ? paths::Segment(tau, cfg.dt, window)
                                             : paths::Segment::single(x);
        const Eigen::VectorXd z = Z->apply(seg);
        if (z.size() != model.m)
          throw std::invalid_argument("simulate: Z dimension must equal noise dimension");
        traj.z_values[k] = z;
        if (perturbed) drift += sig * z;
        if (weighted) {
          log_w += z.dot(dw) - 0.5 * z.squaredNorm() * cfg.dt;
        }
      }
      x += drift * cfg.dt + sig * dw;
      if (!finite(x)) {
        traj.blown_up = true;
        traj.blowup_step = k;
        // Freeze the path at the last finite state; estimators skip it.
        for (std::size_t r = k; r < n_steps; ++r) {
          traj.path.values[win + r] = traj.path.values[win + r - 1];
          traj.log_weight_series[r + 1] = traj.log_weight_series[r];
        }
        break;
      }
      traj.path.values[win + k] = x;
      if (weighted) traj.log_weight_series[k + 1] = log_w;
      if (win > 1) {
        window.leftCols(static_cast<long>(win - 1)) =
            window.rightCols(static_cast<long>(win - 1)).eval();
        window.col(static_cast<long>(win - 1)) = x;
      }
    }
    sink(i, traj);
  });
}

Batch simulate(const models::ModelSpec& model, const models::PathDrift* Z,
               const std::vector<paths::Segment>& inits, const SimConfig& cfg) {
  Batch batch;
  batch.dt = cfg.dt;
  batch.tau = inits.front().tau();
  batch.mode = cfg.mode;
  batch.trajs.resize(cfg.n_traj);
  simulate_each(model, Z, inits, cfg,
                [&](std::size_t i, const WeightedTrajectory& t) { batch.trajs[i] = t; });
  for (const auto& t : batch.trajs)
    if (t.blown_up) ++batch.n_blowups;
  return batch;
}

std::vector<Eigen::VectorXd> sample_mu0(const models::ModelSpec& model, std::size_t n,
                                        std::uint64_t seed, models::McmcDiagnostics* diag) {
  if (model.exact_sampler) {
    std::vector<Eigen::VectorXd> out(n);
    rng::Philox gen(seed, 0xa0a0a0a0ull);
    for (std::size_t i = 0; i < n; ++i) out[i] = model.exact_sampler(gen);
    return out;
  }
  if (model.mcmc_sampler) return model.mcmc_sampler(n, seed, diag);
  throw std::invalid_argument("model has no mu0 sampler");
}

std::vector<paths::Segment> sample_mu(const models::ModelSpec& model, std::size_t n, double tau,
                                      double dt, std::uint64_t seed, int threads) {
  const auto x0 = sample_mu0(model, n, rng::Philox::splitmix64(seed ^ 0x5eedull));
  if (tau == 0.0) {
    std::vector<paths::Segment> out;
    out.reserve(n);
    for (const auto& x : x0) out.push_back(paths::Segment::single(x));
    return out;
  }
  std::vector<paths::Segment> inits;
  inits.reserve(n);
  for (const auto& x : x0) inits.push_back(paths::Segment::single(x));
  SimConfig cfg;
  cfg.dt = dt;
  cfg.horizon = tau;
  cfg.n_traj = n;
  cfg.seed = seed;
  cfg.mode = Mode::reference;
  cfg.threads = threads;
  std::vector<paths::Segment> out(n, paths::Segment::single(x0.front()));
  simulate_each(model, nullptr, inits, cfg, [&](std::size_t i, const WeightedTrajectory& t) {
    out[i] = paths::segment_at(t.path, tau, tau);
  });
  return out;
}

void dump_trajectories(const Batch& batch, const std::string& bin_path,
                       const std::string& sidecar_path, std::uint64_t seed) {
  if (batch.trajs.empty()) throw std::invalid_argument("dump: empty batch");
  const std::size_t n_nodes = batch.trajs.front().path.values.size();
  const auto d = batch.trajs.front().path.values.front().size();
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("dump: cannot open " + bin_path);
  static_assert(std::endian::native == std::endian::little,
                "trajectory dump assumes a little-endian host");
  for (const auto& t : batch.trajs) {
    if (t.path.values.size() != n_nodes)
      throw std::invalid_argument("dump: ragged batch");
    for (const auto& x : t.path.values)
      bin.write(reinterpret_cast<const char*>(x.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(d)));
  }
  std::ofstream side(sidecar_path);
  if (!side) throw std::runtime_error("dump: cannot open " + sidecar_path);
  side << "{\n"
       << "  \"shape\": [" << batch.trajs.size() << ", " << n_nodes << ", " << d << "],\n"
       << "  \"dt\": " << batch.dt << ",\n"
       << "  \"tau\": " << batch.tau << ",\n"
       << "  \"seed\": " << seed << ",\n"
       << "  \"layout\": \"row-major [trajectory][node][coordinate], little-endian float64\"\n"
       << "}\n";
}

std::vector<double> recompute_log_weights(const WeightedTrajectory& traj, double dt) {
  std::vector<double> out(traj.z_values.size() + 1, 0.0);
  double acc = 0.0;
  for (std::size_t k = 0; k < traj.z_values.size(); ++k) {
    acc += traj.z_values[k].dot(traj.dW[k]) - 0.5 * traj.z_values[k].squaredNorm() * dt;
    out[k + 1] = acc;
  }
  return out;
}

}  // namespace dsde::sim
