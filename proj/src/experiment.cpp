#include "dsde/experiment.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "dsde/girsanov.hpp"
#include "dsde/inequalities.hpp"
#include "dsde/measures.hpp"
#include "dsde/model.hpp"
#include "dsde/rng.hpp"
#include "dsde/simulate.hpp"
#include "dsde/stats.hpp"

namespace dsde::experiment {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::set<std::string> kModels = {"ou", "hamiltonian", "gruschin", "galerkin_ou"};
const std::set<std::string> kDriftKinds = {"none", "constant", "linear", "delay_linear",
                                           "integral"};
const std::vector<std::string> kAnalysisOrder = {"martingale", "invariant", "density",
                                                 "entropy",    "si_bounds", "ent_bound",
                                                 "lsi",        "hyper",     "harnack"};

models::ModelSpec build_model(const toml::Table& cfg) {
  const std::string name = cfg.get_string("model.name");
  if (name == "ou") {
    models::OuParams p;
    p.d = static_cast<int>(cfg.get_number("model.d", 1));
    return models::build_ou(p);
  }
  if (name == "hamiltonian") {
    models::HamiltonianParams p;
    p.d = static_cast<int>(cfg.get_number("model.d", 1));
    return models::build_hamiltonian(p);
  }
  if (name == "gruschin") {
    models::GruschinParams p;
    p.l = static_cast<int>(cfg.get_number("model.l", 1));
    p.m_exp = static_cast<int>(cfg.get_number("model.m", 2));
    p.c1 = cfg.get_number("model.c1", 0.0);
    p.c2 = cfg.get_number("model.c2", 1.0);
    p.c3 = cfg.get_number("model.c3", 1.0);
    p.c4 = cfg.get_number("model.c4", 1.0);
    return models::build_gruschin(p);
  }
  if (name == "galerkin_ou") {
    models::GalerkinOuParams p;
    p.lambdas = cfg.get_numbers("model.lambdas");
    p.qs = cfg.get_numbers("model.qs");
    return models::build_galerkin_ou(p);
  }
  throw std::runtime_error("config: unknown model '" + name + "'");
}

Eigen::MatrixXd matrix_from(const std::vector<double>& flat, int rows, int cols,
                            const std::string& key) {
  if (static_cast<int>(flat.size()) != rows * cols)
    throw std::runtime_error("config: '" + key + "' must have " + std::to_string(rows * cols) +
                             " entries (row-major " + std::to_string(rows) + "x" +
                             std::to_string(cols) + ")");
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = flat[static_cast<std::size_t>(i * cols + j)];
  return m;
}

std::optional<models::PathDrift> build_drift(const toml::Table& cfg,
                                             const models::ModelSpec& model) {
  const std::string kind = cfg.get_string("drift.kind", "none");
  if (!kDriftKinds.count(kind))
    throw std::runtime_error("config: unknown drift kind '" + kind + "'");
  if (kind == "none") return std::nullopt;
  models::PathDrift z;
  if (kind == "constant") {
    const auto c = cfg.get_numbers("drift.c");
    if (static_cast<int>(c.size()) != model.m)
      throw std::runtime_error("config: drift.c must have one entry per noise dimension");
    z = models::constant_drift(Eigen::Map<const Eigen::VectorXd>(c.data(),
                                                                static_cast<long>(c.size())));
  } else if (kind == "linear") {
    z = models::state_linear_drift(
        matrix_from(cfg.get_numbers("drift.k"), model.m, model.d, "drift.k"));
  } else if (kind == "delay_linear") {
    z = models::delay_linear_drift(
        matrix_from(cfg.get_numbers("drift.k"), model.m, model.d, "drift.k"),
        cfg.get_number("drift.tau"));
  } else if (kind == "integral") {
    const Eigen::MatrixXd K =
        matrix_from(cfg.get_numbers("drift.k"), model.m, model.d, "drift.k");
    z = models::integral_drift([K](const Eigen::VectorXd& x) { return Eigen::VectorXd(K * x); },
                               cfg.get_number("drift.tau"));
  }
  if (cfg.has("drift.truncate")) z = models::truncate_drift(z, cfg.get_number("drift.truncate"));
  return z;
}

struct Shared {
  models::ModelSpec model;
  std::optional<models::PathDrift> drift;
  double dt = 0.01;
  std::uint64_t seed = 0;
  int threads = 1;
  std::size_t n_traj = 1000;
  fs::path out_dir;
  bool dump = false;

  std::optional<measures::WeightedEmpiricalMeasure> measure;
  std::optional<measures::DensityEstimate> density;
  std::optional<double> entropy;
  std::vector<paths::Segment> mu_segments;  // lazily sampled

  double drift_tau() const { return drift ? drift->tau : 0.0; }
  const models::PathDrift& require_drift(const std::string& who) const {
    if (!drift) throw std::runtime_error(who + ": requires a non-trivial drift Z");
    return *drift;
  }
  const std::vector<paths::Segment>& mu(std::size_t n) {
    if (mu_segments.size() < n)
      mu_segments = sim::sample_mu(model, n, drift_tau(), dt,
                                   rng::Philox::splitmix64(seed ^ 0x6d7573ull), threads);
    return mu_segments;
  }
};

void write_csv(const fs::path& path, const std::string& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  out << header << "\n";
  out.precision(17);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << "\n";
  }
}

json report_json(const ineq::BoundReport& r) {
  json j{{"name", r.name},        {"lhs", r.lhs},
         {"rhs", r.rhs},          {"precondition_ok", r.precondition_ok},
         {"pass", r.pass},        {"slack", r.slack}};
  for (const auto& [k, v] : r.inputs) j["inputs"][k] = v;
  return j;
}

json analysis_martingale(Shared& sh, const toml::Table& cfg, bool& ok) {
  const auto& Z = sh.require_drift("martingale");
  std::vector<double> times{0.5, 1.0, 2.0};
  if (cfg.has("martingale.times")) times = cfg.get_numbers("martingale.times");
  double horizon = 0.0;
  for (double t : times) horizon = std::max(horizon, t);

  sim::SimConfig sc;
  sc.dt = sh.dt;
  sc.horizon = horizon;
  sc.n_traj = static_cast<std::size_t>(cfg.get_number("martingale.n_traj",
                                                      static_cast<double>(sh.n_traj)));
  sc.seed = rng::Philox::splitmix64(sh.seed ^ 0x6d617274ull);
  sc.mode = sim::Mode::reference_with_weights;
  sc.threads = sh.threads;
  auto inits = sim::sample_mu(sh.model, sc.n_traj, sh.drift_tau(), sh.dt,
                              rng::Philox::splitmix64(sh.seed ^ 0x696e6974ull), sh.threads);
  const sim::Batch batch = sim::simulate(sh.model, &Z, inits, sc);
  if (sh.dump) {
    sim::dump_trajectories(batch, (sh.out_dir / "trajectories.bin").string(),
                           (sh.out_dir / "trajectories.json").string(), sh.seed);
  }
  const auto rep = girsanov::martingale_check(batch, times);
  json j;
  j["pass"] = rep.pass;
  j["low_ess_flag"] = rep.low_ess_flag;
  j["n_blowups"] = batch.n_blowups;
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < times.size(); ++i) {
    j["times"].push_back({{"t", rep.times[i]},
                          {"mean_weight", rep.mean_weight[i]},
                          {"std_error", rep.std_error[i]},
                          {"z_score", rep.z_score[i]},
                          {"ess", rep.ess[i]}});
    rows.push_back({rep.times[i], rep.mean_weight[i], rep.std_error[i], rep.z_score[i],
                    rep.ess[i]});
  }
  write_csv(sh.out_dir / "tables" / "martingale.csv", "t,mean_weight,std_error,z_score,ess",
            rows);
  if (!rep.pass) ok = false;
  return j;
}

json analysis_invariant(Shared& sh, const toml::Table& cfg, bool& ok) {
  const auto& Z = sh.require_drift("invariant");
  measures::CesaroParams cp;
  cp.block_length = cfg.get_number("invariant.block_length", 1.0);
  cp.n_blocks = static_cast<std::size_t>(cfg.get_number("invariant.n_blocks", 10));
  cp.burn_blocks = static_cast<std::size_t>(cfg.get_number("invariant.burn_blocks", 2));
  cp.n_traj = static_cast<std::size_t>(cfg.get_number("invariant.n_traj",
                                                      static_cast<double>(sh.n_traj)));
  cp.dt = sh.dt;
  cp.seed = rng::Philox::splitmix64(sh.seed ^ 0x636573ull);
  cp.threads = sh.threads;
  cp.resample = cfg.get_bool("invariant.resample", true);
  cp.record_stride = static_cast<std::size_t>(cfg.get_number("invariant.record_stride", 1));
  sh.measure = measures::cesaro_invariant(sh.model, Z, cp);

  std::vector<double> thetas{0.0};
  if (cfg.has("invariant.thetas")) thetas = cfg.get_numbers("invariant.thetas");

  json j;
  j["atoms"] = sh.measure->size();
  j["ess"] = sh.measure->ess();
  j["low_ess_flag"] = sh.measure->low_ess_flag;
  j["n_blowups"] = sh.measure->n_blowups;
  std::vector<std::vector<double>> rows;
  for (double th : thetas) {
    json jt{{"theta", th}};
    for (int c = 0; c < sh.model.d; ++c) {
      const auto m1 = sh.measure->chunked_expect(
          [c, th](const paths::Segment& s) { return s.at(th)(c); });
      const auto m2 = sh.measure->chunked_expect(
          [c, th](const paths::Segment& s) { const double v = s.at(th)(c); return v * v; });
      jt["coords"].push_back({{"coord", c},
                              {"mean", m1.mean},
                              {"mean_se", m1.std_error},
                              {"second_moment", m2.mean},
                              {"second_moment_se", m2.std_error},
                              {"variance", m2.mean - m1.mean * m1.mean}});
      rows.push_back({th, static_cast<double>(c), m1.mean, m1.std_error, m2.mean,
                      m2.std_error, m2.mean - m1.mean * m1.mean});
    }
    j["marginals"].push_back(jt);
  }
  write_csv(sh.out_dir / "tables" / "invariant_marginals.csv",
            "theta,coord,mean,mean_se,second_moment,second_moment_se,variance", rows);

  // Marginal invariance across thetas, coordinate 0.
  if (thetas.size() > 1) {
    double max_ks = 0.0;
    for (std::size_t a = 0; a + 1 < thetas.size(); ++a)
      for (std::size_t b = a + 1; b < thetas.size(); ++b) {
        auto [xa, wa] = sh.measure->coordinate_sample(0, thetas[a]);
        auto [xb, wb] = sh.measure->coordinate_sample(0, thetas[b]);
        const double ks = stats::ks_distance_two_sample(xa, wa, xb, wb);
        j["marginal_ks"].push_back({{"theta_a", thetas[a]}, {"theta_b", thetas[b]}, {"ks", ks}});
        max_ks = std::max(max_ks, ks);
      }
    j["max_marginal_ks"] = max_ks;
  }
  if (sh.measure->low_ess_flag) ok = false;
  return j;
}

json analysis_density(Shared& sh, const toml::Table& cfg, bool& ok) {
  if (!sh.measure) throw std::runtime_error("density: requires the invariant analysis first");
  measures::GridSpec gs;
  gs.nodes_per_axis = static_cast<int>(cfg.get_number("density.nodes", 201));
  std::optional<Eigen::VectorXd> bw;
  if (cfg.has("density.bandwidth")) {
    const auto b = cfg.get_numbers("density.bandwidth");
    bw = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<long>(b.size()));
  }
  sh.density = measures::density_ratio(sh.measure->marginal(0.0), sh.model, gs, bw, sh.threads);
  json j;
  j["mass_check"] = sh.density->mass_check;
  j["flagged"] = sh.density->flagged;
  std::vector<double> bwv(sh.density->bandwidth.data(),
                          sh.density->bandwidth.data() + sh.density->bandwidth.size());
  j["bandwidth"] = bwv;
  if (sh.density->d == 1) {
    std::vector<std::vector<double>> rows;
    for (long i = 0; i < sh.density->rho.size(); ++i)
      rows.push_back({sh.density->axes[0](i), sh.density->rho(i)});
    write_csv(sh.out_dir / "tables" / "density_ratio.csv", "x,rho", rows);
  }
  if (sh.density->flagged) ok = false;
  return j;
}

json analysis_entropy(Shared& sh, const toml::Table&, bool&) {
  if (!sh.density) throw std::runtime_error("entropy: requires the density analysis first");
  sh.entropy = measures::relative_entropy(*sh.density, sh.model);
  return json{{"relative_entropy", *sh.entropy}};
}

json analysis_si_bounds(Shared& sh, const toml::Table& cfg, bool& ok) {
  if (!sh.density) throw std::runtime_error("si_bounds: requires the density analysis first");
  const auto& Z = sh.require_drift("si_bounds");
  if (!sh.model.lsi_kappa)
    throw std::runtime_error("si_bounds: model has no known log-Sobolev constant");
  const double kappa = *sh.model.lsi_kappa;
  const double beta = sh.model.lsi_beta.value_or(0.0);

  const double dir_log = measures::dirichlet_energy(*sh.density, sh.model,
                                                    measures::DirichletForm::log);
  const double dir_sqrt = measures::dirichlet_energy(*sh.density, sh.model,
                                                     measures::DirichletForm::sqrt);
  const std::size_t n_mu = static_cast<std::size_t>(cfg.get_number("si_bounds.n_mu", 20000));
  const auto& segs = sh.mu(n_mu);
  double mean_z2 = 0.0;
  for (const auto& s : segs) mean_z2 += Z.apply(s).squaredNorm();
  mean_z2 /= static_cast<double>(segs.size());

  std::vector<double> lambdas{2.0, 5.0, 10.0, 20.0, 50.0};
  if (cfg.has("si_bounds.lambdas")) lambdas = cfg.get_numbers("si_bounds.lambdas");

  json j;
  j["dirichlet_log"] = dir_log;
  j["dirichlet_sqrt"] = dir_sqrt;
  j["mean_Z2"] = mean_z2;
  bool pass = true;
  std::vector<std::vector<double>> rows;
  for (double lam : lambdas) {
    if (!(lam > kappa)) continue;
    const auto ei = measures::exp_integrability(segs, Z, lam);
    const auto [b_sqrt, b_log] = ineq::si_bounds(lam, kappa, beta, ei.log_value, mean_z2);
    const bool ok_sqrt = dir_sqrt <= b_sqrt * 1.05 + 1e-9;
    const bool ok_log = dir_log <= b_log * 1.05 + 1e-9;
    if (!ok_sqrt || !ok_log) pass = false;
    j["grid"].push_back({{"lambda", lam},
                         {"log_mgf", ei.log_value},
                         {"bound_sqrt", b_sqrt},
                         {"bound_log", b_log},
                         {"heavy_tail_flag", ei.heavy_tail_flag},
                         {"pass", ok_sqrt && ok_log}});
    rows.push_back({lam, ei.log_value, b_sqrt, b_log, dir_sqrt, dir_log,
                    ok_sqrt && ok_log ? 1.0 : 0.0});
  }
  write_csv(sh.out_dir / "tables" / "si_bounds.csv",
            "lambda,log_mgf,bound_sqrt,bound_log,dirichlet_sqrt,dirichlet_log,pass", rows);
  j["pass"] = pass;
  if (!pass) ok = false;
  return j;
}

json analysis_ent_bound(Shared& sh, const toml::Table& cfg, bool& ok) {
  if (!sh.entropy) throw std::runtime_error("ent_bound: requires the entropy analysis first");
  const auto& Z = sh.require_drift("ent_bound");
  std::vector<double> t0s{0.1, 0.25, 0.5, 1.0};
  std::vector<double> lambdas{1.0, 2.0, 5.0, 10.0, 20.0};
  if (cfg.has("ent_bound.t0s")) t0s = cfg.get_numbers("ent_bound.t0s");
  if (cfg.has("ent_bound.lambdas")) lambdas = cfg.get_numbers("ent_bound.lambdas");
  const std::size_t n_mu = static_cast<std::size_t>(cfg.get_number("ent_bound.n_mu", 20000));
  const auto& segs = sh.mu(n_mu);
  const double tau = sh.drift_tau();

  json j;
  j["entropy"] = *sh.entropy;
  bool pass = true;
  std::size_t admissible = 0;
  std::vector<std::vector<double>> rows;
  for (double t0 : t0s) {
    const double p0 = ineq::nelson_p0(t0);
    for (double lam : lambdas) {
      const auto ei = measures::exp_integrability(segs, Z, lam);
      const auto eb = ineq::ent_bound(t0, tau, p0, lam, ei.log_value, 0.0);
      json cell{{"t0", t0},
                {"lambda", lam},
                {"p0", p0},
                {"log_mgf", ei.log_value},
                {"rhs", eb.value},
                {"precondition_ok", eb.precondition_ok}};
      if (eb.precondition_ok) {
        ++admissible;
        const bool cell_ok = *sh.entropy <= eb.value + 1e-9;
        cell["pass"] = cell_ok;
        if (!cell_ok) pass = false;
      }
      j["grid"].push_back(cell);
      rows.push_back({t0, lam, p0, ei.log_value, eb.value, eb.precondition_ok ? 1.0 : 0.0});
    }
  }
  write_csv(sh.out_dir / "tables" / "ent_bound.csv", "t0,lambda,p0,log_mgf,rhs,precondition_ok",
            rows);
  if (admissible == 0) pass = false;
  j["n_admissible"] = admissible;
  j["pass"] = pass;
  if (!pass) ok = false;
  return j;
}

std::vector<ineq::TestFunction> default_family(const models::ModelSpec& model) {
  if (model.name == "gruschin") return ineq::polynomial_family_2d();
  return ineq::exponential_family(model.d);
}

json analysis_lsi(Shared& sh, const toml::Table&, bool& ok) {
  const auto res = ineq::lsi_test(sh.model, default_family(sh.model));
  json j;
  j["kappa_hat"] = res.kappa_hat;
  bool pass = std::isfinite(res.kappa_hat);
  std::vector<std::vector<double>> rows;
  for (const auto& r : res.reports) {
    j["reports"].push_back(report_json(r));
    rows.push_back({r.lhs, r.rhs, r.slack, r.pass ? 1.0 : 0.0});
    if (!r.pass) pass = false;
  }
  write_csv(sh.out_dir / "tables" / "lsi.csv", "lhs,rhs,slack,pass", rows);
  j["pass"] = pass;
  if (!pass) ok = false;
  return j;
}

json analysis_hyper(Shared& sh, const toml::Table& cfg, bool& ok) {
  ineq::HyperNormParams hp;
  hp.t0 = cfg.get_number("hyper.t0", 0.5);
  hp.seed = rng::Philox::splitmix64(sh.seed ^ 0x68797065ull);
  const auto family = default_family(sh.model);
  hp.p0 = ineq::nelson_p0(hp.t0);
  const double critical = ineq::hyper_norm(sh.model, family, hp);
  hp.p0 = 0.5 * (1.0 + std::exp(2.0 * hp.t0) + 0.5);
  const double supercritical = ineq::hyper_norm(sh.model, family, hp);
  json j;
  j["t0"] = hp.t0;
  j["critical_norm"] = critical;
  j["supercritical_norm"] = supercritical;
  const bool pass = critical <= 1.0 + 1e-3 && supercritical >= 1.0 + 1e-3;
  j["pass"] = pass;
  if (!pass) ok = false;
  return j;
}

json analysis_harnack(Shared& sh, const toml::Table& cfg, bool& ok) {
  ineq::HarnackParams hp;
  hp.p = cfg.get_number("harnack.p", 2.0);
  hp.t = cfg.get_number("harnack.t", 1.0);
  if (cfg.has("harnack.C")) hp.C = cfg.get_number("harnack.C");
  hp.n_mc = static_cast<std::size_t>(cfg.get_number("harnack.n_mc", 20000));
  hp.seed = rng::Philox::splitmix64(sh.seed ^ 0x6861726eull);
  hp.threads = sh.threads;
  std::vector<double> xs{0.0}, ys{1.0};
  if (cfg.has("harnack.x")) xs = cfg.get_numbers("harnack.x");
  if (cfg.has("harnack.y")) ys = cfg.get_numbers("harnack.y");
  if (static_cast<int>(xs.size()) != sh.model.d || static_cast<int>(ys.size()) != sh.model.d)
    throw std::runtime_error("harnack: point dimensions must match the model");
  hp.point_pairs.push_back(
      {Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<long>(xs.size())),
       Eigen::Map<const Eigen::VectorXd>(ys.data(), static_cast<long>(ys.size()))});

  // Nonnegative test functions only; the inequality needs f >= 0.
  std::vector<ineq::TestFunction> family;
  family.push_back({"one_plus_sq",
                    [](const Eigen::VectorXd& x) { return 1.0 + x.squaredNorm(); },
                    [](const Eigen::VectorXd& x) { return Eigen::VectorXd(2.0 * x); }});
  family.push_back({"exp_half",
                    [](const Eigen::VectorXd& x) { return std::exp(0.5 * x(0)); },
                    nullptr});
  family.push_back({"constant", [](const Eigen::VectorXd&) { return 1.0; }, nullptr});

  const auto reports = ineq::harnack_check(sh.model, family, hp);
  json j;
  bool pass = true;
  std::vector<std::vector<double>> rows;
  for (const auto& r : reports) {
    j["reports"].push_back(report_json(r));
    rows.push_back({r.lhs, r.rhs, r.slack, r.pass ? 1.0 : 0.0});
    if (!r.pass) pass = false;
  }
  write_csv(sh.out_dir / "tables" / "harnack.csv", "lhs,rhs,slack,pass", rows);
  j["pass"] = pass;
  if (!pass) ok = false;
  return j;
}

Shared make_shared_state(const toml::Table& cfg, const CliOverrides& ov) {
  Shared sh;
  sh.model = build_model(cfg);
  sh.drift = build_drift(cfg, sh.model);
  sh.dt = cfg.get_number("sim.dt", 0.01);
  sh.seed = ov.seed ? *ov.seed : static_cast<std::uint64_t>(cfg.get_number("sim.seed"));
  sh.threads = ov.threads ? *ov.threads : static_cast<int>(cfg.get_number("sim.threads", 1));
  sh.n_traj = static_cast<std::size_t>(cfg.get_number("sim.n_traj", 1000));
  sh.out_dir = ov.out_dir ? *ov.out_dir : cfg.get_string("output.dir", "out");
  sh.dump = ov.dump_trajectories;
  fs::create_directories(sh.out_dir / "tables");
  return sh;
}

json config_echo(const toml::Table& cfg) {
  // sim.threads excluded: reports must be identical across thread counts.
  json j = json::object();
  for (const auto& [k, v] : cfg.entries()) {
    if (k == "sim.threads") continue;
    switch (v.kind) {
      case toml::Value::Kind::string: j[k] = v.str; break;
      case toml::Value::Kind::number: j[k] = v.num; break;
      case toml::Value::Kind::boolean: j[k] = v.b; break;
      case toml::Value::Kind::array: {
        json arr = json::array();
        for (const auto& e : v.arr) {
          if (e.kind == toml::Value::Kind::string) arr.push_back(e.str);
          else if (e.kind == toml::Value::Kind::boolean) arr.push_back(e.b);
          else arr.push_back(e.num);
        }
        j[k] = arr;
        break;
      }
    }
  }
  return j;
}

RunOutcome finalize(Shared& sh, json results, bool ok, double wall_s,
                    const std::string& config_text) {
  RunOutcome out;
  results["ok"] = ok;
  out.report["meta"] = {{"version", kVersion},
                        {"wall_time_s", wall_s},
                        {"threads", sh.threads},
                        {"config_text", config_text}};
  out.report["results"] = std::move(results);
  out.ok = ok;
  std::ofstream f(sh.out_dir / "report.json");
  f << out.report.dump(2) << "\n";
  return out;
}

}  // namespace

void validate_config(const toml::Table& cfg) {
  if (!cfg.has("schema_version"))
    throw std::runtime_error("config: missing required key 'schema_version'");
  if (!cfg.has("sim.seed"))
    throw std::runtime_error("config: 'sim.seed' is mandatory (no wall-clock default)");
  const std::string model = cfg.get_string("model.name");
  if (!kModels.count(model)) throw std::runtime_error("config: unknown model '" + model + "'");
  const std::string kind = cfg.get_string("drift.kind", "none");
  if (!kDriftKinds.count(kind))
    throw std::runtime_error("config: unknown drift kind '" + kind + "'");
  if (cfg.has("analyses")) {
    for (const auto& a : cfg.get_strings("analyses")) {
      if (a == "galerkin_sweep") continue;
      if (std::find(kAnalysisOrder.begin(), kAnalysisOrder.end(), a) == kAnalysisOrder.end())
        throw std::runtime_error("config: unknown analysis '" + a + "'");
      // Referenced analyses may carry a parameter block; all parameters have
      // defaults, so only the analysis names themselves are validated here.
    }
  }
  // Exercise the builders so model/drift parameter errors surface now.
  const auto model_spec = build_model(cfg);
  (void)build_drift(cfg, model_spec);
}

RunOutcome run_experiment(const toml::Table& cfg, const std::string& config_text,
                          const CliOverrides& ov) {
  const auto start = std::chrono::steady_clock::now();
  validate_config(cfg);
  Shared sh = make_shared_state(cfg, ov);

  std::vector<std::string> requested;
  if (cfg.has("analyses")) requested = cfg.get_strings("analyses");

  bool ok = true;
  json results;
  results["config"] = config_echo(cfg);
  results["analyses"] = json::object();
  for (const auto& name : kAnalysisOrder) {
    if (std::find(requested.begin(), requested.end(), name) == requested.end()) continue;
    try {
      json j;
      if (name == "martingale") j = analysis_martingale(sh, cfg, ok);
      else if (name == "invariant") j = analysis_invariant(sh, cfg, ok);
      else if (name == "density") j = analysis_density(sh, cfg, ok);
      else if (name == "entropy") j = analysis_entropy(sh, cfg, ok);
      else if (name == "si_bounds") j = analysis_si_bounds(sh, cfg, ok);
      else if (name == "ent_bound") j = analysis_ent_bound(sh, cfg, ok);
      else if (name == "lsi") j = analysis_lsi(sh, cfg, ok);
      else if (name == "hyper") j = analysis_hyper(sh, cfg, ok);
      else if (name == "harnack") j = analysis_harnack(sh, cfg, ok);
      results["analyses"][name] = std::move(j);
    } catch (const std::exception& e) {
      results["analyses"][name] = {{"error", e.what()}};
      ok = false;  // invalidated analysis fails the run
    }
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return finalize(sh, std::move(results), ok, wall, config_text);
}

RunOutcome galerkin_sweep(const toml::Table& cfg, const std::string& config_text,
                          const CliOverrides& ov) {
  const auto start = std::chrono::steady_clock::now();
  validate_config(cfg);
  if (cfg.get_string("model.name") != "galerkin_ou")
    throw std::runtime_error("sweep: model must be galerkin_ou");
  Shared sh = make_shared_state(cfg, ov);

  std::vector<double> levels_raw{2, 4, 8};
  if (cfg.has("sweep.levels")) levels_raw = cfg.get_numbers("sweep.levels");
  const auto lambdas = cfg.get_numbers("model.lambdas");
  const auto qs = cfg.get_numbers("model.qs");
  std::vector<std::size_t> levels;
  for (double lv : levels_raw) {
    const auto n = static_cast<std::size_t>(lv);
    if (n == 0 || n > lambdas.size())
      throw std::runtime_error("sweep: levels must be in [1, number of modes]");
    levels.push_back(n);
  }
  for (std::size_t i = 1; i < levels.size(); ++i)
    if (levels[i] <= levels[i - 1]) throw std::runtime_error("sweep: levels must be ascending");

  // Mode-1 perturbation coefficient (Z(xi) = a xi(0)_1 e_1); default none.
  const double a = cfg.get_number("sweep.mode1_coeff", 0.0);

  bool ok = true;
  json results;
  results["config"] = config_echo(cfg);
  const double target_var = qs[0] * qs[0] / (2.0 * lambdas[0]);
  results["target_mode1_variance"] = target_var;

  struct LevelOut {
    double m2, se;
  };
  std::vector<LevelOut> outs;
  std::vector<std::vector<double>> rows;
  for (std::size_t n : levels) {
    models::GalerkinOuParams gp;
    gp.lambdas.assign(lambdas.begin(), lambdas.begin() + static_cast<long>(n));
    gp.qs.assign(qs.begin(), qs.begin() + static_cast<long>(n));
    const auto model = models::build_galerkin_ou(gp);

    models::PathDrift Z;
    if (a != 0.0) {
      Eigen::MatrixXd K = Eigen::MatrixXd::Zero(model.m, model.d);
      K(0, 0) = a;
      Z = models::state_linear_drift(K);
    } else {
      Z = models::constant_drift(Eigen::VectorXd::Zero(model.m));
    }

    measures::CesaroParams cp;
    cp.block_length = cfg.get_number("invariant.block_length", 1.0);
    cp.n_blocks = static_cast<std::size_t>(cfg.get_number("invariant.n_blocks", 10));
    cp.burn_blocks = static_cast<std::size_t>(cfg.get_number("invariant.burn_blocks", 2));
    cp.n_traj = static_cast<std::size_t>(cfg.get_number("invariant.n_traj",
                                                        static_cast<double>(sh.n_traj)));
    cp.dt = sh.dt;
    cp.seed = rng::Philox::splitmix64(sh.seed + 0x9e3779b97f4a7c15ull * n);
    cp.threads = sh.threads;
    cp.record_stride = static_cast<std::size_t>(cfg.get_number("invariant.record_stride", 1));
    const auto nu = measures::cesaro_invariant(model, Z, cp);

    const auto m1 = nu.chunked_expect([](const paths::Segment& s) { return s.back()(0); });
    const auto m2 = nu.chunked_expect(
        [](const paths::Segment& s) { const double v = s.back()(0); return v * v; });
    const double var = m2.mean - m1.mean * m1.mean;
    outs.push_back({m2.mean, m2.std_error});
    const bool level_ok = a != 0.0 || std::abs(var - target_var) <= 4.0 * m2.std_error;
    if (!level_ok) ok = false;
    results["levels"].push_back({{"n_modes", n},
                                 {"mode1_mean", m1.mean},
                                 {"mode1_mean_se", m1.std_error},
                                 {"mode1_second_moment", m2.mean},
                                 {"mode1_second_moment_se", m2.std_error},
                                 {"mode1_variance", var},
                                 {"ess", nu.ess()},
                                 {"pass", level_ok}});
    rows.push_back({static_cast<double>(n), m1.mean, m1.std_error, m2.mean, m2.std_error, var,
                    level_ok ? 1.0 : 0.0});
  }
  write_csv(sh.out_dir / "tables" / "galerkin_sweep.csv",
            "n_modes,mode1_mean,mode1_mean_se,mode1_m2,mode1_m2_se,mode1_variance,pass", rows);

  // Cross-level drift of the mode-1 estimate.
  double max_drift_ratio = 0.0;
  for (std::size_t i = 1; i < outs.size(); ++i) {
    const double se = std::sqrt(outs[i].se * outs[i].se + outs[i - 1].se * outs[i - 1].se);
    const double ratio = std::abs(outs[i].m2 - outs[i - 1].m2) / std::max(se, 1e-300);
    max_drift_ratio = std::max(max_drift_ratio, ratio);
  }
  results["max_cross_level_drift_se"] = max_drift_ratio;
  if (outs.size() > 1 && max_drift_ratio >= 3.0) ok = false;

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return finalize(sh, std::move(results), ok, wall, config_text);
}

}  // namespace dsde::experiment
