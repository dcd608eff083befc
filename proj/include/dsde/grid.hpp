#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsde::paths {

inline constexpr double kAlignTol = 1e-9;

// Index of t on a grid with spacing dt and origin t0. Throws if t is not
// (numerically) a grid node.
inline std::size_t aligned_index(double t, double t0, double dt) {
  const double k = std::round((t - t0) / dt);
  if (k < -0.5) throw std::invalid_argument("time below grid origin");
  const std::size_t ki = static_cast<std::size_t>(k);
  if (std::abs(t0 + k * dt - t) > kAlignTol * std::max(1.0, std::abs(t)))
    throw std::invalid_argument("time not aligned to grid: t=" + std::to_string(t));
  return ki;
}

struct TimeGrid {
  double t_start = 0.0;
  double dt = 1.0;
  std::size_t n_steps = 0;

  TimeGrid() = default;
  TimeGrid(double t0, double step, std::size_t n) : t_start(t0), dt(step), n_steps(n) {
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  }

  // Node k computed directly, never by repeated addition.
  double node(std::size_t k) const { return t_start + static_cast<double>(k) * dt; }
  double t_end() const { return node(n_steps); }
  std::size_t index_of(double t) const {
    const std::size_t k = aligned_index(t, t_start, dt);
    if (k > n_steps) throw std::out_of_range("time beyond grid end");
    return k;
  }
};

struct Path {
  TimeGrid grid;
  std::vector<Eigen::VectorXd> values;  // n_steps + 1 entries

  const Eigen::VectorXd& at_time(double t) const { return values[grid.index_of(t)]; }
};

// A sampled delay window: values at theta in {-tau, -tau+dt, ..., 0},
// stored as one d x n matrix (column k = value at theta_k). tau must be an
// exact integer multiple of dt; tau = 0 degenerates to a single state.
// Immutable after construction.
class Segment {
 public:
  Segment(double tau, double dt, Eigen::MatrixXd values)
      : tau_(tau), dt_(dt), vals_(std::move(values)) {
    if (tau < 0.0) throw std::invalid_argument("tau must be >= 0");
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
    const std::size_t n = n_nodes_for(tau, dt);
    if (static_cast<std::size_t>(vals_.cols()) != n)
      throw std::invalid_argument("segment length mismatch: expected " + std::to_string(n) +
                                  ", got " + std::to_string(vals_.cols()));
  }

  Segment(double tau, double dt, const std::vector<Eigen::VectorXd>& values)
      : Segment(tau, dt, pack(values)) {}

  static Segment constant(double tau, double dt, const Eigen::VectorXd& x) {
    const std::size_t n = n_nodes_for(tau, dt);
    Eigen::MatrixXd m(x.size(), n);
    for (std::size_t k = 0; k < n; ++k) m.col(static_cast<long>(k)) = x;
    return Segment(tau, dt, std::move(m));
  }
  static Segment single(const Eigen::VectorXd& x) { return Segment(0.0, 1.0, Eigen::MatrixXd(x)); }

  static std::size_t n_nodes_for(double tau, double dt) {
    if (tau == 0.0) return 1;
    const double k = std::round(tau / dt);
    if (std::abs(k * dt - tau) > kAlignTol * std::max(1.0, tau))
      throw std::invalid_argument("tau is not an integer multiple of dt");
    return static_cast<std::size_t>(k) + 1;
  }

  double tau() const { return tau_; }
  double dt() const { return dt_; }
  std::size_t size() const { return static_cast<std::size_t>(vals_.cols()); }
  int dim() const { return static_cast<int>(vals_.rows()); }
  const Eigen::MatrixXd& values() const { return vals_; }

  Eigen::Ref<const Eigen::VectorXd> node(std::size_t i) const {
    return vals_.col(static_cast<long>(i));
  }
  Eigen::Ref<const Eigen::VectorXd> front() const { return vals_.col(0); }  // theta = -tau
  Eigen::Ref<const Eigen::VectorXd> back() const { return vals_.col(vals_.cols() - 1); }

  // Value at grid node theta; theta must be aligned.
  Eigen::Ref<const Eigen::VectorXd> at(double theta) const {
    if (theta < -tau_ - kAlignTol || theta > kAlignTol)
      throw std::out_of_range("theta outside [-tau, 0]");
    if (tau_ == 0.0) return vals_.col(0);
    return vals_.col(static_cast<long>(aligned_index(theta, -tau_, dt_)));
  }

  // Linear interpolation between adjacent nodes; exact at nodes.
  Eigen::VectorXd eval(double theta) const {
    if (theta < -tau_ - kAlignTol || theta > kAlignTol)
      throw std::out_of_range("theta outside [-tau, 0]");
    if (tau_ == 0.0) return vals_.col(0);
    const double s = std::min(std::max((theta + tau_) / dt_, 0.0),
                              static_cast<double>(vals_.cols() - 1));
    const long i = static_cast<long>(std::floor(s));
    if (i + 1 >= vals_.cols()) return vals_.col(vals_.cols() - 1);
    const double w = s - static_cast<double>(i);
    return (1.0 - w) * vals_.col(i) + w * vals_.col(i + 1);
  }

 private:
  static Eigen::MatrixXd pack(const std::vector<Eigen::VectorXd>& values) {
    if (values.empty()) throw std::invalid_argument("segment needs at least one value");
    Eigen::MatrixXd m(values.front().size(), values.size());
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (values[k].size() != m.rows())
        throw std::invalid_argument("segment values have mixed dimensions");
      m.col(static_cast<long>(k)) = values[k];
    }
    return m;
  }

  double tau_;
  double dt_;
  Eigen::MatrixXd vals_;
};

// Extracts the segment window [t - tau, t] from a path; t and tau must be
// grid-aligned and the window must lie inside the path.
inline Segment segment_at(const Path& path, double t, double tau) {
  const double dt = path.grid.dt;
  if (tau == 0.0) return Segment::single(path.at_time(t));
  const std::size_t k1 = path.grid.index_of(t);
  const std::size_t n = Segment::n_nodes_for(tau, dt);
  if (k1 + 1 < n) throw std::out_of_range("segment window extends before path start");
  Eigen::MatrixXd m(path.values.front().size(), n);
  for (std::size_t k = 0; k < n; ++k) m.col(static_cast<long>(k)) = path.values[k1 + 1 - n + k];
  return Segment(tau, dt, std::move(m));
}

inline Eigen::VectorXd eval_segment(const Segment& seg, double theta) { return seg.eval(theta); }

}  // namespace dsde::paths
