#include "dsde/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace dsde::quad {

Rule1D gauss_hermite_normal(int order) {
  if (order < 1) throw std::invalid_argument("quadrature order must be >= 1");
  // Jacobi matrix for Hermite polynomials orthogonal w.r.t. exp(-x^2):
  // zero diagonal, off-diagonal sqrt(k/2).
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double b = std::sqrt(0.5 * k);
    J(k, k - 1) = b;
    J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Rule1D rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  const double sqrt2 = std::sqrt(2.0);
  for (int i = 0; i < order; ++i) {
    // Physicists' nodes x_i, weights V(0,i)^2 * sqrt(pi); rescale so the
    // weight function becomes the standard normal density.
    rule.nodes[i] = sqrt2 * es.eigenvalues()(i);
    rule.weights[i] = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
  }
  return rule;
}

double gauss_hermite_expect(const Rule1D& rule, const std::function<double(double)>& f,
                            double mean, double stddev) {
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    acc += rule.weights[i] * f(mean + stddev * rule.nodes[i]);
  return acc;
}

Rule1D trapezoid(double a, double b, int n) {
  if (n < 2) throw std::invalid_argument("trapezoid needs >= 2 nodes");
  Rule1D rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double h = (b - a) / (n - 1);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = a + i * h;
    rule.weights[i] = (i == 0 || i == n - 1) ? 0.5 * h : h;
  }
  return rule;
}

double trapezoid2d(const Rule1D& gx, const Rule1D& gy,
                   const std::function<double(double, double)>& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < gx.nodes.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < gy.nodes.size(); ++j)
      row += gy.weights[j] * f(gx.nodes[i], gy.nodes[j]);
    acc += gx.weights[i] * row;
  }
  return acc;
}

}  // namespace dsde::quad
