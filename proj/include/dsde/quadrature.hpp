#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace dsde::quad {

struct Rule1D {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Hermite rule rescaled to integrate against the standard normal
// density: sum_i w_i f(x_i) ~ E f(Z), Z ~ N(0,1). Nodes via Golub-Welsch.
Rule1D gauss_hermite_normal(int order);

// E f(m + s Z) for Z ~ N(0,1).
double gauss_hermite_expect(const Rule1D& rule, const std::function<double(double)>& f,
                            double mean = 0.0, double stddev = 1.0);

// Trapezoid weights on [a, b] with n nodes (n >= 2).
Rule1D trapezoid(double a, double b, int n);

// Integral of f over the product grid gx x gy with trapezoid weights.
double trapezoid2d(const Rule1D& gx, const Rule1D& gy,
                   const std::function<double(double, double)>& f);

}  // namespace dsde::quad
