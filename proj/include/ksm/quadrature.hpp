#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace ksm {

struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;  // sum to 1
};

// Gauss-Hermite rule for E[f(X)], X ~ N(0, 1), by Golub-Welsch on the
// Jacobi matrix of the probabilists' Hermite polynomials.
inline GaussHermiteRule gauss_hermite(std::size_t count) {
  const auto n = static_cast<Eigen::Index>(count);
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 1; j < n; ++j) {
    const double off = std::sqrt(static_cast<double>(j));
    jacobi(j, j - 1) = off;
    jacobi(j - 1, j) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  GaussHermiteRule rule;
  rule.nodes.resize(count);
  rule.weights.resize(count);
  for (Eigen::Index j = 0; j < n; ++j) {
    rule.nodes[j] = solver.eigenvalues()(j);
    const double v0 = solver.eigenvectors()(0, j);
    rule.weights[j] = v0 * v0;
  }
  // Symmetrize: removes the eigensolver's O(eps) asymmetry.
  for (std::size_t j = 0; j < count / 2; ++j) {
    const std::size_t m = count - 1 - j;
    const double x = 0.5 * (rule.nodes[m] - rule.nodes[j]);
    const double w = 0.5 * (rule.weights[m] + rule.weights[j]);
    rule.nodes[j] = -x;
    rule.nodes[m] = x;
    rule.weights[j] = rule.weights[m] = w;
  }
  if (count % 2 == 1) rule.nodes[count / 2] = 0.0;
  return rule;
}

}  // namespace ksm
