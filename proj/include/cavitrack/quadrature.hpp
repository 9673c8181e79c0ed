#pragma once

// One-dimensional quadrature rules on reference domains. Nodes are returned in
// ascending order and are exactly symmetric about zero (odd rules carry an exact
// zero), so rules of different order share bit-identical nodes where they coincide.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <vector>

#include "cavitrack/errors.hpp"

namespace cavitrack::quadrature {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

inline void symmetrize(Rule& rule) {
  const auto n = rule.nodes.size();
  for (std::size_t i = 0; i < n / 2; ++i) {
    const double x = 0.5 * (rule.nodes[n - 1 - i] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[n - 1 - i] + rule.weights[i]);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
}

// Eigenvalues of a symmetric tridiagonal Jacobi matrix with zero diagonal.
inline std::vector<double> jacobi_eigenvalues(const std::vector<double>& offdiag, int n) {
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k + 1 < n; ++k) {
    jac(k, k + 1) = offdiag[k];
    jac(k + 1, k) = offdiag[k];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac, Eigen::EigenvaluesOnly);
  std::vector<double> out(es.eigenvalues().data(), es.eigenvalues().data() + n);
  return out;
}

}  // namespace detail

/// Gauss-Legendre rule on [-1, 1]; weights sum to 2.
inline Rule gauss_legendre(int n) {
  if (n < 1) throw DomainError("gauss_legendre: n must be >= 1");
  Rule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    // Chebyshev-like initial guess, descending in i
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      if (n == 1) p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      // p1 = P_n(x), p0 = P_{n-1}(x)
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    rule.nodes[n - 1 - i] = x;
    rule.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  detail::symmetrize(rule);
  return rule;
}

/// Gauss-Hermite rule for the standard normal density (probabilists'
/// normalization); weights sum to 1, exact for polynomials of degree 2n-1.
inline Rule gauss_hermite(int n) {
  if (n < 1) throw DomainError("gauss_hermite: n must be >= 1");
  std::vector<double> offdiag(n > 1 ? n - 1 : 0);
  for (int k = 0; k + 1 < n; ++k) offdiag[k] = std::sqrt(k + 1.0);
  auto guesses = detail::jacobi_eigenvalues(offdiag, n);

  // Orthonormal Hermite recurrence phi_{k+1} = (x phi_k - sqrt(k) phi_{k-1}) / sqrt(k+1)
  auto eval = [n](double x, double& phi_n, double& phi_nm1) {
    double a = 0.0, b = 1.0;
    for (int k = 0; k < n; ++k) {
      const double c = (x * b - std::sqrt(static_cast<double>(k)) * a) / std::sqrt(k + 1.0);
      a = b;
      b = c;
    }
    phi_n = b;
    phi_nm1 = a;
  };

  Rule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = guesses[i];
    double pn = 0.0, pnm1 = 1.0;
    for (int it = 0; it < 50; ++it) {
      eval(x, pn, pnm1);
      // d/dx phi_n = sqrt(n) phi_{n-1}
      const double dx = pn / (std::sqrt(static_cast<double>(n)) * pnm1);
      x -= dx;
      if (std::abs(dx) < 1e-16 * (1.0 + std::abs(x))) break;
    }
    eval(x, pn, pnm1);
    rule.nodes[i] = x;
    rule.weights[i] = 1.0 / (n * pnm1 * pnm1);
  }
  detail::symmetrize(rule);
  return rule;
}

/// Clenshaw-Curtis rule on [-1, 1] (extrema of Chebyshev polynomials); weights sum to 2.
inline Rule clenshaw_curtis(int n) {
  if (n < 1) throw DomainError("clenshaw_curtis: n must be >= 1");
  Rule rule;
  if (n == 1) {
    rule.nodes = {0.0};
    rule.weights = {2.0};
    return rule;
  }
  const int big_n = n - 1;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int k = 0; k <= big_n; ++k) {
    const double theta = k * std::numbers::pi / big_n;
    double s = 0.0;
    for (int j = 1; j <= big_n / 2; ++j) {
      const double b = (2 * j == big_n) ? 1.0 : 2.0;
      s += b / (4.0 * j * j - 1.0) * std::cos(2.0 * j * theta);
    }
    const double c = (k == 0 || k == big_n) ? 1.0 : 2.0;
    // ascending order: node index big_n - k holds cos(theta)
    rule.nodes[big_n - k] = std::cos(theta);
    rule.weights[big_n - k] = c / big_n * (1.0 - s);
  }
  detail::symmetrize(rule);
  return rule;
}

}  // namespace cavitrack::quadrature
