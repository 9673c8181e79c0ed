#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <random>

#include "cavitrack/assembly.hpp"

namespace cavitrack::fixtures {

/// Dense random symmetric matrix with entries in [-1, 1].
inline Eigen::MatrixXd random_symmetric(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = u(rng);
  return a;
}

/// Random pencil with K symmetric positive definite and M symmetric positive
/// definite and well conditioned, stored sparse.
inline MatrixPencil random_pencil(int n, std::mt19937_64& rng) {
  const Eigen::MatrixXd g = random_symmetric(n, rng);
  const Eigen::MatrixXd k = g * g.transpose() / n + 0.1 * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd h = random_symmetric(n, rng);
  const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) + 0.2 * h * h.transpose() / n;
  MatrixPencil p;
  p.K = k.sparseView();
  p.M = m.sparseView();
  return p;
}

/// Sparse 1D Laplacian pencil (linear finite elements on n interior nodes of
/// [0, 1]) with eigenvalues close to (k pi)^2.
inline MatrixPencil laplacian_pencil(int n) {
  const double h = 1.0 / (n + 1);
  std::vector<Eigen::Triplet<double>> kt, mt;
  for (int i = 0; i < n; ++i) {
    kt.emplace_back(i, i, 2.0 / h);
    mt.emplace_back(i, i, 4.0 * h / 6.0);
    if (i + 1 < n) {
      kt.emplace_back(i, i + 1, -1.0 / h);
      kt.emplace_back(i + 1, i, -1.0 / h);
      mt.emplace_back(i, i + 1, h / 6.0);
      mt.emplace_back(i + 1, i, h / 6.0);
    }
  }
  MatrixPencil p;
  p.K.resize(n, n);
  p.M.resize(n, n);
  p.K.setFromTriplets(kt.begin(), kt.end());
  p.M.setFromTriplets(mt.begin(), mt.end());
  return p;
}

}  // namespace cavitrack::fixtures
