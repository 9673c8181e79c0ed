#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cavitrack/eigensolver.hpp"
#include "support.hpp"

using namespace cavitrack;
using cavitrack::fixtures::laplacian_pencil;
using cavitrack::fixtures::random_pencil;

namespace {

// exact discrete eigenvalues of the linear-element Laplacian pencil
double laplacian_eigenvalue(int n, int k) {
  const double h = 1.0 / (n + 1);
  const double c = std::cos(k * std::numbers::pi * h);
  return 6.0 / (h * h) * (1.0 - c) / (2.0 + c);
}

void expect_m_orthonormal(const MatrixPencil& p, const std::vector<Eigenpair>& pairs, double tol) {
  for (std::size_t i = 0; i < pairs.size(); ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      const double g = pairs[i].vector.dot(p.M * pairs[j].vector);
      EXPECT_NEAR(g, i == j ? 1.0 : 0.0, tol) << i << "," << j;
    }
}

}  // namespace

TEST(Dense, MatchesClosedForm) {
  const auto p = laplacian_pencil(60);
  const auto res = solve_dense(p);
  ASSERT_EQ(res.pairs.size(), 60u);
  EXPECT_TRUE(res.stats.dense);
  for (int k = 1; k <= 60; ++k)
    EXPECT_NEAR(res.pairs[k - 1].lambda / laplacian_eigenvalue(60, k), 1.0, 1e-12) << k;
  expect_m_orthonormal(p, res.pairs, 1e-12);
}

TEST(Krylov, MatchesClosedFormOnLargeSparsePencil) {
  const int n = 2000;
  const auto p = laplacian_pencil(n);
  const auto res = solve_smallest(p, 8);
  EXPECT_FALSE(res.stats.dense);
  ASSERT_EQ(res.pairs.size(), 8u);
  for (int k = 1; k <= 8; ++k) {
    EXPECT_NEAR(res.pairs[k - 1].lambda / laplacian_eigenvalue(n, k), 1.0, 1e-10) << k;
    EXPECT_LE(res.pairs[k - 1].residual, 1e-10);
  }
  expect_m_orthonormal(p, res.pairs, 1e-10);
  EXPECT_GT(res.stats.linear_solves, 0);
  EXPECT_EQ(res.stats.factorizations, 1);
}

TEST(Krylov, AgreesWithDenseOnRandomPencils) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = random_pencil(80, rng);
    const auto dense = solve_dense(p);
    SolveOptions opt;
    opt.force_sparse = true;
    const auto sparse = solve_smallest(p, 6, 0.0, opt);
    ASSERT_EQ(sparse.pairs.size(), 6u);
    for (int k = 0; k < 6; ++k) {
      EXPECT_NEAR(sparse.pairs[k].lambda, dense.pairs[k].lambda, 1e-9 * dense.pairs[k].lambda);
      // same sign convention, so the vectors agree outright for simple eigenvalues
      EXPECT_LT((sparse.pairs[k].vector - dense.pairs[k].vector).norm(), 1e-6);
    }
  }
}

TEST(Krylov, ShiftSelectsTheSpectrumAbove) {
  const int n = 800;
  const auto p = laplacian_pencil(n);
  const double shift = 0.5 * (laplacian_eigenvalue(n, 4) + laplacian_eigenvalue(n, 5));
  const auto res = solve_smallest(p, 3, shift);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(res.pairs[k].lambda / laplacian_eigenvalue(n, k + 5), 1.0, 1e-10);
}

TEST(Krylov, FindsBothCopiesOfRepeatedEigenvalues) {
  // two uncoupled copies of the same chain: every eigenvalue is double
  const auto one = laplacian_pencil(400);
  MatrixPencil p;
  p.K.resize(800, 800);
  p.M.resize(800, 800);
  std::vector<Eigen::Triplet<double>> kt, mt;
  for (int copy = 0; copy < 2; ++copy) {
    for (int c = 0; c < one.K.outerSize(); ++c)
      for (SpMat::InnerIterator it(one.K, c); it; ++it) kt.emplace_back(it.row() + 400 * copy, it.col() + 400 * copy, it.value());
    for (int c = 0; c < one.M.outerSize(); ++c)
      for (SpMat::InnerIterator it(one.M, c); it; ++it) mt.emplace_back(it.row() + 400 * copy, it.col() + 400 * copy, it.value());
  }
  p.K.setFromTriplets(kt.begin(), kt.end());
  p.M.setFromTriplets(mt.begin(), mt.end());
  const auto res = solve_smallest(p, 6);
  for (int k = 0; k < 6; ++k) EXPECT_NEAR(res.pairs[k].lambda / laplacian_eigenvalue(400, k / 2 + 1), 1.0, 1e-10);
  expect_m_orthonormal(p, res.pairs, 1e-9);
}

TEST(Solve, SignConventionAndNormalization) {
  std::mt19937_64 rng(5);
  const auto p = random_pencil(30, rng);
  for (const auto& ep : solve_dense(p).pairs) {
    Eigen::Index imax = 0;
    ep.vector.cwiseAbs().maxCoeff(&imax);
    EXPECT_GT(ep.vector(imax), 0.0);
    EXPECT_NEAR(ep.vector.dot(p.M * ep.vector), 1.0, 1e-12);
    EXPECT_NEAR(relative_residual(p, ep.lambda, ep.vector), ep.residual, 1e-15);
  }
}

TEST(Solve, SpuriousPredicateDropsPairs) {
  const auto p = laplacian_pencil(50);
  SolveOptions opt;
  const double cut = laplacian_eigenvalue(50, 2) * 1.0001;
  opt.spurious = [cut](const Eigenpair& ep) { return ep.lambda < cut; };
  const auto res = solve_smallest(p, 3, 0.0, opt);
  EXPECT_NEAR(res.pairs[0].lambda / laplacian_eigenvalue(50, 3), 1.0, 1e-12);
}

TEST(Solve, DeterministicForFixedSeed) {
  const auto p = laplacian_pencil(1500);
  const auto a = solve_smallest(p, 5);
  const auto b = solve_smallest(p, 5);
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(a.pairs[k].lambda, b.pairs[k].lambda);
    EXPECT_EQ(a.pairs[k].vector, b.pairs[k].vector);
  }
  EXPECT_EQ(a.stats.linear_solves, b.stats.linear_solves);
}

TEST(Solve, RejectsBadRequests) {
  const auto p = laplacian_pencil(10);
  EXPECT_THROW(solve_smallest(p, 0), DomainError);
  EXPECT_THROW(solve_smallest(p, 11), DomainError);
  EXPECT_THROW(solve_smallest(p, 3, 1e9), ConvergenceError);
}
