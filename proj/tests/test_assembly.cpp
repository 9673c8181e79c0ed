#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cavitrack/assembly.hpp"
#include "cavitrack/eigensolver.hpp"
#include "cavitrack/geometry.hpp"
#include "cavitrack/oracle.hpp"

using namespace cavitrack;

namespace {

GeometryMap rectangle(double a, double b) {
  ControlNet<2> net;
  net.shape = {2, 2};
  net.points = {Vec2(0, 0), Vec2(a, 0), Vec2(0, b), Vec2(a, b)};
  net.weights = {1, 1, 1, 1};
  const BSplineBasis lin(KnotVector({0, 0, 1, 1}, 1));
  return GeometryMap(net, lin, lin);
}

}  // namespace

TEST(Space, DofCounts) {
  EXPECT_EQ(make_space(2, 16, BoundaryCondition::Neumann).num_dofs(), 324);
  EXPECT_EQ(make_space(2, 16, BoundaryCondition::Dirichlet).num_dofs(), 256);
  const auto s = make_space(3, 5, BoundaryCondition::Dirichlet);
  EXPECT_EQ(s.num_tensor(), 64);
  EXPECT_EQ(s.num_dofs(), 36);
  EXPECT_EQ(static_cast<int>(eliminated_dofs(s).size()), 28);
}

TEST(Assemble, PencilIsSymmetricAndMassIntegratesArea) {
  const double r = 0.05;
  const auto p = assemble(build_disk_patch(r), make_space(2, 8, BoundaryCondition::Neumann));
  EXPECT_TRUE(check_pencil(p));
  EXPECT_LT(asymmetry(p.K), 1e-12 * max_abs(p.K));
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(p.dimension());
  EXPECT_NEAR(one.dot(p.M * one) / (std::numbers::pi * r * r), 1.0, 1e-8);
  // constants lie in the stiffness kernel
  EXPECT_LT((p.K * one).norm(), 1e-10 * norm1(p.K));
}

TEST(Assemble, RectangleDirichletSpectrum) {
  const double a = 2.0, b = 1.0;
  const auto p = assemble(rectangle(a, b), make_space(3, 12, BoundaryCondition::Dirichlet));
  const auto res = solve_dense(p);
  std::vector<double> exact;
  for (int m = 1; m <= 6; ++m)
    for (int n = 1; n <= 6; ++n)
      exact.push_back(std::numbers::pi * std::numbers::pi * (m * m / (a * a) + n * n / (b * b)));
  std::sort(exact.begin(), exact.end());
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(res.pairs[k].lambda / exact[k], 1.0, 2e-5) << k;
}

TEST(Assemble, RectangleNeumannHasOneZeroMode) {
  const auto p = assemble(rectangle(1.0, 1.0), make_space(2, 6, BoundaryCondition::Neumann));
  const auto res = solve_dense(p);
  EXPECT_NEAR(res.pairs[0].lambda, 0.0, 1e-9);
  EXPECT_NEAR(res.pairs[1].lambda / (std::numbers::pi * std::numbers::pi), 1.0, 1e-3);
}

TEST(Assemble, DiskDirichletConvergesToBesselZero) {
  const double r = 0.05;
  const double exact = std::pow(bessel_zero(0, 1) / r, 2);
  double previous = 1.0;
  for (int elements : {4, 8, 16}) {
    const auto p = assemble(build_disk_patch(r), make_space(2, elements, BoundaryCondition::Dirichlet));
    const double err = std::abs(solve_smallest(p, 1).pairs[0].lambda / exact - 1.0);
    EXPECT_LT(err, previous);
    previous = err;
  }
  EXPECT_LT(previous, 1e-4);
}

TEST(Assemble, ScalesWithTheGeometry) {
  // K is scale invariant in 2D, M scales with the area
  const auto space = make_space(2, 4, BoundaryCondition::Dirichlet);
  const auto p1 = assemble(build_disk_patch(1.0), space);
  const auto p2 = assemble(build_disk_patch(0.5), space);
  EXPECT_LT((SpMat(p1.K - p2.K)).norm(), 1e-12 * p1.K.norm());
  EXPECT_LT((SpMat(0.25 * p1.M - p2.M)).norm(), 1e-14 * p1.M.norm());
}
