#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include "cavitrack/eigensolver.hpp"
#include "cavitrack/oracle.hpp"
#include "cavitrack/pencil.hpp"
#include "support.hpp"

using namespace cavitrack;

namespace {

ParametricPencil scaled_laplacian(std::atomic<int>& calls) {
  return ParametricPencil(
      [&calls](const Eigen::VectorXd& d) {
        ++calls;
        auto p = fixtures::laplacian_pencil(20);
        p.K *= 1.0 + d(0);
        p.M *= 1.0 + d(1) * d(1);
        return p;
      },
      2);
}

}  // namespace

TEST(ParametricPencil, CachesByExactParameterValue) {
  std::atomic<int> calls{0};
  const auto fam = scaled_laplacian(calls);
  const auto a = fam.at(Eigen::Vector2d(0.1, 0.2));
  const auto b = fam.at(Eigen::Vector2d(0.1, 0.2));
  EXPECT_EQ(a.get(), b.get());
  EXPECT_EQ(calls.load(), 1);
  const auto c = fam.at(Eigen::Vector2d(0.1, 0.2000000001));
  EXPECT_NE(a.get(), c.get());
  // signed zeros share a cache entry
  (void)fam.at(Eigen::Vector2d(0.0, 0.0));
  (void)fam.at(Eigen::Vector2d(-0.0, -0.0));
  EXPECT_EQ(fam.cache_size(), 3u);
  EXPECT_EQ(fam.assemblies(), 3);
  fam.clear_cache();
  EXPECT_EQ(fam.cache_size(), 0u);
  EXPECT_THROW(fam.at(Eigen::Vector3d(0, 0, 0)), DomainError);
  EXPECT_THROW(ParametricPencil().at(0.0), DomainError);
}

TEST(ParametricPencil, ConcurrentLookupsReturnOneInstance) {
  std::atomic<int> calls{0};
  const auto fam = scaled_laplacian(calls);
  std::vector<const MatrixPencil*> seen(8);
  std::vector<std::thread> pool;
  for (int i = 0; i < 8; ++i)
    pool.emplace_back([&, i] { seen[i] = fam.at(Eigen::Vector2d(0.3, 0.4)).get(); });
  for (auto& t : pool) t.join();
  for (const auto* p : seen) EXPECT_EQ(p, seen[0]);
  EXPECT_EQ(fam.cache_size(), 1u);
}

TEST(HomotopyPencil, ExactEndpointsAndLinearInterior) {
  std::mt19937_64 rng(8);
  const auto p0 = fixtures::random_pencil(15, rng);
  const auto p1 = fixtures::random_pencil(15, rng);
  const HomotopyPencil h(p0, p1);
  EXPECT_EQ((SpMat(h.at(0.0).K - p0.K)).norm(), 0.0);
  EXPECT_EQ((SpMat(h.at(1.0).M - p1.M)).norm(), 0.0);
  const auto mid = h.at(0.3);
  EXPECT_LT((Eigen::MatrixXd(mid.K) - (0.7 * Eigen::MatrixXd(p0.K) + 0.3 * Eigen::MatrixXd(p1.K))).norm(), 1e-14);
  const auto [dk, dm] = h.derivative();
  EXPECT_LT((Eigen::MatrixXd(dm) - Eigen::MatrixXd(p1.M - p0.M)).norm(), 1e-15);
  EXPECT_TRUE(h.check());
  EXPECT_FALSE(h.is_identity());
  EXPECT_TRUE(HomotopyPencil(p0, p0).is_identity());
  EXPECT_THROW(h.at(1.5), DomainError);
  EXPECT_THROW(h.at(-1e-9), DomainError);
  EXPECT_THROW(HomotopyPencil(p0, fixtures::random_pencil(5, rng)), DomainError);
}

TEST(PillboxPencil, LayoutAndDimension) {
  const auto pb = build_pillbox_pencil(0.05, 0.1);
  EXPECT_EQ(pb.dimension(), 1996);
  EXPECT_EQ(pb.blocks.size(), 7u);
  EXPECT_EQ(pb.pencil.at(0.05)->dimension(), 1996);
  EXPECT_TRUE(check_pencil(*pb.pencil.at(0.05)));
  EXPECT_THROW(build_pillbox_pencil(0.05, 0.1, 0), DomainError);
}

TEST(PillboxPencil, CoarseSpectrumMatchesOracleAndFiltersConstants) {
  const auto pb = build_pillbox_pencil(0.05, 0.1, 2, 2, 8);
  SolveOptions opt;
  opt.spurious = pb.spurious;
  const auto res = solve_smallest(*pb.pencil.at(0.05), 8, 0.0, opt);
  const auto exact = pillbox_spectrum(0.05, 0.1, 8);
  for (int k = 0; k < 8; ++k)
    EXPECT_NEAR(frequency_from_lambda(res.pairs[k].lambda) / exact[k], 1.0, 5e-3) << k;
  EXPECT_EQ(pb.dominant_block(res.pairs[0].vector).family, ModeFamily::TM);
  EXPECT_EQ(pb.dominant_block(res.pairs[0].vector).p, 0);

  // without the filter the constant TE cross-section mode at (pi / l)^2 appears
  const auto raw = solve_dense(*pb.pencil.at(0.05));
  const double k1 = std::pow(std::numbers::pi / 0.1, 2);
  int spurious = 0;
  for (const auto& ep : raw.pairs)
    if (pb.spurious(ep)) {
      ++spurious;
      EXPECT_TRUE(std::abs(ep.lambda / k1 - 1.0) < 1e-9 || std::abs(ep.lambda / (4 * k1) - 1.0) < 1e-9);
    }
  EXPECT_EQ(spurious, 2);
}

TEST(DeformedPencil, ParameterDimensionFollowsTheModel) {
  const GeometryMap base = build_disk_patch(0.05);
  const auto model = deformation_from_station_data(base, greville_stations(base), Eigen::VectorXd::Zero(18),
                                                   Eigen::MatrixXd::Identity(18, 3) * 1e-3);
  const auto fam = build_deformed_pencil(model, 2, 4, BoundaryCondition::Dirichlet);
  EXPECT_EQ(fam.parameter_dimension(), 3);
  const auto p0 = fam.at(Eigen::VectorXd::Zero(3));
  const auto ref = assemble(base, make_space(2, 4, BoundaryCondition::Dirichlet));
  EXPECT_LT((SpMat(p0->K - ref.K)).norm(), 1e-14 * ref.K.norm());
}
