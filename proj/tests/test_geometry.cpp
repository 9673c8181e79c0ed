#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cavitrack/geometry.hpp"
#include "cavitrack/kl.hpp"

using namespace cavitrack;

namespace {

std::vector<double> as_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST(DiskPatch, AreaAndBoundary) {
  const double r = 0.05;
  const GeometryMap g = build_disk_patch(r);
  EXPECT_NEAR(area(g), std::numbers::pi * r * r, 1e-12);
  for (int i = 0; i <= 10; ++i) {
    const double t = i / 10.0;
    EXPECT_NEAR(g.map(t, 0.0).norm(), r, 1e-15);
    EXPECT_NEAR(g.map(1.0, t).norm(), r, 1e-15);
  }
  EXPECT_NEAR(g.map(0.5, 0.5).norm(), 0.0, 1e-15);
  EXPECT_GT(g.min_jacobian_determinant(16, 3), 0.0);
  EXPECT_THROW(build_disk_patch(0.0), DomainError);
}

TEST(DiskPatch, CornersAreSingular) {
  const GeometryMap g = build_disk_patch(1.0);
  EXPECT_EQ(g.degenerate_corners().size(), 4u);
  EXPECT_THROW(g.map_and_jacobian(0.0, 1.0), SingularityError);
  const auto near = g.map_and_jacobian(1e-3, 1e-3);
  EXPECT_GT(near.jacobian.determinant(), 0.0);
  // Jacobian columns against central differences at an interior point
  const double h = 1e-6;
  const auto e = g.map_and_jacobian(0.3, 0.7);
  const Eigen::Vector2d du = (g.map(0.3 + h, 0.7) - g.map(0.3 - h, 0.7)) / (2 * h);
  EXPECT_LT((e.jacobian.col(0) - du).norm(), 1e-8);
}

TEST(DiskPatch, GrevilleStations) {
  const auto st = greville_stations(build_disk_patch(1.0));
  ASSERT_EQ(st.size(), 9u);
  EXPECT_EQ(st.front(), (Param2{0.0, 0.0}));
  EXPECT_EQ(st[4], (Param2{0.5, 0.5}));
}

TEST(Deformation, ZeroParametersGiveTheBaseGeometry) {
  const GeometryMap base = build_disk_patch(0.05);
  const auto st = greville_stations(base);
  const Eigen::MatrixXd modes = Eigen::MatrixXd::Random(18, 3) * 1e-3;
  const auto model = deformation_from_station_data(base, st, Eigen::VectorXd::Zero(18), modes);
  const GeometryMap g = deform(model, std::vector<double>{0.0, 0.0, 0.0});
  for (std::size_t i = 0; i < base.net().size(); ++i) EXPECT_EQ(g.net().points[i], base.net().points[i]);
  EXPECT_THROW(deform(model, std::vector<double>{0.0, 0.0}), DomainError);
}

TEST(Deformation, RigidTranslationPreservesArea) {
  const GeometryMap base = build_disk_patch(0.05);
  const auto st = greville_stations(base);
  Eigen::MatrixXd modes(18, 1);
  for (int s = 0; s < 9; ++s) modes.block<2, 1>(2 * s, 0) << 0.01, -0.004;
  const auto model = deformation_from_station_data(base, st, Eigen::VectorXd::Zero(18), modes);
  const GeometryMap g = deform(model, std::vector<double>{1.0});
  EXPECT_NEAR(area(g), area(base), 1e-14);
  EXPECT_LT((g.map(0.5, 0.5) - Eigen::Vector2d(0.01, -0.004)).norm(), 1e-14);
}

TEST(Deformation, CornerConstraintKeepsRandomFieldsValid) {
  const GeometryMap base = build_disk_patch(0.05);
  const auto st = greville_stations(base);
  const CornerConstraint cc(base);
  EXPECT_EQ(cc.matrix().rows(), 8);
  std::mt19937 rng(9);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd modes(18, 4);
  for (Eigen::Index i = 0; i < modes.size(); ++i) modes(i) = 1e-3 * n01(rng);
  const auto model = deformation_from_station_data(base, st, Eigen::VectorXd::Zero(18), modes);
  for (const auto& f : model.mode_fields) {
    Eigen::VectorXd x(18);
    for (int i = 0; i < 9; ++i) x.segment<2>(2 * i) = f[i];
    EXPECT_LT((cc.matrix() * x).norm(), 1e-15);
  }
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> delta(4);
    for (auto& d : delta) d = 3.0 * n01(rng);
    EXPECT_NO_THROW(deform(model, delta)) << trial;
  }
}

TEST(Deformation, FoldedGeometryIsRejected) {
  const GeometryMap base = build_disk_patch(0.05);
  Eigen::MatrixXd modes = Eigen::MatrixXd::Zero(18, 1);
  modes(8) = 0.2;  // drag the centre station far outside the disk
  const auto model = deformation_from_station_data(base, greville_stations(base), Eigen::VectorXd::Zero(18), modes);
  EXPECT_THROW(deform(model, std::vector<double>{1.0}), InvalidDeformationError);
}

TEST(Deformation, FromKlModel) {
  const GeometryMap base = build_disk_patch(0.05);
  Eigen::VectorXd variances(18);
  for (int i = 0; i < 18; ++i) variances(i) = 1.0 / (1 + i);
  const Eigen::MatrixXd cov = correlated_covariance(variances, 4) * 1e-8;
  const auto obs = generate_synthetic_observations(cov, Eigen::VectorXd::Zero(18), 300, 5);
  const KLModel kl = fit_kl(obs, 0.9);
  const auto model = deformation_from_kl(kl, base, greville_stations(base));
  EXPECT_EQ(model.num_modes(), kl.truncation());
  const Eigen::VectorXd delta = Eigen::VectorXd::Constant(kl.truncation(), 0.5);
  EXPECT_NO_THROW(deform(model, as_vector(delta)));

  KLModel wrong = kl;
  wrong.mean = Eigen::VectorXd::Zero(10);
  EXPECT_THROW(deformation_from_kl(wrong, base, greville_stations(base)), DomainError);
}
