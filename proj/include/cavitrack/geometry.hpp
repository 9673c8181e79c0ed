#pragma once

// Single-patch NURBS geometry maps F : [0,1]^2 -> R^2 for cavity cross-sections
// and their control-point deformations.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "cavitrack/errors.hpp"
#include "cavitrack/kl.hpp"
#include "cavitrack/quadrature.hpp"
#include "cavitrack/splines.hpp"

namespace cavitrack {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Param2 = std::array<double, 2>;

struct MapEval {
  Vec2 point;
  Mat2 jacobian;  ///< columns: dF/du, dF/dv
};

/// Tensor-product NURBS map from the parametric unit square to a 2D domain.
class GeometryMap {
 public:
  GeometryMap() = default;

  /// Validates the net and rejects maps whose Jacobian determinant is not
  /// positive on the interior Gauss points of a 16x16 subdivision.
  GeometryMap(ControlNet<2> net, BSplineBasis bu, BSplineBasis bv,
              std::vector<Param2> degenerate_corners = {})
      : net_(std::move(net)), bases_{std::move(bu), std::move(bv)},
        corners_(std::move(degenerate_corners)) {
    net_.validate();
    if (net_.shape.size() != 2 || net_.shape[0] != bases_[0].size() ||
        net_.shape[1] != bases_[1].size())
      throw DomainError("GeometryMap: net shape does not match bases");
    const double det = min_jacobian_determinant(16, 3);
    if (!(det > 0.0))
      throw InvalidDeformationError("GeometryMap: Jacobian determinant not positive (min " +
                                    std::to_string(det) + ")");
  }

  [[nodiscard]] const ControlNet<2>& net() const { return net_; }
  [[nodiscard]] const std::array<BSplineBasis, 2>& bases() const { return bases_; }
  [[nodiscard]] const std::vector<Param2>& degenerate_corners() const { return corners_; }

  [[nodiscard]] Vec2 map(double u, double v) const {
    const std::array<double, 2> uv{u, v};
    return eval_nurbs<2>(net_, bases_, uv);
  }

  [[nodiscard]] MapEval map_and_jacobian(double u, double v) const {
    for (const auto& c : corners_) {
      if (std::abs(u - c[0]) < 1e-12 && std::abs(v - c[1]) < 1e-12)
        throw SingularityError("map_and_jacobian: evaluation at a degenerate corner");
    }
    return eval_unchecked(u, v);
  }

  /// Minimum det J over the interior Gauss points of a uniform subdivision.
  [[nodiscard]] double min_jacobian_determinant(int spans, int gauss_points) const {
    const auto rule = quadrature::gauss_legendre(gauss_points);
    double det_min = std::numeric_limits<double>::infinity();
    for (int a = 0; a < spans; ++a) {
      for (int b = 0; b < spans; ++b) {
        for (double xi : rule.nodes) {
          for (double eta : rule.nodes) {
            const double u = (a + 0.5 * (xi + 1.0)) / spans;
            const double v = (b + 0.5 * (eta + 1.0)) / spans;
            det_min = std::min(det_min, eval_unchecked(u, v).jacobian.determinant());
          }
        }
      }
    }
    return det_min;
  }

 private:
  [[nodiscard]] MapEval eval_unchecked(double u, double v) const {
    const auto du = eval_basis_derivatives(bases_[0], u, 1);
    const auto dv = eval_basis_derivatives(bases_[1], v, 1);
    const int pu = bases_[0].degree();
    const int pv = bases_[1].degree();
    const int nu = net_.shape[0];

    Vec2 a = Vec2::Zero(), a_u = Vec2::Zero(), a_v = Vec2::Zero();
    double w = 0.0, w_u = 0.0, w_v = 0.0;
    for (int j = 0; j <= pv; ++j) {
      const int jj = dv.span - pv + j;
      for (int i = 0; i <= pu; ++i) {
        const int ii = du.span - pu + i;
        const int idx = ii + nu * jj;
        const double wt = net_.weights[idx];
        const double b = du.ders(0, i) * dv.ders(0, j);
        const double b_u = du.ders(1, i) * dv.ders(0, j);
        const double b_v = du.ders(0, i) * dv.ders(1, j);
        const Vec2& p = net_.points[idx];
        a += wt * b * p;
        a_u += wt * b_u * p;
        a_v += wt * b_v * p;
        w += wt * b;
        w_u += wt * b_u;
        w_v += wt * b_v;
      }
    }
    MapEval out;
    out.point = a / w;
    out.jacobian.col(0) = (a_u - out.point * w_u) / w;
    out.jacobian.col(1) = (a_v - out.point * w_v) / w;
    return out;
  }

  ControlNet<2> net_;
  std::array<BSplineBasis, 2> bases_;
  std::vector<Param2> corners_;
};

/// Bi-quadratic rational square-to-disk patch of radius r centred at the
/// origin. Each parametric edge maps to a quarter circle; the four parametric
/// corners have rank-deficient Jacobians and are marked as degenerate.
inline GeometryMap build_disk_patch(double r) {
  if (!(r > 0.0)) throw DomainError("build_disk_patch: radius must be positive");
  const double s = std::numbers::sqrt2 / 2.0;
  const double e = std::numbers::sqrt2;
  ControlNet<2> net;
  net.shape = {3, 3};
  // row j = 0 (bottom), 1, 2 (top); column i = 0 (left) .. 2 (right)
  net.points = {
      Vec2(-s, -s), Vec2(0.0, -e), Vec2(s, -s),  //
      Vec2(-e, 0.0), Vec2(0.0, 0.0), Vec2(e, 0.0),  //
      Vec2(-s, s), Vec2(0.0, e), Vec2(s, s),
  };
  for (auto& p : net.points) p *= r;
  net.weights = {1.0, s, 1.0, s, 1.0, s, 1.0, s, 1.0};
  const BSplineBasis quad(KnotVector({0, 0, 0, 1, 1, 1}, 2));
  return GeometryMap(std::move(net), quad, quad, {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}});
}

/// Area by tensor Gauss quadrature of |det J| on a uniform subdivision.
inline double area(const GeometryMap& map, int spans = 16, int gauss_points = 6) {
  const auto rule = quadrature::gauss_legendre(gauss_points);
  double total = 0.0;
  const double h = 1.0 / spans;
  for (int a = 0; a < spans; ++a)
    for (int b = 0; b < spans; ++b)
      for (std::size_t i = 0; i < rule.nodes.size(); ++i)
        for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
          const double u = (a + 0.5 * (rule.nodes[i] + 1.0)) * h;
          const double v = (b + 0.5 * (rule.nodes[j] + 1.0)) * h;
          const double det = map.map_and_jacobian(u, v).jacobian.determinant();
          total += std::abs(det) * rule.weights[i] * rule.weights[j] * 0.25 * h * h;
        }
  return total;
}

/// Control-point displacement fields realizing
/// P_i(delta) = P_i + P^mu_i + sum_j delta_j P^j_i.
struct DeformationModel {
  GeometryMap base;
  std::vector<Vec2> mean_field;
  std::vector<std::vector<Vec2>> mode_fields;

  // Station data the fields were interpolated from (empty for hand-built models).
  std::vector<Param2> stations;
  Eigen::VectorXd station_mean;
  Eigen::MatrixXd station_modes;

  [[nodiscard]] int num_modes() const { return static_cast<int>(mode_fields.size()); }

  void validate() const {
    const auto n = base.net().size();
    if (mean_field.size() != n) throw DomainError("DeformationModel: mean field length mismatch");
    for (const auto& f : mode_fields)
      if (f.size() != n) throw DomainError("DeformationModel: mode field length mismatch");
  }
};

/// Control net of the deformed geometry; weights and bases are unchanged.
inline ControlNet<2> deformed_net(const DeformationModel& model, std::span<const double> delta) {
  if (static_cast<int>(delta.size()) != model.num_modes())
    throw DomainError("deform: parameter vector length != number of modes");
  model.validate();
  ControlNet<2> net = model.base.net();
  for (std::size_t i = 0; i < net.points.size(); ++i) {
    Vec2 p = net.points[i] + model.mean_field[i];
    for (std::size_t j = 0; j < delta.size(); ++j) p += delta[j] * model.mode_fields[j][i];
    net.points[i] = p;
  }
  return net;
}

inline GeometryMap deform(const DeformationModel& model, std::span<const double> delta) {
  auto net = deformed_net(model, delta);
  const auto& b = model.base.bases();
  try {
    return GeometryMap(std::move(net), b[0], b[1], model.base.degenerate_corners());
  } catch (const InvalidDeformationError& e) {
    throw InvalidDeformationError(std::string("deform: ") + e.what());
  }
}

/// Greville points of the geometry bases, the default sampling stations for
/// deformation data (3x3 = 9 stations on the disk patch).
inline std::vector<Param2> greville_stations(const GeometryMap& map) {
  const auto gu = map.bases()[0].knot_vector().greville();
  const auto gv = map.bases()[1].knot_vector().greville();
  std::vector<Param2> out;
  for (double v : gv)
    for (double u : gu) out.push_back({u, v});
  return out;
}

/// Interpolates station displacement vectors (row s = (dx, dy) at station s)
/// into a control-point field on the geometry's own rational basis.
inline std::vector<Vec2> interpolate_displacements(const GeometryMap& base,
                                                   const std::vector<Param2>& stations,
                                                   const Eigen::MatrixXd& values) {
  std::vector<std::vector<double>> st;
  st.reserve(stations.size());
  for (const auto& s : stations) st.push_back({s[0], s[1]});
  const Eigen::MatrixXd ctrl =
      interpolate_on_net(base.net().weights, base.bases(), base.net().shape, st, values);
  std::vector<Vec2> field(ctrl.rows());
  for (Eigen::Index i = 0; i < ctrl.rows(); ++i) field[i] = ctrl.row(i).transpose();
  return field;
}

/// Orthogonal projection of control-point displacement fields onto the
/// subspace that keeps each degenerate corner and its two edge neighbours on
/// a common line. A flat corner then stays flat for every parameter value,
/// so the boundary remains tangent-continuous there and det J cannot change
/// sign at the corner.
class CornerConstraint {
 public:
  explicit CornerConstraint(const GeometryMap& base) {
    const auto& net = base.net();
    const int nu = net.shape[0], nv = net.shape[1];
    const auto n = static_cast<Eigen::Index>(2 * net.size());
    std::vector<Eigen::RowVectorXd> rows;
    for (const auto& c : base.degenerate_corners()) {
      const int i = c[0] < 0.5 ? 0 : nu - 1;
      const int j = c[1] < 0.5 ? 0 : nv - 1;
      const int ic = i + nu * j;
      const int ia = (i == 0 ? 1 : nu - 2) + nu * j;
      const int ib = i + nu * (j == 0 ? 1 : nv - 2);
      const Vec2 t = (net.points[ia] - net.points[ic]).normalized();
      const Vec2 normal(-t.y(), t.x());
      for (int nb : {ia, ib}) {
        Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(n);
        g.segment<2>(2 * nb) = normal.transpose();
        g.segment<2>(2 * ic) = -normal.transpose();
        rows.push_back(g);
      }
    }
    g_.resize(static_cast<Eigen::Index>(rows.size()), n);
    for (std::size_t r = 0; r < rows.size(); ++r) g_.row(static_cast<Eigen::Index>(r)) = rows[r];
    if (g_.rows() > 0) gram_ = (g_ * g_.transpose()).ldlt();
  }

  [[nodiscard]] const Eigen::MatrixXd& matrix() const { return g_; }

  [[nodiscard]] std::vector<Vec2> project(const std::vector<Vec2>& field) const {
    if (g_.rows() == 0) return field;
    Eigen::VectorXd x(2 * static_cast<Eigen::Index>(field.size()));
    for (std::size_t i = 0; i < field.size(); ++i) x.segment<2>(2 * static_cast<Eigen::Index>(i)) = field[i];
    x -= g_.transpose() * gram_.solve(g_ * x);
    std::vector<Vec2> out(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) out[i] = x.segment<2>(2 * static_cast<Eigen::Index>(i));
    return out;
  }

 private:
  Eigen::MatrixXd g_;
  Eigen::LDLT<Eigen::MatrixXd> gram_;
};

/// Builds a deformation model from station data laid out as
/// [x_1, y_1, x_2, y_2, ...]: `mean` (length 2S) and `modes` (2S x N_t, columns
/// already scaled, i.e. V_t Sigma_t^{1/2}).
inline DeformationModel deformation_from_station_data(const GeometryMap& base,
                                                      const std::vector<Param2>& stations,
                                                      const Eigen::VectorXd& mean,
                                                      const Eigen::MatrixXd& modes) {
  const Eigen::Index s_count = static_cast<Eigen::Index>(stations.size());
  if (mean.size() != 2 * s_count || modes.rows() != 2 * s_count)
    throw DomainError("deformation data dimension does not match 2 x number of stations");
  auto reshape = [s_count](const Eigen::VectorXd& v) {
    Eigen::MatrixXd m(s_count, 2);
    for (Eigen::Index s = 0; s < s_count; ++s) m.row(s) << v(2 * s), v(2 * s + 1);
    return m;
  };
  DeformationModel model;
  model.base = base;
  model.stations = stations;
  model.station_mean = mean;
  model.station_modes = modes;
  const CornerConstraint corners(base);
  model.mean_field = corners.project(interpolate_displacements(base, stations, reshape(mean)));
  for (Eigen::Index j = 0; j < modes.cols(); ++j)
    model.mode_fields.push_back(
        corners.project(interpolate_displacements(base, stations, reshape(modes.col(j)))));
  return model;
}

/// Deformation fields from a KL model whose variables are station
/// displacements [x_1, y_1, ..., x_S, y_S]: the mean field interpolates mu and
/// mode field j interpolates column j of V_t Sigma_t^{1/2}.
inline DeformationModel deformation_from_kl(const KLModel& kl, const GeometryMap& base,
                                            const std::vector<Param2>& stations) {
  if (kl.dimension() != 2 * static_cast<int>(stations.size()))
    throw DomainError("deformation_from_kl: KL dimension != 2 x number of stations");
  return deformation_from_station_data(base, stations, kl.mean, kl.scaled_modes());
}

}  // namespace cavitrack
