#pragma once

// B-spline and NURBS kernel: clamped knot vectors, Cox-de Boor basis
// evaluation with derivatives, rational evaluation on tensor-product control
// nets, and interpolation on spline spaces.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "cavitrack/errors.hpp"

namespace cavitrack {

/// Nondecreasing knot sequence in clamped (open) form.
class KnotVector {
 public:
  KnotVector() = default;

  KnotVector(std::vector<double> knots, int degree) : knots_(std::move(knots)), degree_(degree) {
    if (degree_ < 0) throw DomainError("KnotVector: negative degree");
    if (!std::is_sorted(knots_.begin(), knots_.end()))
      throw DomainError("KnotVector: knots must be nondecreasing");
    const int m = static_cast<int>(knots_.size());
    if (m - degree_ - 1 < degree_ + 1)
      throw DomainError("KnotVector: need at least p+1 basis functions");
    for (int i = 0; i <= degree_; ++i) {
      if (knots_[i] != knots_[0] || knots_[m - 1 - i] != knots_[m - 1])
        throw DomainError("KnotVector: end knots must have multiplicity p+1");
    }
    if (!(knots_.front() < knots_.back())) throw DomainError("KnotVector: empty parameter range");
  }

  /// Clamped knot vector with `elements` uniform spans on [a, b].
  static KnotVector uniform(int degree, int elements, double a = 0.0, double b = 1.0) {
    if (elements < 1) throw DomainError("KnotVector::uniform: need at least one element");
    std::vector<double> k;
    k.reserve(2 * (degree + 1) + elements - 1);
    for (int i = 0; i <= degree; ++i) k.push_back(a);
    for (int e = 1; e < elements; ++e) k.push_back(a + (b - a) * e / elements);
    for (int i = 0; i <= degree; ++i) k.push_back(b);
    return KnotVector(std::move(k), degree);
  }

  [[nodiscard]] int degree() const { return degree_; }
  [[nodiscard]] const std::vector<double>& knots() const { return knots_; }
  [[nodiscard]] int num_basis() const { return static_cast<int>(knots_.size()) - degree_ - 1; }
  [[nodiscard]] double first() const { return knots_.front(); }
  [[nodiscard]] double last() const { return knots_.back(); }

  /// Distinct knot values (element boundaries).
  [[nodiscard]] std::vector<double> breakpoints() const {
    std::vector<double> out;
    for (double k : knots_)
      if (out.empty() || k != out.back()) out.push_back(k);
    return out;
  }

  /// Greville abscissae: averages of p consecutive interior knots.
  [[nodiscard]] std::vector<double> greville() const {
    const int n = num_basis();
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) {
      if (degree_ == 0) {
        g[i] = 0.5 * (knots_[i] + knots_[i + 1]);
        continue;
      }
      double s = 0.0;
      for (int j = 1; j <= degree_; ++j) s += knots_[i + j];
      g[i] = s / degree_;
    }
    return g;
  }

 private:
  std::vector<double> knots_;
  int degree_ = 0;
};

/// B-spline basis over a clamped knot vector.
class BSplineBasis {
 public:
  BSplineBasis() = default;
  explicit BSplineBasis(KnotVector kv) : kv_(std::move(kv)) {}

  [[nodiscard]] const KnotVector& knot_vector() const { return kv_; }
  [[nodiscard]] int degree() const { return kv_.degree(); }
  [[nodiscard]] int size() const { return kv_.num_basis(); }

  /// Index s with knots[s] <= u < knots[s+1]; the last nonempty span at u == last.
  [[nodiscard]] int find_span(double u) const {
    const auto& k = kv_.knots();
    const int p = kv_.degree();
    const int n = kv_.num_basis();
    if (!(u >= k.front() && u <= k.back()))
      throw DomainError("parameter " + std::to_string(u) + " outside knot range");
    if (u >= k[n]) return n - 1;
    // binary search over [p, n)
    auto it = std::upper_bound(k.begin() + p, k.begin() + n + 1, u);
    return static_cast<int>(it - k.begin()) - 1;
  }

 private:
  KnotVector kv_;
};

struct BasisValues {
  int span = 0;                ///< basis functions span-p .. span are nonzero
  std::vector<double> values;  ///< p+1 entries
  [[nodiscard]] int first_index(int degree) const { return span - degree; }
};

struct BasisDerivatives {
  int span = 0;
  Eigen::MatrixXd ders;  ///< (order+1) x (p+1); row k holds the k-th derivatives
};

inline BasisValues eval_basis(const BSplineBasis& basis, double u) {
  const auto& k = basis.knot_vector().knots();
  const int p = basis.degree();
  BasisValues out;
  out.span = basis.find_span(u);
  out.values.assign(p + 1, 0.0);
  std::vector<double> left(p + 1), right(p + 1);
  out.values[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = u - k[out.span + 1 - j];
    right[j] = k[out.span + j] - u;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = out.values[r] / (right[r + 1] + left[j - r]);
      out.values[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    out.values[j] = saved;
  }
  return out;
}

inline BasisDerivatives eval_basis_derivatives(const BSplineBasis& basis, double u, int order) {
  const auto& k = basis.knot_vector().knots();
  const int p = basis.degree();
  if (order < 0) throw DomainError("eval_basis_derivatives: negative order");
  if (order > p) throw DegreeError("derivative order exceeds spline degree");

  BasisDerivatives out;
  out.span = basis.find_span(u);
  const int span = out.span;

  Eigen::MatrixXd ndu(p + 1, p + 1);
  std::vector<double> left(p + 1), right(p + 1);
  ndu(0, 0) = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = u - k[span + 1 - j];
    right[j] = k[span + j] - u;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu(j, r) = right[r + 1] + left[j - r];  // lower triangle: knot differences
      const double tmp = ndu(r, j - 1) / ndu(j, r);
      ndu(r, j) = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    ndu(j, j) = saved;
  }

  out.ders = Eigen::MatrixXd::Zero(order + 1, p + 1);
  for (int j = 0; j <= p; ++j) out.ders(0, j) = ndu(j, p);

  Eigen::MatrixXd a(2, p + 1);
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a(0, 0) = 1.0;
    for (int kk = 1; kk <= order; ++kk) {
      double d = 0.0;
      const int rk = r - kk;
      const int pk = p - kk;
      if (r >= kk) {
        a(s2, 0) = a(s1, 0) / ndu(pk + 1, rk);
        d = a(s2, 0) * ndu(rk, pk);
      }
      const int j1 = (rk >= -1) ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? kk - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a(s2, j) = (a(s1, j) - a(s1, j - 1)) / ndu(pk + 1, rk + j);
        d += a(s2, j) * ndu(rk + j, pk);
      }
      if (r <= pk) {
        a(s2, kk) = -a(s1, kk - 1) / ndu(pk + 1, r);
        d += a(s2, kk) * ndu(r, pk);
      }
      out.ders(kk, r) = d;
      std::swap(s1, s2);
    }
  }
  int factor = p;
  for (int kk = 1; kk <= order; ++kk) {
    out.ders.row(kk) *= factor;
    factor *= (p - kk);
  }
  return out;
}

/// Control points with positive weights on a tensor-product index grid.
/// Point (i0, i1, ...) is stored at i0 + shape[0] * (i1 + shape[1] * ...).
template <int Dim>
struct ControlNet {
  using Point = Eigen::Matrix<double, Dim, 1>;

  std::vector<Point> points;
  std::vector<double> weights;
  std::vector<int> shape;

  [[nodiscard]] std::size_t size() const { return points.size(); }

  void validate() const {
    if (points.size() != weights.size())
      throw DomainError("ControlNet: points and weights differ in length");
    std::size_t prod = 1;
    for (int s : shape) {
      if (s < 1) throw DomainError("ControlNet: nonpositive shape entry");
      prod *= static_cast<std::size_t>(s);
    }
    if (prod != points.size()) throw DomainError("ControlNet: shape does not match point count");
    for (double w : weights)
      if (!(w > 0.0)) throw DomainError("ControlNet: weights must be strictly positive");
  }
};

namespace detail {

// Nonzero tensor-product basis functions at u, as (flat index, value) pairs.
inline void tensor_basis(std::span<const BSplineBasis> bases, std::span<const double> u,
                         const std::vector<int>& shape, std::vector<int>& index,
                         std::vector<double>& value) {
  const std::size_t dims = bases.size();
  if (u.size() != dims || shape.size() != dims)
    throw DomainError("tensor basis: dimension mismatch");
  std::vector<BasisValues> per_dir(dims);
  std::size_t count = 1;
  for (std::size_t d = 0; d < dims; ++d) {
    if (bases[d].size() != shape[d]) throw DomainError("tensor basis: basis size != net shape");
    per_dir[d] = eval_basis(bases[d], u[d]);
    count *= per_dir[d].values.size();
  }
  index.assign(count, 0);
  value.assign(count, 1.0);
  std::vector<int> odo(dims, 0);
  for (std::size_t c = 0; c < count; ++c) {
    int flat = 0;
    int stride = 1;
    double v = 1.0;
    for (std::size_t d = 0; d < dims; ++d) {
      const int p = bases[d].degree();
      flat += (per_dir[d].span - p + odo[d]) * stride;
      stride *= shape[d];
      v *= per_dir[d].values[odo[d]];
    }
    index[c] = flat;
    value[c] = v;
    for (std::size_t d = 0; d < dims; ++d) {
      if (++odo[d] < static_cast<int>(per_dir[d].values.size())) break;
      odo[d] = 0;
    }
  }
}

}  // namespace detail

/// Nonzero rational basis functions w_i B_i / sum_j w_j B_j at u.
inline void rational_basis(std::span<const double> weights, std::span<const BSplineBasis> bases,
                           const std::vector<int>& shape, std::span<const double> u,
                           std::vector<int>& index, std::vector<double>& value) {
  detail::tensor_basis(bases, u, shape, index, value);
  double denom = 0.0;
  for (std::size_t c = 0; c < index.size(); ++c) {
    value[c] *= weights[index[c]];
    denom += value[c];
  }
  for (double& v : value) v /= denom;
}

/// Rational (NURBS) evaluation: sum w_i P_i B_i(u) / sum w_i B_i(u).
template <int Dim>
typename ControlNet<Dim>::Point eval_nurbs(const ControlNet<Dim>& net,
                                           std::span<const BSplineBasis> bases,
                                           std::span<const double> u) {
  std::vector<int> index;
  std::vector<double> value;
  rational_basis(net.weights, bases, net.shape, u, index, value);
  typename ControlNet<Dim>::Point x = ControlNet<Dim>::Point::Zero();
  for (std::size_t c = 0; c < index.size(); ++c) x += value[c] * net.points[index[c]];
  return x;
}

/// Curve convenience overload.
template <int Dim>
typename ControlNet<Dim>::Point eval_nurbs(const ControlNet<Dim>& net, const BSplineBasis& basis,
                                           double u) {
  return eval_nurbs<Dim>(net, std::span<const BSplineBasis>(&basis, 1),
                         std::span<const double>(&u, 1));
}

template <int Dim>
struct InterpolatedCurve {
  ControlNet<Dim> net;
  BSplineBasis basis;
  std::vector<double> parameters;  ///< parameter assigned to each sample
};

/// Interpolating B-spline curve of the given degree through `samples`, on a
/// clamped knot vector with uniform interior knots, sampled at its Greville
/// abscissae.
template <int Dim>
InterpolatedCurve<Dim> interpolate_curve(
    const std::vector<typename ControlNet<Dim>::Point>& samples, int degree) {
  const int n = static_cast<int>(samples.size());
  if (degree < 1) throw DomainError("interpolate_curve: degree must be >= 1");
  if (n < degree + 1) throw DomainError("interpolate_curve: need at least degree+1 samples");

  InterpolatedCurve<Dim> out;
  out.basis = BSplineBasis(KnotVector::uniform(degree, n - degree));
  out.parameters = out.basis.knot_vector().greville();

  Eigen::MatrixXd colloc = Eigen::MatrixXd::Zero(n, n);
  for (int r = 0; r < n; ++r) {
    const auto bv = eval_basis(out.basis, out.parameters[r]);
    for (int j = 0; j <= degree; ++j) colloc(r, bv.span - degree + j) = bv.values[j];
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(colloc);
  if (!lu.isInvertible()) throw InterpolationError("interpolate_curve: singular collocation system");

  Eigen::MatrixXd rhs(n, Dim);
  for (int r = 0; r < n; ++r) rhs.row(r) = samples[r].transpose();
  const Eigen::MatrixXd coeffs = lu.solve(rhs);

  out.net.shape = {n};
  out.net.weights.assign(n, 1.0);
  out.net.points.resize(n);
  for (int i = 0; i < n; ++i) out.net.points[i] = coeffs.row(i).transpose();
  return out;
}

/// Values on a tensor-product control net that reproduce `values` (one row per
/// station, `cols` columns) at the given parametric stations in the rational
/// basis defined by `weights`. When there are fewer stations than control
/// points, the solution minimizes the squared differences between neighbouring
/// control values, so constant data yields a constant field.
inline Eigen::MatrixXd interpolate_on_net(std::span<const double> weights,
                                          std::span<const BSplineBasis> bases,
                                          const std::vector<int>& shape,
                                          const std::vector<std::vector<double>>& stations,
                                          const Eigen::MatrixXd& values) {
  int n = 1;
  for (int s : shape) n *= s;
  const int s_count = static_cast<int>(stations.size());
  if (values.rows() != s_count) throw InterpolationError("interpolate_on_net: value rows != stations");
  if (s_count > n) throw InterpolationError("interpolate_on_net: more stations than control points");

  Eigen::MatrixXd colloc = Eigen::MatrixXd::Zero(s_count, n);
  std::vector<int> index;
  std::vector<double> value;
  for (int s = 0; s < s_count; ++s) {
    rational_basis(weights, bases, shape, stations[s], index, value);
    for (std::size_t c = 0; c < index.size(); ++c) colloc(s, index[c]) += value[c];
  }

  // graph Laplacian of the control index grid
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  std::vector<int> stride(shape.size(), 1);
  for (std::size_t d = 1; d < shape.size(); ++d) stride[d] = stride[d - 1] * shape[d - 1];
  for (int i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < shape.size(); ++d) {
      const int coord = (i / stride[d]) % shape[d];
      if (coord + 1 < shape[d]) {
        const int j = i + stride[d];
        lap(i, i) += 1.0;
        lap(j, j) += 1.0;
        lap(i, j) -= 1.0;
        lap(j, i) -= 1.0;
      }
    }
  }

  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + s_count, n + s_count);
  kkt.topLeftCorner(n, n) = lap;
  kkt.topRightCorner(n, s_count) = colloc.transpose();
  kkt.bottomLeftCorner(s_count, n) = colloc;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + s_count, values.cols());
  rhs.bottomRows(s_count) = values;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  if (!lu.isInvertible())
    throw InterpolationError("interpolate_on_net: stations do not determine the field");
  const Eigen::MatrixXd sol = lu.solve(rhs);
  return sol.topRows(n);
}

}  // namespace cavitrack
