#pragma once

// Isogeometric Galerkin assembly of the scalar Helmholtz pencil
//   K_ij = int grad(phi_j) . grad(phi_i) dx,   M_ij = int phi_j phi_i dx
// on a mapped single-patch domain. Fields use tensor B-splines on an
// h-refined uniform knot vector of the parametric square; the geometry stays
// the exact coarse NURBS map.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "cavitrack/errors.hpp"
#include "cavitrack/geometry.hpp"
#include "cavitrack/quadrature.hpp"
#include "cavitrack/splines.hpp"

namespace cavitrack {

using SpMat = Eigen::SparseMatrix<double>;

enum class BoundaryCondition { Dirichlet, Neumann };

inline std::string to_string(BoundaryCondition bc) {
  return bc == BoundaryCondition::Dirichlet ? "dirichlet" : "neumann";
}

/// Sides of the parametric square, combinable as a bit mask.
enum Side : unsigned {
  kLeft = 1u,    // u = 0
  kRight = 2u,   // u = 1
  kBottom = 4u,  // v = 0
  kTop = 8u,     // v = 1
  kAllSides = 15u,
};

/// Tensor B-spline space with optional elimination of boundary functions.
struct DiscreteSpace {
  std::array<BSplineBasis, 2> bases;
  BoundaryCondition bc = BoundaryCondition::Neumann;
  std::vector<int> dof_of;     ///< tensor index -> dof, or -1 when eliminated
  std::vector<int> tensor_of;  ///< dof -> tensor index

  [[nodiscard]] int num_dofs() const { return static_cast<int>(tensor_of.size()); }
  [[nodiscard]] int num_tensor() const { return bases[0].size() * bases[1].size(); }
  [[nodiscard]] int degree() const { return bases[0].degree(); }
};

/// Tensor indices of basis functions with nonzero trace on the selected sides.
inline std::vector<int> boundary_dofs(const std::array<BSplineBasis, 2>& bases, unsigned sides) {
  const int nu = bases[0].size();
  const int nv = bases[1].size();
  std::vector<int> out;
  for (int j = 0; j < nv; ++j) {
    for (int i = 0; i < nu; ++i) {
      const bool on = ((sides & kLeft) && i == 0) || ((sides & kRight) && i == nu - 1) ||
                      ((sides & kBottom) && j == 0) || ((sides & kTop) && j == nv - 1);
      if (on) out.push_back(i + nu * j);
    }
  }
  return out;
}

inline std::vector<int> boundary_dofs(const DiscreteSpace& space, unsigned sides) {
  return boundary_dofs(space.bases, sides);
}

/// Indices removed from the space: the full boundary ring for Dirichlet, none for Neumann.
inline std::vector<int> eliminated_dofs(const DiscreteSpace& space) {
  if (space.bc == BoundaryCondition::Neumann) return {};
  return boundary_dofs(space, kAllSides);
}

inline DiscreteSpace make_space(std::array<BSplineBasis, 2> bases, BoundaryCondition bc) {
  DiscreteSpace s;
  s.bases = std::move(bases);
  s.bc = bc;
  const int n = s.num_tensor();
  std::vector<bool> removed(n, false);
  if (bc == BoundaryCondition::Dirichlet)
    for (int idx : boundary_dofs(s.bases, kAllSides)) removed[idx] = true;
  s.dof_of.assign(n, -1);
  for (int t = 0; t < n; ++t) {
    if (removed[t]) continue;
    s.dof_of[t] = static_cast<int>(s.tensor_of.size());
    s.tensor_of.push_back(t);
  }
  return s;
}

/// Uniform h-refined space of the given degree with `elements` spans per direction.
inline DiscreteSpace make_space(int degree, int elements, BoundaryCondition bc) {
  if (degree < 1) throw DomainError("make_space: degree must be >= 1");
  const BSplineBasis b(KnotVector::uniform(degree, elements));
  return make_space({b, b}, bc);
}

/// Symmetric pair (K, M) of the generalized eigenproblem K e = lambda M e.
struct MatrixPencil {
  SpMat K;
  SpMat M;
  [[nodiscard]] Eigen::Index dimension() const { return K.rows(); }
};

/// Max column sum; equals the max row sum for symmetric matrices.
inline double norm1(const SpMat& a) {
  double best = 0.0;
  for (Eigen::Index c = 0; c < a.outerSize(); ++c) {
    double s = 0.0;
    for (SpMat::InnerIterator it(a, c); it; ++it) s += std::abs(it.value());
    best = std::max(best, s);
  }
  return best;
}

inline double max_abs(const SpMat& a) {
  double best = 0.0;
  for (Eigen::Index c = 0; c < a.outerSize(); ++c)
    for (SpMat::InnerIterator it(a, c); it; ++it) best = std::max(best, std::abs(it.value()));
  return best;
}

/// max |A - A^T| / max |A|
inline double asymmetry(const SpMat& a) {
  const SpMat at = a.transpose();
  const SpMat d = a - at;
  const double m = max_abs(a);
  return m > 0.0 ? max_abs(d) / m : 0.0;
}

/// Symmetry of both matrices and positive definiteness of M.
inline bool check_pencil(const MatrixPencil& p, double sym_tol = 1e-12) {
  if (p.K.rows() != p.K.cols() || p.M.rows() != p.M.cols() || p.K.rows() != p.M.rows())
    return false;
  if (asymmetry(p.K) > sym_tol || asymmetry(p.M) > sym_tol) return false;
  Eigen::SimplicialLLT<SpMat> llt(p.M);
  return llt.info() == Eigen::Success;
}

/// Galerkin assembly with (p+1) Gauss-Legendre points per direction per span.
inline MatrixPencil assemble(const GeometryMap& geom, const DiscreteSpace& space) {
  const auto& bu = space.bases[0];
  const auto& bv = space.bases[1];
  const int pu = bu.degree();
  const int pv = bv.degree();
  const int nu = bu.size();
  const auto brk_u = bu.knot_vector().breakpoints();
  const auto brk_v = bv.knot_vector().breakpoints();
  const auto rule_u = quadrature::gauss_legendre(pu + 1);
  const auto rule_v = quadrature::gauss_legendre(pv + 1);

  const int nloc = (pu + 1) * (pv + 1);
  std::vector<Eigen::Triplet<double>> tk, tm;
  tk.reserve(static_cast<std::size_t>(brk_u.size() * brk_v.size()) * nloc * nloc);
  tm.reserve(tk.capacity());

  Eigen::MatrixXd ke(nloc, nloc), me(nloc, nloc);
  std::vector<int> dofs(nloc);
  Eigen::VectorXd n(nloc);
  Eigen::Matrix<double, 2, Eigen::Dynamic> dref(2, nloc), dphys(2, nloc);

  for (std::size_t eb = 0; eb + 1 < brk_v.size(); ++eb) {
    const double v0 = brk_v[eb], v1 = brk_v[eb + 1];
    for (std::size_t ea = 0; ea + 1 < brk_u.size(); ++ea) {
      const double u0 = brk_u[ea], u1 = brk_u[ea + 1];
      ke.setZero();
      me.setZero();
      int span_u = 0, span_v = 0;
      for (std::size_t qj = 0; qj < rule_v.nodes.size(); ++qj) {
        const double v = v0 + 0.5 * (rule_v.nodes[qj] + 1.0) * (v1 - v0);
        const auto dv = eval_basis_derivatives(bv, v, 1);
        span_v = dv.span;
        for (std::size_t qi = 0; qi < rule_u.nodes.size(); ++qi) {
          const double u = u0 + 0.5 * (rule_u.nodes[qi] + 1.0) * (u1 - u0);
          const auto du = eval_basis_derivatives(bu, u, 1);
          span_u = du.span;
          const MapEval g = geom.map_and_jacobian(u, v);
          const double det = g.jacobian.determinant();
          if (!(det > 0.0))
            throw AssemblyError("assemble: nonpositive Jacobian determinant at a quadrature point");
          const double wq = rule_u.weights[qi] * rule_v.weights[qj] * 0.25 * (u1 - u0) * (v1 - v0) * det;
          const Mat2 jinv_t = g.jacobian.inverse().transpose();
          for (int b = 0; b <= pv; ++b) {
            for (int a = 0; a <= pu; ++a) {
              const int l = a + (pu + 1) * b;
              n(l) = du.ders(0, a) * dv.ders(0, b);
              dref(0, l) = du.ders(1, a) * dv.ders(0, b);
              dref(1, l) = du.ders(0, a) * dv.ders(1, b);
            }
          }
          dphys.noalias() = jinv_t * dref;
          ke.noalias() += wq * dphys.transpose() * dphys;
          me.noalias() += wq * n * n.transpose();
        }
      }
      for (int b = 0; b <= pv; ++b)
        for (int a = 0; a <= pu; ++a)
          dofs[a + (pu + 1) * b] = space.dof_of[(span_u - pu + a) + nu * (span_v - pv + b)];
      for (int r = 0; r < nloc; ++r) {
        if (dofs[r] < 0) continue;
        for (int c = 0; c < nloc; ++c) {
          if (dofs[c] < 0) continue;
          // symmetric by construction: use the upper triangle for both halves
          const int lo = std::min(r, c), hi = std::max(r, c);
          tk.emplace_back(dofs[r], dofs[c], ke(lo, hi));
          tm.emplace_back(dofs[r], dofs[c], me(lo, hi));
        }
      }
    }
  }
  const int nd = space.num_dofs();
  MatrixPencil out;
  out.K.resize(nd, nd);
  out.M.resize(nd, nd);
  out.K.setFromTriplets(tk.begin(), tk.end());
  out.M.setFromTriplets(tm.begin(), tm.end());
  out.K.makeCompressed();
  out.M.makeCompressed();
  return out;
}

}  // namespace cavitrack
