#pragma once

// Parametric pencils delta -> (K(delta), M(delta)), the algebraic homotopy
// between two parameter points, and the block pencil of a cylindrical cavity.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cavitrack/assembly.hpp"
#include "cavitrack/eigensolver.hpp"
#include "cavitrack/errors.hpp"
#include "cavitrack/geometry.hpp"
#include "cavitrack/oracle.hpp"

namespace cavitrack {

/// Memoized map from a parameter vector to an assembled pencil. Lookups are
/// keyed on the exact bit patterns of the parameter entries, so repeated
/// evaluations at the same point return the same matrices.
class ParametricPencil {
 public:
  using Factory = std::function<MatrixPencil(const Eigen::VectorXd&)>;

  ParametricPencil() = default;
  ParametricPencil(Factory factory, int parameter_dimension)
      : state_(std::make_shared<State>()), dim_(parameter_dimension) {
    state_->factory = std::move(factory);
  }

  [[nodiscard]] int parameter_dimension() const { return dim_; }

  [[nodiscard]] std::shared_ptr<const MatrixPencil> at(const Eigen::VectorXd& delta) const {
    if (!state_) throw DomainError("ParametricPencil: no factory");
    if (delta.size() != dim_) throw DomainError("ParametricPencil: parameter dimension mismatch");
    Key key(static_cast<std::size_t>(delta.size()));
    for (Eigen::Index i = 0; i < delta.size(); ++i)
      key[static_cast<std::size_t>(i)] = std::bit_cast<std::uint64_t>(delta(i) == 0.0 ? 0.0 : delta(i));
    {
      std::lock_guard<std::mutex> lock(state_->mutex);
      if (auto it = state_->cache.find(key); it != state_->cache.end()) return it->second;
    }
    // assemble outside the lock; a concurrent duplicate is discarded below
    auto fresh = std::make_shared<const MatrixPencil>(state_->factory(delta));
    std::lock_guard<std::mutex> lock(state_->mutex);
    auto [it, inserted] = state_->cache.emplace(std::move(key), fresh);
    if (inserted) ++state_->assemblies;
    return it->second;
  }

  [[nodiscard]] std::shared_ptr<const MatrixPencil> at(double delta) const {
    return at(Eigen::VectorXd::Constant(1, delta));
  }

  [[nodiscard]] std::size_t cache_size() const {
    std::lock_guard<std::mutex> lock(state_->mutex);
    return state_->cache.size();
  }

  [[nodiscard]] int assemblies() const {
    std::lock_guard<std::mutex> lock(state_->mutex);
    return state_->assemblies;
  }

  void clear_cache() const {
    std::lock_guard<std::mutex> lock(state_->mutex);
    state_->cache.clear();
  }

 private:
  using Key = std::vector<std::uint64_t>;
  struct State {
    Factory factory;
    std::mutex mutex;
    std::map<Key, std::shared_ptr<const MatrixPencil>> cache;
    int assemblies = 0;
  };
  std::shared_ptr<State> state_;
  int dim_ = 0;
};

/// K(t) = (1-t) K0 + t Kk, M(t) = (1-t) M0 + t Mk.
class HomotopyPencil {
 public:
  HomotopyPencil(MatrixPencil start, MatrixPencil end) : p0_(std::move(start)), pk_(std::move(end)) {
    if (p0_.dimension() != pk_.dimension())
      throw DomainError("HomotopyPencil: endpoint dimensions differ");
    dk_ = pk_.K - p0_.K;
    dm_ = pk_.M - p0_.M;
  }

  HomotopyPencil(const ParametricPencil& family, const Eigen::VectorXd& delta0,
                 const Eigen::VectorXd& deltak)
      : HomotopyPencil(*family.at(delta0), *family.at(deltak)) {}

  [[nodiscard]] Eigen::Index dimension() const { return p0_.dimension(); }
  [[nodiscard]] const MatrixPencil& start() const { return p0_; }
  [[nodiscard]] const MatrixPencil& end() const { return pk_; }

  [[nodiscard]] MatrixPencil at(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("HomotopyPencil: t outside [0, 1]");
    if (t == 0.0) return p0_;
    if (t == 1.0) return pk_;
    MatrixPencil out;
    out.K = (1.0 - t) * p0_.K + t * pk_.K;
    out.M = (1.0 - t) * p0_.M + t * pk_.M;
    return out;
  }

  /// (K', M') = (Kk - K0, Mk - M0), independent of t.
  [[nodiscard]] std::pair<const SpMat&, const SpMat&> derivative() const { return {dk_, dm_}; }

  [[nodiscard]] bool is_identity() const { return max_abs(dk_) == 0.0 && max_abs(dm_) == 0.0; }

  /// Symmetry of K(t), M(t) and positive definiteness of M(t) at the probe points.
  [[nodiscard]] bool check(std::span<const double> probes = kDefaultProbes) const {
    for (double t : probes)
      if (!check_pencil(at(t))) return false;
    return true;
  }

 private:
  static constexpr double kProbeValues[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  static constexpr std::span<const double> kDefaultProbes{kProbeValues};

  MatrixPencil p0_, pk_;
  SpMat dk_, dm_;
};

inline MatrixPencil homotopy_at(const HomotopyPencil& h, double t) { return h.at(t); }

inline std::pair<const SpMat&, const SpMat&> homotopy_derivative(const HomotopyPencil& h) {
  return h.derivative();
}

// ---------------------------------------------------------------------------
// Cylindrical cavity

/// One diagonal block of the cylinder pencil: cross-section problem with the
/// axial index p.
struct PencilBlock {
  ModeFamily family = ModeFamily::TM;
  int p = 0;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};

struct PillboxPencil {
  ParametricPencil pencil;  ///< parameter: radius in m
  double r_nominal = 0.0;
  double length = 0.0;
  int p_max = 0;
  DiscreteSpace dirichlet;
  DiscreteSpace neumann;
  std::vector<PencilBlock> blocks;
  SpuriousPredicate spurious;  ///< true for the constant cross-section mode of a TE block

  [[nodiscard]] Eigen::Index dimension() const {
    return blocks.empty() ? 0 : blocks.back().offset + blocks.back().size;
  }

  /// Block carrying the largest share of e's M-energy.
  [[nodiscard]] const PencilBlock& dominant_block(const Eigen::VectorXd& e) const {
    std::size_t best = 0;
    double best_norm = -1.0;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const double n = e.segment(blocks[b].offset, blocks[b].size).squaredNorm();
      if (n > best_norm) {
        best_norm = n;
        best = b;
      }
    }
    return blocks[best];
  }
};

namespace detail {

inline void append_block(std::vector<Eigen::Triplet<double>>& out, const SpMat& a, double scale_a,
                         const SpMat* b, double scale_b, Eigen::Index offset) {
  for (Eigen::Index c = 0; c < a.outerSize(); ++c)
    for (SpMat::InnerIterator it(a, c); it; ++it)
      out.emplace_back(offset + it.row(), offset + it.col(), scale_a * it.value());
  if (b == nullptr || scale_b == 0.0) return;
  for (Eigen::Index c = 0; c < b->outerSize(); ++c)
    for (SpMat::InnerIterator it(*b, c); it; ++it)
      out.emplace_back(offset + it.row(), offset + it.col(), scale_b * it.value());
}

}  // namespace detail

/// Block-diagonal pencil for radius r: blocks (K_D + (p pi/l)^2 M_D, M_D) for
/// p = 0..p_max and (K_N + (p pi/l)^2 M_N, M_N) for p = 1..p_max.
inline MatrixPencil assemble_pillbox(double r, double l, int p_max, const DiscreteSpace& dirichlet,
                                     const DiscreteSpace& neumann) {
  if (!(r > 0.0) || !(l > 0.0)) throw DomainError("pillbox: radius and length must be positive");
  const GeometryMap disk = build_disk_patch(r);
  const MatrixPencil d = assemble(disk, dirichlet);
  const MatrixPencil n = assemble(disk, neumann);
  const Eigen::Index nd = d.dimension(), nn = n.dimension();
  const Eigen::Index total = (p_max + 1) * nd + p_max * nn;

  std::vector<Eigen::Triplet<double>> tk, tm;
  Eigen::Index offset = 0;
  for (int p = 0; p <= p_max; ++p) {
    const double kz2 = std::pow(p * std::numbers::pi / l, 2);
    detail::append_block(tk, d.K, 1.0, &d.M, kz2, offset);
    detail::append_block(tm, d.M, 1.0, nullptr, 0.0, offset);
    offset += nd;
  }
  for (int p = 1; p <= p_max; ++p) {
    const double kz2 = std::pow(p * std::numbers::pi / l, 2);
    detail::append_block(tk, n.K, 1.0, &n.M, kz2, offset);
    detail::append_block(tm, n.M, 1.0, nullptr, 0.0, offset);
    offset += nn;
  }
  MatrixPencil out;
  out.K.resize(total, total);
  out.M.resize(total, total);
  out.K.setFromTriplets(tk.begin(), tk.end());
  out.M.setFromTriplets(tm.begin(), tm.end());
  out.K.makeCompressed();
  out.M.makeCompressed();
  return out;
}

inline PillboxPencil build_pillbox_pencil(double r_nominal, double l, int p_max = 3, int degree = 2,
                                          int elements = 16) {
  if (!(r_nominal > 0.0) || !(l > 0.0)) throw DomainError("pillbox: radius and length must be positive");
  if (p_max < 1) throw DomainError("pillbox: p_max must be >= 1");
  if (elements < 1) throw DomainError("pillbox: need at least one element per direction");

  PillboxPencil out;
  out.r_nominal = r_nominal;
  out.length = l;
  out.p_max = p_max;
  out.dirichlet = make_space(degree, elements, BoundaryCondition::Dirichlet);
  out.neumann = make_space(degree, elements, BoundaryCondition::Neumann);

  const Eigen::Index nd = out.dirichlet.num_dofs(), nn = out.neumann.num_dofs();
  Eigen::Index offset = 0;
  for (int p = 0; p <= p_max; ++p) {
    out.blocks.push_back({ModeFamily::TM, p, offset, nd});
    offset += nd;
  }
  for (int p = 1; p <= p_max; ++p) {
    out.blocks.push_back({ModeFamily::TE, p, offset, nn});
    offset += nn;
  }

  // The cross-section mass matrix scales with r^2, so the M-cosine against the
  // constant function is radius independent; the unit-radius mass suffices.
  const SpMat mn = assemble(build_disk_patch(1.0), out.neumann).M;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(nn);
  const Eigen::VectorXd m_ones = mn * ones;
  const double ones_norm = std::sqrt(ones.dot(m_ones));
  auto blocks = out.blocks;
  out.spurious = [blocks, mn, m_ones, ones_norm](const Eigenpair& ep) {
    for (const auto& b : blocks) {
      if (b.family != ModeFamily::TE) continue;
      const Eigen::VectorXd z = ep.vector.segment(b.offset, b.size);
      // blocks holding only rounding noise carry no information
      if (z.squaredNorm() < 0.1 * ep.vector.squaredNorm()) continue;
      const double zn = std::sqrt(z.dot(mn * z));
      if (std::abs(z.dot(m_ones)) / (zn * ones_norm) > 0.5) return true;
    }
    return false;
  };

  const DiscreteSpace dir = out.dirichlet, neu = out.neumann;
  out.pencil = ParametricPencil(
      [l, p_max, dir, neu](const Eigen::VectorXd& delta) {
        return assemble_pillbox(delta(0), l, p_max, dir, neu);
      },
      1);
  return out;
}

// ---------------------------------------------------------------------------
// Deformed cross-section

/// Pencil family over the deformation parameters of a disk-like patch; the
/// cross-section problem with the given boundary condition is assembled on
/// deform(model, delta).
inline ParametricPencil build_deformed_pencil(const DeformationModel& model, int degree,
                                              int elements, BoundaryCondition bc) {
  model.validate();
  const DiscreteSpace space = make_space(degree, elements, bc);
  return ParametricPencil(
      [model, space](const Eigen::VectorXd& delta) {
        const std::vector<double> d(delta.data(), delta.data() + delta.size());
        return assemble(deform(model, d), space);
      },
      model.num_modes());
}

}  // namespace cavitrack
