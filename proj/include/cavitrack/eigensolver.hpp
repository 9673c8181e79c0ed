#pragma once

// Generalized symmetric-definite eigensolver for K e = lambda M e.
//
// Two paths:
//  - dense reduction (Cholesky of M, symmetric QR) for small pencils; this is
//    also the test oracle;
//  - shift-invert block Krylov with a sparse factorization of K - sigma M and
//    Rayleigh-Ritz in the M inner product. The block width resolves exactly
//    degenerate eigenvalues up to that multiplicity.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "cavitrack/assembly.hpp"
#include "cavitrack/errors.hpp"

namespace cavitrack {

struct Eigenpair {
  double lambda = 0.0;     ///< squared wavenumber in 1/m^2 for cavity pencils
  Eigen::VectorXd vector;  ///< M-normalized, largest-|entry| component positive
  double residual = 0.0;   ///< relative residual, see relative_residual()
};

/// ||K e - lambda M e||_2 / ((||K||_1 + |lambda| ||M||_1) ||e||_2)
inline double relative_residual(const SpMat& k, const SpMat& m, double lambda,
                                const Eigen::VectorXd& e, double norm_k, double norm_m) {
  const Eigen::VectorXd r = k * e - lambda * (m * e);
  const double denom = (norm_k + std::abs(lambda) * norm_m) * e.norm();
  return denom > 0.0 ? r.norm() / denom : r.norm();
}

inline double relative_residual(const MatrixPencil& p, double lambda, const Eigen::VectorXd& e) {
  return relative_residual(p.K, p.M, lambda, e, norm1(p.K), norm1(p.M));
}

/// M-normalizes e and flips its sign so the largest-magnitude entry is positive
/// (first such entry on ties).
inline void normalize_eigenvector(const SpMat& m, Eigen::VectorXd& e) {
  const double nrm = std::sqrt(e.dot(m * e));
  if (nrm > 0.0) e /= nrm;
  Eigen::Index imax = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    // ties resolved to the first index; tolerance absorbs rounding between equal entries
    if (std::abs(e(i)) > best * (1.0 + 1e-12)) {
      best = std::abs(e(i));
      imax = i;
    }
  }
  if (e(imax) < 0.0) e = -e;
}

using SpuriousPredicate = std::function<bool(const Eigenpair&)>;

struct SolveOptions {
  double tol = 1e-10;
  int block_size = 3;
  int max_basis = 0;  ///< 0: automatic
  std::uint64_t seed = 0x5eedULL;
  Eigen::Index dense_threshold = 500;
  bool force_sparse = false;
  SpuriousPredicate spurious;  ///< pairs matching this are dropped from the result
};

struct SolveStats {
  int linear_solves = 0;
  int factorizations = 0;
  int basis_size = 0;
  int shift_retries = 0;
  bool dense = false;
};

struct SolveResult {
  std::vector<Eigenpair> pairs;
  SolveStats stats;
};

namespace detail {

// Ascending by lambda; members of a numerically degenerate cluster are ordered
// lexicographically by their sign-fixed eigenvectors.
inline void order_pairs(std::vector<Eigenpair>& pairs) {
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const Eigenpair& a, const Eigenpair& b) { return a.lambda < b.lambda; });
  std::size_t i = 0;
  while (i < pairs.size()) {
    std::size_t j = i + 1;
    while (j < pairs.size() &&
           std::abs(pairs[j].lambda - pairs[i].lambda) <= 1e-12 * std::max(1.0, std::abs(pairs[i].lambda)))
      ++j;
    if (j - i > 1) {
      std::stable_sort(pairs.begin() + static_cast<std::ptrdiff_t>(i),
                       pairs.begin() + static_cast<std::ptrdiff_t>(j),
                       [](const Eigenpair& a, const Eigenpair& b) {
                         for (Eigen::Index k = 0; k < a.vector.size(); ++k) {
                           if (a.vector(k) > b.vector(k) + 1e-12) return true;
                           if (a.vector(k) < b.vector(k) - 1e-12) return false;
                         }
                         return false;
                       });
    }
    i = j;
  }
}

// Representative diagonal ratio used to place the internal shift.
inline double diagonal_scale(const MatrixPencil& p) {
  std::vector<double> ratios;
  for (Eigen::Index i = 0; i < p.K.rows(); ++i) {
    const double m = p.M.coeff(i, i);
    if (m > 0.0) ratios.push_back(std::abs(p.K.coeff(i, i)) / m);
  }
  if (ratios.empty()) return 1.0;
  std::nth_element(ratios.begin(), ratios.begin() + static_cast<std::ptrdiff_t>(ratios.size() / 2),
                   ratios.end());
  const double med = ratios[ratios.size() / 2];
  return med > 0.0 ? med : 1.0;
}

// Factorization of K - sigma M: LDL^T first, LU as fallback for indefinite shifts.
class ShiftedSolver {
 public:
  ShiftedSolver(const MatrixPencil& p, double sigma) {
    SpMat a = p.K - sigma * p.M;
    a.makeCompressed();
    ldlt_ = std::make_unique<Eigen::SimplicialLDLT<SpMat>>(a);
    if (ldlt_->info() == Eigen::Success && ldlt_->vectorD().cwiseAbs().minCoeff() >
                                               1e-13 * ldlt_->vectorD().cwiseAbs().maxCoeff())
      return;
    ldlt_.reset();
    lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
    lu_->analyzePattern(a);
    lu_->factorize(a);
    if (lu_->info() != Eigen::Success)
      throw FactorizationError("shift coincides with an eigenvalue", true);
  }

  [[nodiscard]] Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const {
    Eigen::MatrixXd x = ldlt_ ? Eigen::MatrixXd(ldlt_->solve(rhs)) : Eigen::MatrixXd(lu_->solve(rhs));
    if (!x.allFinite()) throw FactorizationError("shift coincides with an eigenvalue", true);
    return x;
  }

 private:
  std::unique_ptr<Eigen::SimplicialLDLT<SpMat>> ldlt_;
  std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
};

}  // namespace detail

/// All eigenpairs by dense reduction; the oracle path for small pencils.
inline SolveResult solve_dense(const MatrixPencil& p) {
  const Eigen::MatrixXd k = Eigen::MatrixXd(p.K);
  const Eigen::MatrixXd m = Eigen::MatrixXd(p.M);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(k, m, Eigen::ComputeEigenvectors |
                                                                         Eigen::Ax_lBx);
  if (es.info() != Eigen::Success) throw FactorizationError("solve_dense: M not positive definite");
  const double nk = norm1(p.K), nm = norm1(p.M);
  SolveResult out;
  out.stats.dense = true;
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    Eigenpair ep;
    ep.lambda = es.eigenvalues()(i);
    ep.vector = es.eigenvectors().col(i);
    normalize_eigenvector(p.M, ep.vector);
    ep.residual = relative_residual(p.K, p.M, ep.lambda, ep.vector, nk, nm);
    out.pairs.push_back(std::move(ep));
  }
  detail::order_pairs(out.pairs);
  return out;
}

namespace detail {

inline SolveResult solve_krylov(const MatrixPencil& p, int n_modes, double shift, double sigma,
                                const SolveOptions& opt) {
  const Eigen::Index n = p.dimension();
  const int b = std::max(1, std::min<int>(opt.block_size, static_cast<int>(n)));
  const Eigen::Index cap =
      opt.max_basis > 0 ? std::min<Eigen::Index>(opt.max_basis, n)
                        : std::min<Eigen::Index>(n, 20 * (n_modes + b) + 100);
  const double nk = norm1(p.K), nm = norm1(p.M);

  SolveResult out;
  ShiftedSolver solver(p, sigma);
  out.stats.factorizations = 1;

  Eigen::MatrixXd v(n, cap), mv(n, cap), opv(n, cap);
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(cap, cap);
  Eigen::Index cols = 0;

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  auto random_block = [&](Eigen::Index width) {
    Eigen::MatrixXd x(n, width);
    for (Eigen::Index j = 0; j < width; ++j)
      for (Eigen::Index i = 0; i < n; ++i) x(i, j) = uni(rng);
    return x;
  };

  // M-orthonormalizes candidate columns against the basis and each other and
  // appends the survivors; returns the number appended.
  auto append = [&](Eigen::MatrixXd cand) {
    Eigen::Index added = 0;
    for (Eigen::Index j = 0; j < cand.cols() && cols < cap; ++j) {
      Eigen::VectorXd x = cand.col(j);
      for (int attempt = 0; attempt < 3; ++attempt) {
        const double before = std::sqrt(std::max(0.0, x.dot(p.M * x)));
        for (int pass = 0; pass < 2; ++pass) {
          if (cols > 0) x -= v.leftCols(cols) * (mv.leftCols(cols).transpose() * x);
        }
        const Eigen::VectorXd mx = p.M * x;
        const double nrm = std::sqrt(std::max(0.0, x.dot(mx)));
        if (nrm > 1e-8 * before && nrm > 0.0) {
          v.col(cols) = x / nrm;
          mv.col(cols) = mx / nrm;
          ++cols;
          ++added;
          break;
        }
        x = random_block(1).col(0);
      }
    }
    return added;
  };

  append(random_block(b));

  Eigen::Index op_done = 0;  // columns whose operator image is stored
  std::vector<Eigenpair> accepted;
  while (true) {
    // operator images of the newest block
    const Eigen::Index first = op_done, width = cols - op_done;
    if (width > 0) {
      const Eigen::MatrixXd rhs = mv.middleCols(first, width);
      opv.middleCols(first, width) = solver.solve(rhs);
      out.stats.linear_solves += static_cast<int>(width);
      // T = V^T M Op V, updated by the new columns (and their mirror)
      t.block(0, first, cols, width) = mv.leftCols(cols).transpose() * opv.middleCols(first, width);
      t.block(first, 0, width, cols) = t.block(0, first, cols, width).transpose().eval();
      op_done = cols;
    }

    const bool full = cols >= cap;
    if (cols >= n_modes + b || full) {
      Eigen::MatrixXd tt = t.topLeftCorner(cols, cols);
      tt = 0.5 * (tt + tt.transpose());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tt);
      // theta = 1/(lambda - sigma); descending theta among positive values is ascending lambda
      std::vector<Eigen::Index> idx;
      for (Eigen::Index i = cols - 1; i >= 0; --i)
        if (es.eigenvalues()(i) > 0.0) idx.push_back(i);

      accepted.clear();
      bool all_converged = true;
      for (Eigen::Index i : idx) {
        Eigenpair ep;
        ep.vector = v.leftCols(cols) * es.eigenvectors().col(i);
        const Eigen::VectorXd mx = p.M * ep.vector;
        ep.lambda = ep.vector.dot(p.K * ep.vector) / ep.vector.dot(mx);
        ep.residual = relative_residual(p.K, p.M, ep.lambda, ep.vector, nk, nm);
        if (ep.lambda < shift - 1e-9 * (std::abs(shift) + std::abs(sigma) + 1.0)) continue;
        const Eigen::VectorXd r = p.K * ep.vector - ep.lambda * mx;
        const double strict = opt.tol * 1e-2 * (std::abs(ep.lambda) + std::abs(sigma)) * nm *
                              ep.vector.norm();
        const bool ok = ep.residual <= opt.tol && (r.norm() <= strict || full);
        if (!ok) all_converged = false;
        normalize_eigenvector(p.M, ep.vector);
        if (opt.spurious && opt.spurious(ep)) continue;
        accepted.push_back(std::move(ep));
        if (static_cast<int>(accepted.size()) == n_modes) break;
      }
      if (static_cast<int>(accepted.size()) >= n_modes && all_converged) break;
      if (full) {
        if (static_cast<int>(accepted.size()) < n_modes)
          throw ConvergenceError("solve_smallest: fewer eigenpairs above the shift than requested");
        for (const auto& ep : accepted)
          if (ep.residual > opt.tol)
            throw ConvergenceError("solve_smallest: iteration limit reached before convergence");
        break;
      }
    }
    if (append(opv.middleCols(first, width)) == 0 && cols < cap) append(random_block(b));
  }

  out.stats.basis_size = static_cast<int>(cols);
  out.pairs = std::move(accepted);
  order_pairs(out.pairs);
  return out;
}

}  // namespace detail

/// The n_modes smallest eigenpairs with lambda >= shift, ascending.
inline SolveResult solve_smallest(const MatrixPencil& p, int n_modes, double shift = 0.0,
                                  const SolveOptions& opt = {}) {
  const Eigen::Index n = p.dimension();
  if (n_modes < 1) throw DomainError("solve_smallest: n_modes must be >= 1");
  if (n_modes > n) throw DomainError("solve_smallest: n_modes exceeds the pencil dimension");

  if (n <= opt.dense_threshold && !opt.force_sparse) {
    auto all = solve_dense(p);
    SolveResult out;
    out.stats = all.stats;
    for (auto& ep : all.pairs) {
      if (ep.lambda < shift - 1e-9 * (std::abs(shift) + 1.0)) continue;
      if (opt.spurious && opt.spurious(ep)) continue;
      out.pairs.push_back(std::move(ep));
      if (static_cast<int>(out.pairs.size()) == n_modes) break;
    }
    if (static_cast<int>(out.pairs.size()) < n_modes)
      throw ConvergenceError("solve_smallest: fewer eigenpairs above the shift than requested");
    return out;
  }

  const double scale = detail::diagonal_scale(p);
  double offset = 1e-3 * (std::abs(shift) + scale);
  for (int attempt = 0; attempt < 6; ++attempt) {
    try {
      auto res = detail::solve_krylov(p, n_modes, shift, shift - offset, opt);
      res.stats.shift_retries = attempt;
      return res;
    } catch (const FactorizationError& e) {
      if (!e.retry_with_perturbed_shift) throw;
      offset *= 3.7;
    }
  }
  throw FactorizationError("solve_smallest: factorization failed for all perturbed shifts");
}

}  // namespace cavitrack
