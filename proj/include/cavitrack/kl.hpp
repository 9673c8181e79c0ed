#pragma once

// Discrete Karhunen-Loeve reduction of observation matrices.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "cavitrack/errors.hpp"

namespace cavitrack {

/// M x N observations; row m is one sample, column n one geometric variable.
struct ObservationMatrix {
  Eigen::MatrixXd data;
  std::vector<std::string> names;

  [[nodiscard]] Eigen::Index samples() const { return data.rows(); }
  [[nodiscard]] Eigen::Index variables() const { return data.cols(); }
};

/// Truncated expansion X = mu + V_t Sigma_t^{1/2} delta.
struct KLModel {
  Eigen::VectorXd mean;             ///< N
  Eigen::MatrixXd modes;            ///< N x N_t, orthonormal columns
  Eigen::VectorXd variances;        ///< N_t, strictly positive, descending
  Eigen::VectorXd full_spectrum;    ///< all N covariance eigenvalues, descending
  double total_variance = 0.0;
  double criterion = 1.0;

  [[nodiscard]] int truncation() const { return static_cast<int>(variances.size()); }
  [[nodiscard]] int dimension() const { return static_cast<int>(mean.size()); }

  /// V_t Sigma_t^{1/2}
  [[nodiscard]] Eigen::MatrixXd scaled_modes() const {
    return modes * variances.cwiseSqrt().asDiagonal();
  }

  [[nodiscard]] double captured_fraction() const { return variances.sum() / total_variance; }
};

/// Unbiased sample covariance (divisor M-1).
inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x) {
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mu;
  return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

/// Fits the KL model keeping the minimal number of leading modes whose
/// variance fraction reaches `criterion`.
inline KLModel fit_kl(const ObservationMatrix& obs, double criterion) {
  if (!(criterion > 0.0 && criterion <= 1.0)) throw DomainError("fit_kl: criterion must be in (0,1]");
  if (obs.samples() < 2) throw DomainError("fit_kl: need at least two observations");
  const Eigen::Index n = obs.variables();

  KLModel kl;
  kl.criterion = criterion;
  kl.mean = obs.data.colwise().mean().transpose();
  const Eigen::MatrixXd cov = sample_covariance(obs.data);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw ConvergenceError("fit_kl: eigendecomposition failed");

  // Descending order; equal eigenvalues keep their original index order.
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto& ev = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return ev(a) > ev(b); });

  kl.full_spectrum.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) kl.full_spectrum(i) = std::max(ev(order[i]), 0.0);
  kl.total_variance = kl.full_spectrum.sum();
  if (!(kl.total_variance > 0.0) ||
      kl.total_variance <= 1e-14 * cov.cwiseAbs().maxCoeff() * static_cast<double>(n))
    throw DegenerateDataError("fit_kl: observations have zero variance");

  int nt = 0;
  double captured = 0.0;
  while (nt < n) {
    captured += kl.full_spectrum(nt);
    ++nt;
    if (captured / kl.total_variance >= criterion * (1.0 - 1e-12)) break;
  }
  while (nt > 1 && !(kl.full_spectrum(nt - 1) > 0.0)) --nt;

  kl.modes.resize(n, nt);
  kl.variances.resize(nt);
  for (int j = 0; j < nt; ++j) {
    Eigen::VectorXd v = es.eigenvectors().col(order[j]);
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0) v = -v;
    kl.modes.col(j) = v;
    kl.variances(j) = kl.full_spectrum(j);
  }
  return kl;
}

inline Eigen::VectorXd to_physical(const KLModel& kl, const Eigen::VectorXd& delta) {
  if (delta.size() != kl.truncation()) throw DomainError("to_physical: delta length != N_t");
  return kl.mean + kl.modes * (kl.variances.cwiseSqrt().cwiseProduct(delta));
}

/// M draws from N(mean, cov) using a seeded Mersenne twister.
inline ObservationMatrix generate_synthetic_observations(const Eigen::MatrixXd& cov,
                                                         const Eigen::VectorXd& mean, int samples,
                                                         std::uint64_t seed) {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size())
    throw DomainError("generate_synthetic_observations: dimension mismatch");
  if (samples < 1) throw DomainError("generate_synthetic_observations: need at least one sample");
  if (!cov.isApprox(cov.transpose(), 1e-12))
    throw FactorizationError("generate_synthetic_observations: covariance not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw FactorizationError("generate_synthetic_observations: covariance not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index n = mean.size();
  ObservationMatrix obs;
  obs.data.resize(samples, n);
  Eigen::VectorXd z(n);
  for (int m = 0; m < samples; ++m) {
    for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(rng);
    obs.data.row(m) = (mean + l * z).transpose();
  }
  for (Eigen::Index i = 0; i < n; ++i) obs.names.push_back("x" + std::to_string(i + 1) + "_m");
  return obs;
}

/// Covariance V diag(spectrum) V^T with a seeded random orthogonal V.
inline Eigen::MatrixXd correlated_covariance(const Eigen::VectorXd& spectrum, std::uint64_t seed) {
  const Eigen::Index n = spectrum.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd c = q * spectrum.asDiagonal() * q.transpose();
  return 0.5 * (c + c.transpose());
}

}  // namespace cavitrack
