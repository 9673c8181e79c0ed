#pragma once

// Eigenpair continuation along a homotopy t -> (K(t), M(t)), t in [0, 1].
//
// Each step predicts with the first-order Taylor expansion, corrects with
// Newton's method on the bordered system
//
//   [ K - lambda M   -M e ] [ de      ]     [ (K - lambda M) e ]
//   [ c^T             0   ] [ dlambda ] = -[ c^T e - 1        ]
//
// and adapts the step from the Newton iteration count. Eigenvalues that stay
// degenerate along the path are continued with their cluster partners
// deflated through extra border rows and columns.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "cavitrack/assembly.hpp"
#include "cavitrack/eigensolver.hpp"
#include "cavitrack/errors.hpp"
#include "cavitrack/oracle.hpp"
#include "cavitrack/pencil.hpp"

namespace cavitrack {

struct TrackConfig {
  int n1 = 3;
  double eta1 = 1.1;
  int n2 = 5;
  double eta2 = 2.0 / 3.0;
  double newton_tol = 1e-10;
  int newton_max_iter = 10;
  double min_step = 1e-6;
  double initial_step = 1.0;
  double continuity_threshold = 0.9;
  double degeneracy_gap = 1e-6;

  void validate() const {
    if (!(0.0 < eta2 && eta2 < 1.0 && 1.0 < eta1))
      throw ConfigError("track config: need 0 < eta2 < 1 < eta1");
    if (!(n1 < n2) || n1 < 0) throw ConfigError("track config: need 0 <= n1 < n2");
    if (!(min_step > 0.0)) throw ConfigError("track config: min_step must be positive");
    if (!(initial_step >= min_step && initial_step <= 1.0))
      throw ConfigError("track config: initial_step must lie in [min_step, 1]");
    if (!(newton_tol > 0.0)) throw ConfigError("track config: newton_tol must be positive");
    if (newton_max_iter < 1) throw ConfigError("track config: newton_max_iter must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Paths

inline std::pair<const SpMat&, const SpMat&> derivative_at(const HomotopyPencil& h, double) {
  return h.derivative();
}

/// Radius path t -> family(r0 + t (r1 - r0)) of a one-parameter pencil family
/// with central finite-difference derivatives (step fd_rel * r).
struct PhysicalPath {
  ParametricPencil family;
  double r0 = 0.0;
  double r1 = 0.0;
  double fd_rel = 1e-6;

  [[nodiscard]] double radius(double t) const { return t == 1.0 ? r1 : r0 + t * (r1 - r0); }

  [[nodiscard]] MatrixPencil at(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("PhysicalPath: t outside [0, 1]");
    return *family.at(radius(t));
  }

  [[nodiscard]] bool is_identity() const { return r0 == r1; }
};

inline std::pair<SpMat, SpMat> derivative_at(const PhysicalPath& path, double t) {
  const double r = path.radius(t);
  const double h = path.fd_rel * std::abs(r);
  const auto plus = path.family.at(r + h);
  const auto minus = path.family.at(r - h);
  const double scale = (path.r1 - path.r0) / (2.0 * h);
  SpMat dk = scale * (plus->K - minus->K);
  SpMat dm = scale * (plus->M - minus->M);
  return {std::move(dk), std::move(dm)};
}

// ---------------------------------------------------------------------------
// Bordered systems

namespace detail {

// [[A, -b, P], [c^T, 0, 0], [P^T, 0, 0]] with A = K - lambda M, b = M e, P = M Q.
inline SpMat bordered(const MatrixPencil& p, double lambda, const Eigen::VectorXd& me,
                      const Eigen::VectorXd& c, const Eigen::MatrixXd& mq) {
  const Eigen::Index n = p.dimension();
  const Eigen::Index q = mq.cols();
  SpMat a = p.K - lambda * p.M;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(a.nonZeros() + (2 + 2 * q) * n));
  for (Eigen::Index col = 0; col < a.outerSize(); ++col)
    for (SpMat::InnerIterator it(a, col); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (me(i) != 0.0) trip.emplace_back(i, n, -me(i));
    if (c(i) != 0.0) trip.emplace_back(n, i, c(i));
    for (Eigen::Index j = 0; j < q; ++j) {
      if (mq(i, j) == 0.0) continue;
      trip.emplace_back(i, n + 1 + j, mq(i, j));
      trip.emplace_back(n + 1 + j, i, mq(i, j));
    }
  }
  SpMat out(n + 1 + q, n + 1 + q);
  out.setFromTriplets(trip.begin(), trip.end());
  out.makeCompressed();
  return out;
}

inline Eigen::VectorXd solve_bordered(const SpMat& j, const Eigen::VectorXd& rhs, bool& ok) {
  Eigen::SparseLU<SpMat> lu;
  lu.analyzePattern(j);
  lu.factorize(j);
  ok = lu.info() == Eigen::Success;
  if (!ok) return {};
  Eigen::VectorXd x = lu.solve(rhs);
  ok = x.allFinite();
  return x;
}

}  // namespace detail

struct PairDerivative {
  Eigen::VectorXd de;
  double dlambda = 0.0;
  double residual = 0.0;  ///< relative residual of the bordered solve
};

/// Eigenpair derivative from the bordered system; `partners` (M-orthonormal
/// columns) deflates the other members of a degenerate cluster.
inline PairDerivative eigenpair_derivative(const MatrixPencil& p, double lambda, const Eigen::VectorXd& e,
                                           const SpMat& dk, const SpMat& dm, const Eigen::VectorXd& c,
                                           const Eigen::MatrixXd& partners = {}) {
  const Eigen::Index n = p.dimension();
  const Eigen::Index q = partners.cols();
  const Eigen::VectorXd me = p.M * e;
  const Eigen::MatrixXd mq = q > 0 ? Eigen::MatrixXd(p.M * partners) : Eigen::MatrixXd(n, 0);
  const SpMat j = detail::bordered(p, lambda, me, c, mq);

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1 + q);
  rhs.head(n) = -(dk * e) + lambda * (dm * e);
  if (q > 0) rhs.tail(q) = -(partners.transpose() * (dm * e));

  bool ok = false;
  const Eigen::VectorXd x = detail::solve_bordered(j, rhs, ok);
  if (!ok) throw DegeneracyError("eigenpair_derivative: bordered matrix is singular");
  PairDerivative out;
  const double nj = norm1(j);
  const double scale = nj * x.norm() + rhs.norm();
  out.residual = scale > 0.0 ? (j * x - rhs).norm() / scale : 0.0;
  // ||J|| ||x|| / ||rhs|| bounds cond(J) from below; an unresolved cluster
  // shows up as a solution blown up by the inverse of a rounding-level pivot
  const double growth = rhs.norm() > 0.0 ? nj * x.norm() / rhs.norm() : 0.0;
  if (out.residual > 1e-10 || growth > 1e12)
    throw DegeneracyError("eigenpair_derivative: bordered matrix is numerically singular");
  out.de = x.head(n);
  out.dlambda = x(n);
  return out;
}

inline PairDerivative eigenpair_derivative(const MatrixPencil& p, const Eigenpair& pair, const SpMat& dk,
                                           const SpMat& dm, const Eigen::VectorXd& c,
                                           const Eigen::MatrixXd& partners = {}) {
  return eigenpair_derivative(p, pair.lambda, pair.vector, dk, dm, c, partners);
}

/// First-order prediction (e + dt e', lambda + dt lambda').
inline std::pair<Eigen::VectorXd, double> predict(const Eigen::VectorXd& e, double lambda,
                                                  const PairDerivative& d, double dt) {
  return {e + dt * d.de, lambda + dt * d.dlambda};
}

struct NewtonResult {
  Eigenpair pair;
  Eigen::VectorXd beta;  ///< partner multipliers (deflated case)
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_history;  ///< relative residual before each iteration and at exit
  int linear_solves = 0;
};

/// Newton-Raphson correction of an eigenpair guess; converges when the
/// relative residual is below tol and the last eigenvalue update is below
/// tol (1 + |lambda|). Non-convergence is reported, not thrown.
inline NewtonResult newton_correct(const MatrixPencil& p, const Eigen::VectorXd& e0, double lambda0,
                                   const Eigen::VectorXd& c, double tol, int max_iter,
                                   const Eigen::MatrixXd& partners = {}) {
  const Eigen::Index n = p.dimension();
  const Eigen::Index q = partners.cols();
  const double nk = norm1(p.K), nm = norm1(p.M);
  const Eigen::MatrixXd mq = q > 0 ? Eigen::MatrixXd(p.M * partners) : Eigen::MatrixXd(n, 0);

  NewtonResult out;
  Eigen::VectorXd e = e0;
  double lambda = lambda0;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);

  auto residual = [&](Eigen::VectorXd& top) {
    top = p.K * e - lambda * (p.M * e);
    if (q > 0) top += mq * beta;
    const double denom = (nk + std::abs(lambda) * nm) * e.norm();
    return denom > 0.0 ? top.norm() / denom : top.norm();
  };
  auto constraints_ok = [&]() {
    if (std::abs(c.dot(e) - 1.0) > 1e-12) return false;
    return q == 0 || (mq.transpose() * e).norm() <= 1e-12 * nm * e.norm();
  };

  Eigen::VectorXd top;
  double res = residual(top);
  out.residual_history.push_back(res);
  if (res < tol && constraints_ok()) {
    out.converged = true;
  } else {
    for (int it = 1; it <= max_iter; ++it) {
      const Eigen::VectorXd me = p.M * e;
      const SpMat j = detail::bordered(p, lambda, me, c, mq);
      Eigen::VectorXd f(n + 1 + q);
      f.head(n) = top;
      f(n) = c.dot(e) - 1.0;
      if (q > 0) f.tail(q) = mq.transpose() * e;
      bool ok = false;
      const Eigen::VectorXd dx = detail::solve_bordered(j, -f, ok);
      ++out.linear_solves;
      out.iterations = it;
      if (!ok) break;
      e += dx.head(n);
      lambda += dx(n);
      if (q > 0) beta += dx.tail(q);
      if (!e.allFinite() || !std::isfinite(lambda)) break;
      res = residual(top);
      out.residual_history.push_back(res);
      if (res < tol && std::abs(dx(n)) < tol * (1.0 + std::abs(lambda))) {
        out.converged = true;
        break;
      }
    }
  }
  out.pair.lambda = lambda;
  out.pair.vector = std::move(e);
  out.pair.residual = relative_residual(p.K, p.M, out.pair.lambda, out.pair.vector, nk, nm);
  out.beta = std::move(beta);
  return out;
}

// ---------------------------------------------------------------------------
// Tracking

struct TrackSample {
  double t = 0.0;
  double lambda = 0.0;
  double step = 0.0;
  int newton_iterations = 0;
};

enum class PartnerUse {
  None,        ///< simple eigenvalue
  InitialOnly, ///< cluster splits along the path; deflate only the first derivative
  Persistent,  ///< cluster stays degenerate; deflate throughout
};

/// Start data for one tracked mode.
struct TrackStart {
  Eigenpair pair;
  Eigen::MatrixXd partners;  ///< M-orthonormal vectors of the other cluster members
  PartnerUse use = PartnerUse::None;
};

struct TrackState {
  double t = 0.0;
  Eigenpair pair;
  Eigen::VectorXd c;
  double step = 0.0;
  std::vector<TrackSample> trajectory;
  std::vector<int> newton_log;  ///< iterations of each accepted step
  int rejected_steps = 0;
  int linear_solves = 0;
  bool success = false;
  bool degenerate = false;  ///< tracked within a degenerate cluster
  std::string message;

  [[nodiscard]] int accepted_steps() const { return static_cast<int>(newton_log.size()); }
  [[nodiscard]] double mean_newton() const {
    if (newton_log.empty()) return 0.0;
    double s = 0.0;
    for (int v : newton_log) s += v;
    return s / static_cast<double>(newton_log.size());
  }
  [[nodiscard]] int max_newton() const {
    return newton_log.empty() ? 0 : *std::max_element(newton_log.begin(), newton_log.end());
  }
};

namespace detail {

inline double m_cosine(const SpMat& m, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double ab = a.dot(m * b);
  const double aa = a.dot(m * a), bb = b.dot(m * b);
  return std::abs(ab) / std::sqrt(aa * bb);
}

}  // namespace detail

/// Continues `start` from t = 0 to t = 1. On step underflow the returned state
/// has success == false and holds the last accepted point.
template <class Path>
TrackState track(const Path& path, const TrackStart& start, const TrackConfig& cfg) {
  cfg.validate();
  TrackState s;
  s.degenerate = start.use != PartnerUse::None;
  MatrixPencil current = path.at(0.0);
  s.pair = start.pair;
  {
    const double nrm = std::sqrt(s.pair.vector.dot(current.M * s.pair.vector));
    s.pair.vector /= nrm;
  }
  s.c = current.M * s.pair.vector;
  s.step = std::min(cfg.initial_step, 1.0);
  s.trajectory.push_back({0.0, s.pair.lambda, 0.0, 0});

  const int newton_cap = std::min(cfg.newton_max_iter, cfg.n2);
  const Eigen::MatrixXd none;
  bool first = true;
  PairDerivative deriv;
  bool have_derivative = false;

  while (s.t < 1.0) {
    const Eigen::MatrixXd& deriv_partners =
        (start.use == PartnerUse::Persistent || (start.use == PartnerUse::InitialOnly && first)) ? start.partners
                                                                                                  : none;
    const Eigen::MatrixXd& newton_partners = start.use == PartnerUse::Persistent ? start.partners : none;
    if (!have_derivative) {
      const auto [dk, dm] = derivative_at(path, s.t);
      deriv = eigenpair_derivative(current, s.pair.lambda, s.pair.vector, dk, dm, s.c, deriv_partners);
      ++s.linear_solves;
      have_derivative = true;
    }

    const double dt = std::min(s.step, 1.0 - s.t);
    const double t_next = (s.t + dt >= 1.0 - 1e-14) ? 1.0 : s.t + dt;
    const auto [e_guess, l_guess] = predict(s.pair.vector, s.pair.lambda, deriv, t_next - s.t);
    MatrixPencil next = path.at(t_next);
    NewtonResult nr = newton_correct(next, e_guess, l_guess, s.c, cfg.newton_tol, newton_cap, newton_partners);
    s.linear_solves += nr.linear_solves;

    bool accept = nr.converged;
    if (accept && detail::m_cosine(next.M, s.pair.vector, nr.pair.vector) < cfg.continuity_threshold)
      accept = false;

    if (!accept) {
      ++s.rejected_steps;
      s.step *= cfg.eta2;
      if (s.step < cfg.min_step) {
        s.message = "step size underflow at t = " + std::to_string(s.t);
        return s;
      }
      continue;
    }

    s.t = t_next;
    current = std::move(next);
    s.pair = std::move(nr.pair);
    const double nrm = std::sqrt(s.pair.vector.dot(current.M * s.pair.vector));
    s.pair.vector /= nrm;
    s.pair.residual = relative_residual(current, s.pair.lambda, s.pair.vector);
    s.c = current.M * s.pair.vector;
    s.newton_log.push_back(nr.iterations);
    s.trajectory.push_back({s.t, s.pair.lambda, dt, nr.iterations});
    if (nr.iterations <= cfg.n1) s.step *= cfg.eta1;
    first = false;
    have_derivative = false;
  }
  s.success = true;
  return s;
}

template <class Path>
TrackState track(const Path& path, const Eigenpair& start, const TrackConfig& cfg) {
  return track(path, TrackStart{start, {}, PartnerUse::None}, cfg);
}

/// Groups of indices whose eigenvalues lie within the relative gap of a
/// neighbour (pairs are compared in ascending eigenvalue order).
inline std::vector<std::vector<int>> degenerate_clusters(const std::vector<Eigenpair>& pairs, double gap) {
  std::vector<int> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return pairs[a].lambda < pairs[b].lambda; });
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < order.size();) {
    std::vector<int> cl{order[i]};
    std::size_t j = i + 1;
    while (j < order.size()) {
      const double a = pairs[order[j - 1]].lambda, b = pairs[order[j]].lambda;
      if (std::abs(b - a) > gap * std::max(std::abs(a), std::abs(b))) break;
      cl.push_back(order[j]);
      ++j;
    }
    out.push_back(std::move(cl));
    i = j;
  }
  return out;
}

/// Start data for mode j of `starts` on the given path: simple modes start
/// as is; members of a degenerate cluster are rotated onto the eigenvectors of
/// the projected derivative when it splits the cluster, and carry their
/// partners for deflation.
template <class Path>
TrackStart prepare_start(const Path& path, const std::vector<Eigenpair>& starts, int j, const TrackConfig& cfg) {
  TrackStart out;
  out.pair = starts.at(static_cast<std::size_t>(j));
  std::vector<int> cluster;
  for (const auto& cl : degenerate_clusters(starts, cfg.degeneracy_gap))
    if (std::find(cl.begin(), cl.end(), j) != cl.end()) cluster = cl;
  if (cluster.size() < 2) return out;
  std::sort(cluster.begin(), cluster.end());

  const MatrixPencil p0 = path.at(0.0);
  const Eigen::Index n = p0.dimension();
  const int q = static_cast<int>(cluster.size());
  double lbar = 0.0;
  Eigen::MatrixXd basis(n, q);
  for (int i = 0; i < q; ++i) {
    basis.col(i) = starts[cluster[i]].vector;
    lbar += starts[cluster[i]].lambda / q;
  }
  // M-orthonormalize the cluster basis (modified Gram-Schmidt, twice)
  for (int pass = 0; pass < 2; ++pass)
    for (int i = 0; i < q; ++i) {
      for (int k = 0; k < i; ++k) basis.col(i) -= basis.col(k).dot(p0.M * basis.col(i)) * basis.col(k);
      basis.col(i) /= std::sqrt(basis.col(i).dot(p0.M * basis.col(i)));
    }

  const auto [dk, dm] = derivative_at(path, 0.0);
  const SpMat g = dk - lbar * dm;
  Eigen::MatrixXd w = basis.transpose() * (g * basis);
  w = 0.5 * (w + w.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w);
  const auto& wv = es.eigenvalues();
  const double spread = wv.maxCoeff() - wv.minCoeff();
  const double size = wv.cwiseAbs().maxCoeff();
  const bool splits = size > 0.0 && spread > 1e-4 * size;

  int rank = static_cast<int>(std::find(cluster.begin(), cluster.end(), j) - cluster.begin());
  Eigen::MatrixXd rotated = basis;
  if (splits) {
    rotated = basis * es.eigenvectors();  // columns ordered by ascending w
    out.use = PartnerUse::InitialOnly;
  } else {
    out.use = PartnerUse::Persistent;
  }
  Eigen::VectorXd e = rotated.col(rank);
  normalize_eigenvector(p0.M, e);
  out.pair.vector = e;
  out.pair.lambda = e.dot(p0.K * e);
  out.pair.residual = relative_residual(p0, out.pair.lambda, e);
  out.partners.resize(n, q - 1);
  for (int i = 0, col = 0; i < q; ++i)
    if (i != rank) out.partners.col(col++) = rotated.col(i);
  return out;
}

/// Tracks every start pair independently along the path.
template <class Path>
std::vector<TrackState> track_modes(const Path& path, const std::vector<Eigenpair>& starts,
                                    const TrackConfig& cfg) {
  std::vector<TrackState> out;
  out.reserve(starts.size());
  for (int j = 0; j < static_cast<int>(starts.size()); ++j)
    out.push_back(track(path, prepare_start(path, starts, j, cfg), cfg));
  return out;
}

// ---------------------------------------------------------------------------
// Mode identity across collocation points

/// Eigenvalue table: row j = tracked mode j, column k = collocation point k.
/// Failed tracks leave NaN and clear `complete`.
struct ModeTable {
  Eigen::MatrixXd lambda;
  bool complete = true;

  [[nodiscard]] Eigen::MatrixXd frequencies() const {
    return lambda.unaryExpr([](double l) {
      return std::isnan(l) ? std::numeric_limits<double>::quiet_NaN() : frequency_from_lambda(l);
    });
  }
};

/// Assembles the identity-consistent table; tracked[k][j] is the track of base
/// mode j to collocation point k.
inline ModeTable match_modes(const std::vector<Eigenpair>& base,
                             const std::vector<std::vector<TrackState>>& tracked) {
  ModeTable t;
  const auto modes = static_cast<Eigen::Index>(base.size());
  t.lambda = Eigen::MatrixXd::Constant(modes, static_cast<Eigen::Index>(tracked.size()),
                                       std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < tracked.size(); ++k) {
    if (static_cast<Eigen::Index>(tracked[k].size()) != modes)
      throw DomainError("match_modes: track count differs from the number of base modes");
    for (Eigen::Index j = 0; j < modes; ++j) {
      const auto& s = tracked[k][static_cast<std::size_t>(j)];
      if (s.success) {
        t.lambda(j, static_cast<Eigen::Index>(k)) = s.pair.lambda;
      } else {
        t.complete = false;
      }
    }
  }
  return t;
}

/// Rank of each entry within its column (0 = smallest); shows where tracked
/// identity and eigenvalue order disagree.
inline Eigen::MatrixXi rank_table(const ModeTable& t) {
  Eigen::MatrixXi r(t.lambda.rows(), t.lambda.cols());
  for (Eigen::Index k = 0; k < t.lambda.cols(); ++k) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(t.lambda.rows()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Eigen::Index>(i);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return t.lambda(a, k) < t.lambda(b, k); });
    for (std::size_t pos = 0; pos < idx.size(); ++pos) r(idx[pos], k) = static_cast<int>(pos);
  }
  return r;
}

}  // namespace cavitrack
