#pragma once

// Stochastic collocation: probability-normalized 1D rules, tensor and Smolyak
// grids, moment estimation and tensor Lagrange surrogates.

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cavitrack/errors.hpp"
#include "cavitrack/quadrature.hpp"

namespace cavitrack {

enum class RuleFamily { GaussHermite, GaussLegendre, ClenshawCurtis };

inline std::string to_string(RuleFamily f) {
  switch (f) {
    case RuleFamily::GaussHermite: return "gauss_hermite";
    case RuleFamily::GaussLegendre: return "gauss_legendre";
    case RuleFamily::ClenshawCurtis: return "clenshaw_curtis";
  }
  return "unknown";
}

inline RuleFamily rule_family_from_string(const std::string& s) {
  if (s == "gauss_hermite") return RuleFamily::GaussHermite;
  if (s == "gauss_legendre") return RuleFamily::GaussLegendre;
  if (s == "clenshaw_curtis") return RuleFamily::ClenshawCurtis;
  throw DomainError("unknown rule family '" + s + "'");
}

/// Interval of a uniformly distributed parameter (ignored by Gauss-Hermite,
/// which always targets the standard normal density).
struct Support {
  double low = -1.0;
  double high = 1.0;
};

/// 1D rule whose weights are probabilities (sum to 1).
struct Rule1D {
  RuleFamily family = RuleFamily::GaussHermite;
  int order = 1;
  Support support;
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline Rule1D rule_1d(RuleFamily family, int n, Support support = {}) {
  if (n < 1) throw DomainError("rule_1d: n must be >= 1");
  Rule1D r;
  r.family = family;
  r.order = n;
  r.support = support;
  quadrature::Rule ref;
  switch (family) {
    case RuleFamily::GaussHermite:
      ref = quadrature::gauss_hermite(n);
      r.nodes = ref.nodes;
      r.weights = ref.weights;
      return r;
    case RuleFamily::GaussLegendre: ref = quadrature::gauss_legendre(n); break;
    case RuleFamily::ClenshawCurtis: ref = quadrature::clenshaw_curtis(n); break;
  }
  if (!(support.high >= support.low)) throw DomainError("rule_1d: empty support interval");
  const double mid = 0.5 * (support.low + support.high);
  const double half = 0.5 * (support.high - support.low);
  for (std::size_t i = 0; i < ref.nodes.size(); ++i) {
    r.nodes.push_back(mid + half * ref.nodes[i]);
    r.weights.push_back(0.5 * ref.weights[i]);  // uniform density on the support
  }
  return r;
}

enum class GridKind { Tensor, Smolyak };

struct CollocationGrid {
  Eigen::MatrixXd nodes;  ///< N_k x dim
  std::vector<double> weights;
  GridKind kind = GridKind::Tensor;
  RuleFamily family = RuleFamily::GaussHermite;
  int level = 0;              ///< Smolyak level
  std::vector<Rule1D> rules;  ///< per-dimension rules (tensor grids only)

  [[nodiscard]] int size() const { return static_cast<int>(nodes.rows()); }
  [[nodiscard]] int dimension() const { return static_cast<int>(nodes.cols()); }
  [[nodiscard]] Eigen::VectorXd node(int k) const { return nodes.row(k).transpose(); }
};

inline constexpr double kMaxTensorNodes = 1e7;

/// Cartesian product of 1D rules; dimension 0 varies fastest.
inline CollocationGrid build_tensor_grid(const std::vector<Rule1D>& rules) {
  if (rules.empty()) throw DomainError("build_tensor_grid: need at least one dimension");
  double count_d = 1.0;
  for (const auto& r : rules) count_d *= static_cast<double>(r.nodes.size());
  if (count_d > kMaxTensorNodes)
    throw DimensionalityError("build_tensor_grid: " + std::to_string(count_d) +
                              " nodes exceed the tensor-grid guard");
  const int dims = static_cast<int>(rules.size());
  const int count = static_cast<int>(count_d);

  CollocationGrid g;
  g.kind = GridKind::Tensor;
  g.family = rules.front().family;
  g.rules = rules;
  g.nodes.resize(count, dims);
  g.weights.assign(count, 1.0);
  std::vector<int> odo(dims, 0);
  for (int k = 0; k < count; ++k) {
    for (int d = 0; d < dims; ++d) {
      g.nodes(k, d) = rules[d].nodes[odo[d]];
      g.weights[k] *= rules[d].weights[odo[d]];
    }
    for (int d = 0; d < dims; ++d) {
      if (++odo[d] < static_cast<int>(rules[d].nodes.size())) break;
      odo[d] = 0;
    }
  }
  return g;
}

/// Smolyak order map: level index l >= 1 uses 2l-1 points.
inline int smolyak_order(int l) { return 2 * l - 1; }

namespace detail {

inline void enumerate_multi_indices(int dims, int max_sum, std::vector<int>& current,
                                    std::vector<std::vector<int>>& out) {
  if (static_cast<int>(current.size()) == dims) {
    out.push_back(current);
    return;
  }
  for (int k = 0; k <= max_sum; ++k) {
    current.push_back(k);
    enumerate_multi_indices(dims, max_sum - k, current, out);
    current.pop_back();
  }
}

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double b = 1.0;
  for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
  return b;
}

}  // namespace detail

/// Standard Smolyak combination of the 1D rules of `family` with orders
/// 1, 3, 5, ...; coinciding nodes are merged and their weights summed.
inline CollocationGrid build_smolyak_grid(int dims, int level, RuleFamily family,
                                          Support support = {}) {
  if (dims < 1) throw DomainError("build_smolyak_grid: dim must be >= 1");
  if (level < 0) throw DomainError("build_smolyak_grid: level must be >= 0");

  std::vector<Rule1D> by_level;
  for (int l = 1; l <= level + 1; ++l) by_level.push_back(rule_1d(family, smolyak_order(l), support));

  std::vector<std::vector<int>> indices;
  std::vector<int> cur;
  detail::enumerate_multi_indices(dims, level, cur, indices);

  std::map<std::vector<double>, double> merged;
  for (const auto& k : indices) {
    int sum = 0;
    for (int v : k) sum += v;
    if (sum < level - dims + 1) continue;
    const int gap = level - sum;
    const double coeff = ((gap % 2) ? -1.0 : 1.0) * detail::binomial(dims - 1, gap);
    if (coeff == 0.0) continue;
    std::vector<Rule1D> rules;
    for (int v : k) rules.push_back(by_level[v]);
    const auto t = build_tensor_grid(rules);
    for (int q = 0; q < t.size(); ++q) {
      std::vector<double> key(dims);
      for (int d = 0; d < dims; ++d) key[d] = t.nodes(q, d);
      merged[key] += coeff * t.weights[q];
    }
  }

  CollocationGrid g;
  g.kind = GridKind::Smolyak;
  g.family = family;
  g.level = level;
  g.nodes.resize(static_cast<Eigen::Index>(merged.size()), dims);
  int row = 0;
  for (const auto& [key, w] : merged) {
    for (int d = 0; d < dims; ++d) g.nodes(row, d) = key[d];
    g.weights.push_back(w);
    ++row;
  }
  return g;
}

struct Moments {
  std::vector<double> mean;
  std::vector<double> variance;
};

/// Weighted sums over the collocation nodes; values(j, k) = f_j(delta_k).
/// NaN entries mark failed solves and make the table incomplete.
inline Moments estimate_moments(const Eigen::MatrixXd& values, const CollocationGrid& grid) {
  if (values.cols() != grid.size())
    throw DomainError("estimate_moments: table width != number of nodes");
  if (!values.allFinite()) throw DomainError("estimate_moments: incomplete value table");
  Moments m;
  for (Eigen::Index j = 0; j < values.rows(); ++j) {
    double e = 0.0;
    for (int k = 0; k < grid.size(); ++k) e += values(j, k) * grid.weights[k];
    double var = 0.0;
    for (int k = 0; k < grid.size(); ++k) {
      const double d = values(j, k) - e;
      var += d * d * grid.weights[k];
    }
    m.mean.push_back(e);
    m.variance.push_back(var);
  }
  return m;
}

namespace detail {

inline std::vector<double> lagrange_values(const std::vector<double>& nodes, double x) {
  const std::size_t n = nodes.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (x == nodes[i]) {
      out[i] = 1.0;
      return out;
    }
  }
  // barycentric weights
  std::vector<double> bw(n, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) bw[i] /= (nodes[i] - nodes[j]);
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = bw[i] / (x - nodes[i]);
    denom += out[i];
  }
  for (double& v : out) v /= denom;
  return out;
}

}  // namespace detail

/// Tensor-product Lagrange interpolant of nodal values at `query`.
inline double surrogate_eval(const CollocationGrid& grid, const Eigen::VectorXd& values,
                             const Eigen::VectorXd& query) {
  if (grid.kind != GridKind::Tensor)
    throw UnsupportedError("surrogate_eval: only tensor grids carry a Lagrange basis");
  if (values.size() != grid.size() || query.size() != grid.dimension())
    throw DomainError("surrogate_eval: dimension mismatch");
  const int dims = grid.dimension();
  std::vector<std::vector<double>> basis(dims);
  for (int d = 0; d < dims; ++d) basis[d] = detail::lagrange_values(grid.rules[d].nodes, query(d));
  double sum = 0.0;
  std::vector<int> odo(dims, 0);
  for (int k = 0; k < grid.size(); ++k) {
    double l = 1.0;
    for (int d = 0; d < dims; ++d) l *= basis[d][odo[d]];
    sum += l * values(k);
    for (int d = 0; d < dims; ++d) {
      if (++odo[d] < static_cast<int>(grid.rules[d].nodes.size())) break;
      odo[d] = 0;
    }
  }
  return sum;
}

}  // namespace cavitrack
