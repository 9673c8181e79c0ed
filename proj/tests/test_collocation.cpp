#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <set>

#include "cavitrack/collocation.hpp"

using namespace cavitrack;

namespace {

double normal_moment(int k) {
  if (k % 2) return 0.0;
  double m = 1.0;
  for (int j = k - 1; j > 0; j -= 2) m *= j;
  return m;
}

// all exponent vectors of the given dimension with total degree <= max_degree
void exponents(int dims, int max_degree, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == dims) {
    out.push_back(cur);
    return;
  }
  for (int k = 0; k <= max_degree; ++k) {
    cur.push_back(k);
    exponents(dims, max_degree - k, cur, out);
    cur.pop_back();
  }
}

double integrate_monomial(const CollocationGrid& g, const std::vector<int>& a) {
  double s = 0.0;
  for (int k = 0; k < g.size(); ++k) {
    double v = g.weights[k];
    for (int d = 0; d < g.dimension(); ++d) v *= std::pow(g.nodes(k, d), a[d]);
    s += v;
  }
  return s;
}

}  // namespace

TEST(Rule1D, UniformSupportIsAProbabilityRule) {
  const auto r = rule_1d(RuleFamily::ClenshawCurtis, 5, {0.04, 0.06});
  EXPECT_NEAR(std::accumulate(r.weights.begin(), r.weights.end(), 0.0), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(r.nodes.front(), 0.04);
  EXPECT_DOUBLE_EQ(r.nodes.back(), 0.06);
  EXPECT_DOUBLE_EQ(r.nodes[2], 0.05);
  // mean and variance of U(0.04, 0.06)
  double m = 0.0, v = 0.0;
  for (std::size_t i = 0; i < 5; ++i) m += r.weights[i] * r.nodes[i];
  for (std::size_t i = 0; i < 5; ++i) v += r.weights[i] * (r.nodes[i] - m) * (r.nodes[i] - m);
  EXPECT_NEAR(m, 0.05, 1e-16);
  EXPECT_NEAR(v, 0.02 * 0.02 / 12.0, 1e-18);
  EXPECT_THROW(rule_1d(RuleFamily::GaussLegendre, 3, {1.0, 0.0}), DomainError);
  EXPECT_EQ(rule_family_from_string("gauss_legendre"), RuleFamily::GaussLegendre);
  EXPECT_THROW(rule_family_from_string("simpson"), DomainError);
}

TEST(TensorGrid, SizeOrderingAndExactness) {
  const auto g = build_tensor_grid({rule_1d(RuleFamily::GaussLegendre, 3), rule_1d(RuleFamily::GaussHermite, 4)});
  EXPECT_EQ(g.size(), 12);
  EXPECT_EQ(g.node(1)(1), g.node(0)(1));  // first dimension varies fastest
  EXPECT_NEAR(std::accumulate(g.weights.begin(), g.weights.end(), 0.0), 1.0, 1e-14);
  // E[x^4] for U(-1, 1) times E[z^6] for N(0, 1)
  EXPECT_NEAR(integrate_monomial(g, {4, 6}), 0.2 * 15.0, 1e-12);
  std::vector<Rule1D> many(8, rule_1d(RuleFamily::GaussHermite, 9));
  EXPECT_THROW(build_tensor_grid(many), DimensionalityError);
}

TEST(Smolyak, SevenDimensionalLevelTwoHas127Nodes) {
  const auto g = build_smolyak_grid(7, 2, RuleFamily::GaussHermite);
  EXPECT_EQ(g.size(), 127);
  std::set<std::vector<double>> distinct;
  for (int k = 0; k < g.size(); ++k) {
    const Eigen::VectorXd x = g.node(k);
    distinct.insert(std::vector<double>(x.data(), x.data() + x.size()));
  }
  EXPECT_EQ(distinct.size(), 127u);
}

TEST(Smolyak, NodeCountFollowsTheClosedForm) {
  // level 2 with non-nested 1-, 3- and 5-point rules sharing only the origin
  // in one dimension only the finest rule survives the combination
  EXPECT_EQ(build_smolyak_grid(1, 2, RuleFamily::GaussHermite).size(), 5);
  for (int d = 2; d <= 8; ++d) EXPECT_EQ(build_smolyak_grid(d, 2, RuleFamily::GaussHermite).size(), 1 + 6 * d + 2 * d * (d - 1)) << d;
  EXPECT_EQ(build_smolyak_grid(5, 0, RuleFamily::GaussHermite).size(), 1);
  EXPECT_EQ(build_smolyak_grid(4, 1, RuleFamily::GaussHermite).size(), 1 + 2 * 4);
  EXPECT_EQ(smolyak_order(3), 5);
}

TEST(Smolyak, ExactForTotalDegreeThreeGaussianMonomials) {
  const auto g = build_smolyak_grid(7, 2, RuleFamily::GaussHermite);
  std::vector<std::vector<int>> all;
  std::vector<int> cur;
  exponents(7, 3, cur, all);
  EXPECT_EQ(all.size(), 120u);
  for (const auto& a : all) {
    double exact = 1.0;
    for (int k : a) exact *= normal_moment(k);
    EXPECT_NEAR(integrate_monomial(g, a), exact, 1e-12);
  }
}

TEST(Smolyak, LegendreLevelThreeIsExactToDegreeFive) {
  const auto g = build_smolyak_grid(3, 3, RuleFamily::GaussLegendre, {0.0, 2.0});
  std::vector<std::vector<int>> all;
  std::vector<int> cur;
  exponents(3, 5, cur, all);
  for (const auto& a : all) {
    double exact = 1.0;
    for (int k : a) exact *= std::pow(2.0, k) / (k + 1);  // E[x^k] for U(0, 2)
    EXPECT_NEAR(integrate_monomial(g, a), exact, 1e-12);
  }
  EXPECT_THROW(build_smolyak_grid(0, 1, RuleFamily::GaussLegendre), DomainError);
  EXPECT_THROW(build_smolyak_grid(2, -1, RuleFamily::GaussLegendre), DomainError);
}

TEST(Moments, WeightedMeanAndVariance) {
  const auto g = build_tensor_grid({rule_1d(RuleFamily::GaussHermite, 5)});
  Eigen::MatrixXd values(2, 5);
  for (int k = 0; k < 5; ++k) {
    const double z = g.nodes(k, 0);
    values(0, k) = 3.0 + 2.0 * z;  // N(3, 4)
    values(1, k) = 7.0;
  }
  const auto m = estimate_moments(values, g);
  EXPECT_NEAR(m.mean[0], 3.0, 1e-14);
  EXPECT_NEAR(m.variance[0], 4.0, 1e-13);
  EXPECT_NEAR(m.mean[1], 7.0, 1e-14);
  EXPECT_NEAR(m.variance[1], 0.0, 1e-28);
  values(1, 2) = std::nan("");
  EXPECT_THROW(estimate_moments(values, g), DomainError);
  EXPECT_THROW(estimate_moments(Eigen::MatrixXd::Zero(1, 3), g), DomainError);
}

TEST(Surrogate, ReproducesPolynomialsOnTensorGrids) {
  const auto g = build_tensor_grid({rule_1d(RuleFamily::ClenshawCurtis, 4), rule_1d(RuleFamily::GaussLegendre, 3)});
  const auto f = [](double x, double y) { return 1.0 + x - 2 * x * x * x + x * y * y - 0.5 * y; };
  Eigen::VectorXd values(g.size());
  for (int k = 0; k < g.size(); ++k) values(k) = f(g.nodes(k, 0), g.nodes(k, 1));
  for (double x : {-0.9, 0.1, 0.77})
    for (double y : {-0.3, 0.5})
      EXPECT_NEAR(surrogate_eval(g, values, Eigen::Vector2d(x, y)), f(x, y), 1e-13);
  EXPECT_THROW(surrogate_eval(build_smolyak_grid(2, 1, RuleFamily::GaussHermite), Eigen::VectorXd::Zero(5),
                              Eigen::Vector2d::Zero()),
               UnsupportedError);
}
