#include "simtrack/linalg.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace simtrack {
namespace {

using testing::random_skew;

TEST(Expm, MatchesTaylorSeries) {
  std::mt19937 rng(1);
  for (int m : {1, 2, 3, 5}) {
    const CMatrix h = random_skew(rng, m, 2.0);
    EXPECT_LT((expm_skew(h) - testing::taylor_expm(h)).norm(), 1e-12);
    EXPECT_LT(unitarity_defect(expm_skew(h, 7.3)), 1e-13);
  }
}

TEST(Expm, FactorizationEvaluatesAnyTime) {
  std::mt19937 rng(2);
  const CMatrix h = random_skew(rng, 4);
  const SkewExponential e(h);
  EXPECT_LT((e(0.3) * e(0.4) - e(0.7)).norm(), 1e-13);
  EXPECT_LT((e(0.0) - CMatrix::Identity(4, 4)).norm(), 1e-14);
}

TEST(Logm, InvertsExpOnPrincipalBranch) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    CMatrix h = random_skew(rng, 3);
    h *= 2.0 / operator_norm(h);  // eigenphases inside (-pi, pi)
    EXPECT_LT((logm_unitary(expm_skew(h)) - h).norm(), 1e-12);
  }
}

TEST(Distance, IsBiInvariant) {
  std::mt19937 rng(4);
  const CMatrix a = testing::random_unitary(rng, 3);
  const CMatrix b = testing::random_unitary(rng, 3);
  const CMatrix g = testing::random_unitary(rng, 3);
  const double d = group_distance(a, b);
  EXPECT_NEAR(group_distance(g * a, g * b), d, 1e-12);
  EXPECT_NEAR(group_distance(a * g, b * g), d, 1e-12);
  EXPECT_NEAR(group_distance(a, a), 0.0, 1e-12);
}

TEST(Nnls, MatchesEnumerationOfSupports) {
  std::mt19937 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    RMatrix a(6, 4);
    RVector b(6);
    for (int r = 0; r < 6; ++r) {
      b(r) = n(rng);
      for (int c = 0; c < 4; ++c) a(r, c) = n(rng);
    }
    const RVector x = nnls(a, b);
    EXPECT_GE(x.minCoeff(), 0.0);
    // Oracle: best feasible unconstrained solution over all supports.
    double best = b.norm();
    for (int mask = 1; mask < 16; ++mask) {
      std::vector<int> cols;
      for (int c = 0; c < 4; ++c)
        if (mask & (1 << c)) cols.push_back(c);
      RMatrix sub(6, cols.size());
      for (std::size_t c = 0; c < cols.size(); ++c) sub.col(c) = a.col(cols[c]);
      const RVector s = sub.colPivHouseholderQr().solve(b);
      if (s.minCoeff() >= 0.0) best = std::min(best, (sub * s - b).norm());
    }
    EXPECT_NEAR((a * x - b).norm(), best, 1e-10);
  }
}

TEST(SimplexLeastSquares, ReturnsConvexWeights) {
  RMatrix c(2, 3);
  c << 0, 1, 0,
       0, 0, 1;
  RVector d(2);
  d << 0.25, 0.25;
  const RVector w = simplex_least_squares(c, d);
  EXPECT_NEAR(w.sum(), 1.0, 1e-12);
  EXPECT_GE(w.minCoeff(), 0.0);
  EXPECT_NEAR(w(0), 0.5, 1e-6);
  EXPECT_LT((c * w - d).norm(), 1e-6);
}

TEST(Vandermonde, SolvesSmallSystem) {
  RVector nodes(3), rhs(3);
  nodes << 1, 2, 3;
  rhs << 6, 14, 36;  // coefficients (1, 2, 3): sum c_j, sum c_j x_j, sum c_j x_j^2
  double cond = 0.0;
  const RVector c = solve_vandermonde(nodes, rhs, &cond);
  EXPECT_NEAR(c(0), 1.0, 1e-12);
  EXPECT_NEAR(c(1), 2.0, 1e-12);
  EXPECT_NEAR(c(2), 3.0, 1e-12);
  EXPECT_GT(cond, 1.0);
}

}  // namespace
}  // namespace simtrack
