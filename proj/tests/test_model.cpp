#include "simtrack/model.hpp"

#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"

namespace simtrack {
namespace {

SystemSpec two_level(const CMatrix& b, std::vector<double> spectrum = {1.0, std::sqrt(2.0)}) {
  return SystemSpec{std::move(spectrum), {b}, 0.0};
}

CMatrix mat2(Complex a, Complex b, Complex c, Complex d) {
  CMatrix m(2, 2);
  m << a, b, c, d;
  return m;
}

const HypothesisCheck* find_check(const ValidationReport& r, const std::string& name) {
  for (const auto& c : r.checks)
    if (c.name == name) return &c;
  return nullptr;
}

TEST(ValidateSpec, RealAntisymmetricCouplingPasses) {
  EnsembleSpec spec{{two_level(mat2(0, 1, -1, 0))}, 1.0};
  const auto r = validate_spec(spec);
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(find_check(r, "skew_adjoint")->verdict, Verdict::kPass);
}

TEST(ValidateSpec, SymmetricOffDiagonalFailsWithWitness) {
  EnsembleSpec spec{{two_level(mat2(0, 1, 1, 0))}, 1.0};
  const auto r = validate_spec(spec);
  const auto* c = find_check(r, "skew_adjoint");
  ASSERT_NE(c, nullptr);
  EXPECT_EQ(c->verdict, Verdict::kFail);
  EXPECT_EQ(c->witness, (std::vector<long long>{1, 2}));
}

TEST(ValidateSpec, RepeatedEigenvalueFailsWithLevels) {
  EnsembleSpec spec{{two_level(mat2(0, 1, -1, 0), {1.0, 1.0})}, 1.0};
  const auto* c = find_check(validate_spec(spec), "simple_spectrum");
  ASSERT_NE(c, nullptr);
  EXPECT_EQ(c->verdict, Verdict::kFail);
  EXPECT_EQ(c->witness, (std::vector<long long>{1, 2}));
}

TEST(ValidateSpec, DimensionMismatchIsStructural) {
  EnsembleSpec spec{{SystemSpec{{1.0, 2.0, 3.0}, {mat2(0, 1, -1, 0)}, 0.0}}, 1.0};
  try {
    validate_spec(spec);
    FAIL() << "expected a structural error";
  } catch (const StructuralError& e) {
    EXPECT_NE(std::string(e.what()).find("(1,1)"), std::string::npos);
  }
}

TEST(Nonresonance, IrrationalTriplePasses) {
  const auto r = check_nonresonance({1.0, std::sqrt(2.0), std::sqrt(3.0)}, 50, 1e-9);
  EXPECT_EQ(r.verdict, Verdict::kPass);
  // Oracle: plain exhaustive search over the full box.
  const double x[3] = {1.0, std::sqrt(2.0), std::sqrt(3.0)};
  bool found = false;
  for (int a = -50; a <= 50 && !found; ++a)
    for (int b = -50; b <= 50 && !found; ++b)
      for (int c = -50; c <= 50; ++c)
        if ((a || b || c) && std::abs(a * x[0] + b * x[1] + c * x[2]) <= 1e-9) found = true;
  EXPECT_FALSE(found);
}

TEST(Nonresonance, IntegerSpectrumFailsWithRelation) {
  const auto r = check_nonresonance({1.0, 2.0});
  EXPECT_EQ(r.verdict, Verdict::kFail);
  EXPECT_EQ(r.relation, (std::vector<long long>{2, -1}));
}

TEST(Nonresonance, SingleNonzeroValuePasses) {
  EXPECT_EQ(check_nonresonance({1.0}).verdict, Verdict::kPass);
  EXPECT_EQ(check_nonresonance({0.0}).verdict, Verdict::kFail);
}

TEST(Nonresonance, ReportsUndecidedWhenBudgetTooSmall) {
  const auto r = check_nonresonance({1.0, std::sqrt(2.0), std::sqrt(3.0), std::sqrt(5.0)}, 100, 1e-9, 1000);
  EXPECT_EQ(r.verdict, Verdict::kUndecided);
  EXPECT_LT(r.searched_coeff, 100);
}

TEST(Nonresonance, PermutationSymmetric) {
  std::vector<double> v{std::sqrt(2.0), 3.0, 1.5, std::sqrt(7.0)};
  const auto base = check_nonresonance(v, 20);
  std::sort(v.begin(), v.end());
  do {
    EXPECT_EQ(check_nonresonance(v, 20).verdict, base.verdict);
  } while (std::next_permutation(v.begin(), v.end()));
  EXPECT_EQ(base.verdict, Verdict::kFail);  // 3 - 2*1.5 = 0
}

TEST(Nonresonance, EnsembleConcatenation) {
  EnsembleSpec spec{{SystemSpec{{1.0, std::sqrt(2.0)}, {CMatrix::Zero(2, 2)}, 0.0},
                     SystemSpec{{std::sqrt(3.0)}, {CMatrix::Zero(1, 1)}, 0.0}},
                    1.0};
  EXPECT_EQ(check_nonresonance(spec, 50).verdict, Verdict::kPass);
}

CMatrix tridiagonal3() {
  CMatrix b = CMatrix::Zero(3, 3);
  b(0, 1) = 1.0;
  b(1, 0) = -1.0;
  b(1, 2) = 0.5;
  b(2, 1) = -0.5;
  return b;
}

TEST(Chain, TridiagonalGivesPath) {
  EnsembleSpec spec{{SystemSpec{{1, 2, 3}, {tridiagonal3()}, 0.0}}, 1.0};
  const auto chain = find_connectedness_chain(spec, 0, 0, 3);
  ASSERT_TRUE(chain.has_value());
  ASSERT_EQ(chain->pairs.size(), 2u);
  EXPECT_EQ(chain->pairs[0], (LevelPair{0, 1}));
  EXPECT_EQ(chain->pairs[1], (LevelPair{1, 2}));
}

TEST(Chain, BlockDiagonalHasNone) {
  CMatrix b = CMatrix::Zero(3, 3);
  b(0, 1) = 1.0;
  b(1, 0) = -1.0;
  EnsembleSpec spec{{SystemSpec{{1, 2, 3}, {b}, 0.0}}, 1.0};
  EXPECT_FALSE(find_connectedness_chain(spec, 0, 0, 3).has_value());
  EXPECT_TRUE(find_connectedness_chain(spec, 0, 0, 2).has_value());
}

// Independent oracle: depth-first connectivity of the coupling graph.
bool connected_oracle(const CMatrix& b, int depth) {
  std::vector<bool> seen(depth, false);
  std::vector<int> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    const int k = stack.back();
    stack.pop_back();
    for (int l = 0; l < depth; ++l)
      if (!seen[l] && std::abs(b(k, l)) > 1e-12) {
        seen[l] = true;
        stack.push_back(l);
      }
  }
  return std::all_of(seen.begin(), seen.end(), [](bool s) { return s; });
}

bool chain_spans(const std::vector<LevelPair>& pairs, int depth) {
  CMatrix adj = CMatrix::Zero(depth, depth);
  for (const auto& p : pairs) adj(p.k, p.l) = adj(p.l, p.k) = 1.0;
  return connected_oracle(adj, depth);
}

TEST(Chain, DenseDepthFourSpans) {
  std::mt19937 rng(7);
  EnsembleSpec spec{{SystemSpec{{1, 2, 3, 4}, {testing::random_skew(rng, 4)}, 0.0}}, 1.0};
  const auto chain = find_connectedness_chain(spec, 0, 0, 4);
  ASSERT_TRUE(chain.has_value());
  EXPECT_GE(chain->pairs.size(), 3u);
  EXPECT_TRUE(chain_spans(chain->pairs, 4));
  for (const auto& p : chain->pairs) EXPECT_GT(std::abs(spec.systems[0].couplings[0](p.k, p.l)), 1e-12);
}

TEST(Chain, AgreesWithConnectivityOracleOnRandomGraphs) {
  std::mt19937 rng(8);
  std::bernoulli_distribution keep(0.35);
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 2 + trial % 5;
    CMatrix b = CMatrix::Zero(d, d);
    for (int k = 0; k < d; ++k)
      for (int l = k + 1; l < d; ++l)
        if (keep(rng)) {
          b(k, l) = Complex(0.3, 0.7);
          b(l, k) = -std::conj(b(k, l));
        }
    std::vector<double> spec_values(d);
    for (int k = 0; k < d; ++k) spec_values[k] = k + 1;
    EnsembleSpec spec{{SystemSpec{spec_values, {b}, 0.0}}, 1.0};
    const auto chain = find_connectedness_chain(spec, 0, 0, d);
    EXPECT_EQ(chain.has_value(), connected_oracle(b, d));
    if (chain) {
      EXPECT_TRUE(chain_spans(chain->pairs, d));
    }
  }
}

TEST(Separation, SingleControlIsVacuous) {
  EnsembleSpec spec{{two_level(mat2(0, 1, -1, 0))}, 1.0};
  const auto chain = find_connectedness_chain(spec, 0, 0, 2);
  EXPECT_EQ(check_modulus_separation(spec, *chain).verdict, Verdict::kPass);
}

TEST(Separation, DistinctModuliPassEqualModuliFail) {
  EnsembleSpec spec{{SystemSpec{{1.0, std::sqrt(2.0)}, {mat2(0, -1, 1, 0), mat2(0, -0.5, 0.5, 0)}, 0.0}}, 1.0};
  const auto chain = find_connectedness_chain(spec, 0, 0, 2);
  EXPECT_EQ(check_modulus_separation(spec, *chain).verdict, Verdict::kPass);

  spec.systems[0].couplings[1] = mat2(0, 1, -1, 0);
  const auto res = check_modulus_separation(spec, *chain);
  EXPECT_EQ(res.verdict, Verdict::kFail);
  EXPECT_EQ(res.other_control, 1);
  EXPECT_EQ(res.pair, (LevelPair{0, 1}));
}

TEST(Separation, SearchAvoidsCoincidentPairs) {
  // Pair (1,2) has equal moduli across controls; (1,3),(2,3) do not.
  CMatrix b1 = CMatrix::Zero(3, 3), b2 = CMatrix::Zero(3, 3);
  auto set = [](CMatrix& b, int k, int l, double v) {
    b(k, l) = v;
    b(l, k) = -v;
  };
  set(b1, 0, 1, 1.0);
  set(b2, 0, 1, -1.0);
  set(b1, 0, 2, 0.8);
  set(b2, 0, 2, 0.3);
  set(b1, 1, 2, 0.6);
  set(b2, 1, 2, 0.2);
  EnsembleSpec spec{{SystemSpec{{1, 2, 3}, {b1, b2}, 0.0}}, 1.0};
  const auto plain = find_connectedness_chain(spec, 0, 0, 3);
  EXPECT_EQ(check_modulus_separation(spec, *plain).verdict, Verdict::kFail);
  const auto search = find_separated_chain(spec, 0, 0, 3);
  ASSERT_TRUE(search.chain.has_value());
  EXPECT_EQ(check_modulus_separation(spec, *search.chain).verdict, Verdict::kPass);
  EXPECT_EQ(search.rejected.size(), 1u);
}

TEST(Invariants, DriftPlusCouplingStaysSkew) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> c(-5.0, 5.0);
  const CMatrix b = testing::random_skew(rng, 4);
  EnsembleSpec spec{{SystemSpec{{1.0, 1.7, 2.9, 4.2}, {b}, 0.0}}, 1.0};
  ASSERT_TRUE(validate_spec(spec).passed());
  for (int trial = 0; trial < 20; ++trial) {
    CMatrix h = c(rng) * b;
    for (int k = 0; k < 4; ++k) h(k, k) += kI * spec.systems[0].spectrum[k];
    EXPECT_LT((h + h.adjoint()).cwiseAbs().maxCoeff(), 1e-14);
  }
}

}  // namespace
}  // namespace simtrack
