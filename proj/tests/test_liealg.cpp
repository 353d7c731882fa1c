#include "simtrack/liealg.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace simtrack {
namespace {

BlockSkew single(const CMatrix& x) { return BlockSkew{{x}}; }

CMatrix pair3(int k, int l, Complex v) {
  CMatrix x = CMatrix::Zero(3, 3);
  x(k, l) = v;
  x(l, k) = -std::conj(v);
  return x;
}

TEST(Bracket, Antisymmetry) {
  std::mt19937 rng(21);
  const auto a = single(testing::random_skew(rng, 3));
  EXPECT_LT(bracket(a, a).norm(), 1e-15);
}

TEST(Bracket, AdjacentPairsMeetAtOuterPair) {
  const auto a = single(pair3(0, 1, 1.0));
  const auto b = single(pair3(1, 2, Complex(0.5, 0.2)));
  const CMatrix c = bracket(a, b).blocks[0];
  const CMatrix oracle = a.blocks[0] * b.blocks[0] - b.blocks[0] * a.blocks[0];
  EXPECT_LT((c - oracle).norm(), 1e-15);
  for (int k = 0; k < 3; ++k)
    for (int l = 0; l < 3; ++l) {
      const bool allowed = k == l || (k == 0 && l == 2) || (k == 2 && l == 0);
      if (!allowed) {
        EXPECT_EQ(c(k, l), Complex(0.0));
      }
    }
  EXPECT_GT(std::abs(c(0, 2)), 0.1);
}

TEST(Bracket, JacobiAndSkewTraceless) {
  std::mt19937 rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    BlockSkew a{{testing::random_skew(rng, 3), testing::random_skew(rng, 3)}};
    BlockSkew b{{testing::random_skew(rng, 3), testing::random_skew(rng, 3)}};
    BlockSkew c{{testing::random_skew(rng, 3), testing::random_skew(rng, 3)}};
    const auto j = bracket(a, bracket(b, c)) + bracket(b, bracket(c, a)) + bracket(c, bracket(a, b));
    EXPECT_LT(j.norm(), 1e-12);
    for (const auto& blk : bracket(a, b).blocks) {
      EXPECT_LT((blk + blk.adjoint()).norm(), 1e-13);
      EXPECT_LT(std::abs(blk.trace()), 1e-13);
    }
  }
  BlockSkew a{{CMatrix::Zero(2, 2)}};
  BlockSkew b{{CMatrix::Zero(3, 3)}};
  EXPECT_THROW(bracket(a, b), StructuralError);
}

GalerkinModel three_level() {
  CMatrix b = CMatrix::Zero(3, 3);
  b(0, 1) = 1.0;
  b(1, 0) = -1.0;
  b(1, 2) = Complex(0.6, 0.3);
  b(2, 1) = -std::conj(b(1, 2));
  b(0, 2) = 0.4;
  b(2, 0) = -0.4;
  return testing::single_block_model({1.0, std::sqrt(2.0), std::sqrt(3.0)}, b);
}

TEST(PhaseAverage, TwoLevelReproducesPair) {
  CMatrix b(2, 2);
  b << 0, 1, -1, 0;
  const auto model = testing::single_block_model({1.0, std::sqrt(2.0)}, b);
  AveragingBudget budget;
  budget.samples = 200;
  const auto avg = phase_average_extract(model, 1.0, 0, 0, 1, 0.0, budget);
  EXPECT_LT(avg.residual, 1e-3);
  // Oracle: measure the residual against the exact pair matrix directly.
  CMatrix value = CMatrix::Zero(2, 2);
  for (std::size_t r = 0; r < avg.thetas.size(); ++r) {
    const CMatrix a = model.drift(0);
    value += avg.weights[r] * (testing::taylor_expm(-avg.thetas[r] * a) * b * testing::taylor_expm(avg.thetas[r] * a));
  }
  EXPECT_LT(operator_norm(value - b), 1e-3);
}

TEST(PhaseAverage, OppositePhasesAreNegatives) {
  const auto model = three_level();
  const auto a = phase_average_extract(model, 1.0, 0, 0, 1, 0.0);
  const auto b = phase_average_extract(model, 1.0, 0, 0, 1, kPi);
  EXPECT_LT((a.value + b.value).op_norm(), a.residual + b.residual + 1e-12);
}

TEST(PhaseAverage, ConvexWeights) {
  const auto model = three_level();
  for (int k = 0; k < 3; ++k)
    for (int l = k + 1; l < 3; ++l) {
      const auto avg = phase_average_extract(model, 1.0, 0, k, l, 0.7);
      double sum = 0;
      for (double w : avg.weights) {
        EXPECT_GE(w, 0.0);
        sum += w;
      }
      EXPECT_LT(std::abs(sum - 1.0), 1e-12);
      for (double th : avg.thetas) EXPECT_GE(th, 0.0);
    }
}

TEST(PhaseAverage, OneLevelReturnsDiagonal) {
  CMatrix b(1, 1);
  b << Complex(0, 0.3);
  const auto model = testing::single_block_model({1.0}, b);
  const auto avg = phase_average_extract(model, 1.0, 0, 0, 0, 0.0);
  EXPECT_EQ(avg.value.blocks[0](0, 0), Complex(0, 0.3));
  EXPECT_EQ(avg.residual, 0.0);
}

TEST(PhaseAverage, ResonantSpectrumFailsWithResidual) {
  CMatrix b = CMatrix::Zero(3, 3);
  b(0, 1) = 1.0;
  b(1, 0) = -1.0;
  b(1, 2) = 1.0;
  b(2, 1) = -1.0;
  const auto model = testing::single_block_model({1.0, 2.0, 3.0}, b);  // equal gaps
  try {
    phase_average_extract(model, 1.0, 0, 0, 1, 0.0);
    FAIL();
  } catch (const SynthesisError& e) {
    ASSERT_TRUE(e.achieved().has_value());
    EXPECT_GT(*e.achieved(), 1e-3);
  }
}

PairMatrix pair(int control, Complex v) { return PairMatrix{0, control, 0, 1, v, -std::conj(v)}; }

TEST(Vandermonde, SingleControlUnchanged) {
  const auto iso = vandermonde_isolate({pair(0, Complex(0.3, 0.9))}, 0, 2);
  EXPECT_LT((iso.value.blocks[0] - pair(0, Complex(0.3, 0.9)).dense(2)).norm(), 1e-15);
}

TEST(Vandermonde, DoubleBracketCoefficient) {
  const std::vector<PairMatrix> stack{pair(0, 1.0), pair(1, Complex(0.0, 0.5))};
  BlockSkew a = BlockSkew::zero(2, 2), b = BlockSkew::zero(2, 2), want = BlockSkew::zero(2, 2);
  for (int j = 0; j < 2; ++j) {
    a.blocks[j] = stack[j].dense(2);
    b.blocks[j] = stack[j].rotated(kPi / 2).dense(2);
    want.blocks[j] = -4.0 * std::norm(stack[j].b_kl) * stack[j].dense(2);
  }
  EXPECT_LT((bracket(bracket(a, b), b) - want).norm(), 1e-14);
  for (int j0 = 0; j0 < 2; ++j0) EXPECT_LT(vandermonde_isolate(stack, j0, 2).residual, 1e-10);
}

TEST(Vandermonde, ThreeControlsMatchDirectPair) {
  const std::vector<PairMatrix> stack{pair(0, 1.0), pair(1, std::polar(0.9, 1.0)), pair(2, std::polar(0.8, -2.0))};
  for (int j0 = 0; j0 < 3; ++j0) {
    const auto iso = vandermonde_isolate(stack, j0, 3);
    BlockSkew direct = BlockSkew::zero(3, 3);
    direct.blocks[j0] = stack[j0].dense(3);
    EXPECT_LT((iso.value - direct).norm(), 1e-8);
  }
}

TEST(Vandermonde, CoincidentModuliRejected) {
  const std::vector<PairMatrix> stack{pair(0, 1.0), pair(1, std::polar(1.0, 0.5))};
  EXPECT_THROW(vandermonde_isolate(stack, 0, 2), SynthesisError);
}

GeneratorSet chain_generators() {
  const CMatrix b = pair3(0, 1, 1.0) + pair3(1, 2, 1.0);
  return build_generator_set(testing::single_block_model({1.0, std::sqrt(2.0), std::sqrt(3.0)}, b));
}

// Oracle: rank of all right-nested brackets up to the given depth.
int bracket_span_rank(const std::vector<BlockSkew>& gens, int depth) {
  std::vector<BlockSkew> all = gens, layer = gens;
  for (int d = 0; d < depth; ++d) {
    std::vector<BlockSkew> next;
    for (const auto& x : layer)
      for (const auto& g : gens) next.push_back(bracket(g, x));
    all.insert(all.end(), next.begin(), next.end());
    layer = next;
  }
  RMatrix m(flatten(all[0]).size(), all.size());
  for (std::size_t c = 0; c < all.size(); ++c) m.col(c) = flatten(all[c]);
  Eigen::JacobiSVD<RMatrix> svd(m);
  int rank = 0;
  for (Eigen::Index s = 0; s < svd.singularValues().size(); ++s)
    if (svd.singularValues()(s) > 1e-9 * svd.singularValues()(0)) ++rank;
  return rank;
}

std::vector<BlockSkew> primaries(const GeneratorSet& g) {
  std::vector<BlockSkew> out;
  for (int k = 0; k < g.size(); k += 2) out.push_back(g.elements[k].value);
  return out;
}

TEST(Closure, ChainOfSu3) {
  const auto g = chain_generators();
  EXPECT_EQ(g.size(), 8);  // two pairs, two phases, both signs
  EXPECT_EQ(lie_closure(g, 9).dimension, 8);
  EXPECT_EQ(bracket_span_rank(primaries(g), 3), 8);
}

TEST(Closure, RealPairsAloneSpanOnlySo3) {
  const auto g = make_generator_set({single(pair3(0, 1, 1.0)), single(pair3(1, 2, 1.0))});
  EXPECT_EQ(lie_closure(g, 9).dimension, 3);
}

TEST(Closure, SingleGeneratorSpansLine) {
  CMatrix x(2, 2);
  x << 0, 3.7, -3.7, 0;
  EXPECT_EQ(lie_closure(make_generator_set({single(x)}), 4).dimension, 1);
}

TEST(Closure, TwoControlEnsembleGivesSu2Squared) {
  GalerkinModel model;
  model.order = 2;
  model.spectra = {{1.0, std::sqrt(2.0)}};
  model.blocks = {{0, 0}, {0, 1}};
  CMatrix b1(2, 2), b2(2, 2);
  b1 << 0, 1, -1, 0;
  b2 << 0, 0.6, -0.6, 0;
  model.couplings = {b1, b2};
  const auto gens = build_generator_set(model);
  const auto cl = lie_closure(gens, 7);
  EXPECT_EQ(cl.dimension, 6);
  EXPECT_EQ(verify_full_rank(2, 2, cl.dimension), Verdict::kPass);

  EXPECT_EQ(bracket_span_rank(primaries(gens), 4), 6);
}

TEST(Closure, EqualModuliCollapse) {
  GalerkinModel model;
  model.order = 2;
  model.spectra = {{1.0, std::sqrt(2.0)}};
  model.blocks = {{0, 0}, {0, 1}};
  CMatrix b(2, 2);
  b << 0, 1, -1, 0;
  model.couplings = {b, -b};
  EXPECT_EQ(lie_closure(build_generator_set(model), 7).dimension, 3);
}

TEST(Closure, InvariantUnderConjugation) {
  std::mt19937 rng(23);
  const auto g = chain_generators();
  const CMatrix u = testing::random_unitary(rng, 3);
  std::vector<BlockSkew> conj;
  for (int k = 0; k < g.size(); k += 2) conj.push_back(single(u * g.elements[k].value.blocks[0] * u.adjoint()));
  EXPECT_EQ(lie_closure(make_generator_set(conj), 9).dimension, 8);
}

TEST(Closure, CapExceededThrows) {
  EXPECT_THROW(lie_closure(chain_generators(), 5), SynthesisError);
}

TEST(FullRank, DimensionCounts) {
  EXPECT_EQ(verify_full_rank(2, 2, 6), Verdict::kPass);
  EXPECT_EQ(verify_full_rank(3, 1, 7), Verdict::kFail);
  EXPECT_EQ(verify_full_rank(2, 3, 9), Verdict::kPass);
}

}  // namespace
}  // namespace simtrack
