#pragma once

#include <string>
#include <vector>

#include "simtrack/galerkin.hpp"

namespace simtrack {

/// Block-diagonal element of a product of unitary algebras, one m x m block per
/// (system, control).
struct BlockSkew {
  std::vector<CMatrix> blocks;

  static BlockSkew zero(int block_count, int m) {
    return BlockSkew{std::vector<CMatrix>(block_count, CMatrix::Zero(m, m))};
  }
  int size() const { return static_cast<int>(blocks.size()); }
  int order() const { return blocks.empty() ? 0 : static_cast<int>(blocks.front().rows()); }

  BlockSkew& operator+=(const BlockSkew& o) {
    check(o);
    for (int b = 0; b < size(); ++b) blocks[b] += o.blocks[b];
    return *this;
  }
  BlockSkew& operator-=(const BlockSkew& o) {
    check(o);
    for (int b = 0; b < size(); ++b) blocks[b] -= o.blocks[b];
    return *this;
  }
  BlockSkew& operator*=(double s) {
    for (auto& x : blocks) x *= s;
    return *this;
  }
  friend BlockSkew operator+(BlockSkew a, const BlockSkew& b) { return a += b; }
  friend BlockSkew operator-(BlockSkew a, const BlockSkew& b) { return a -= b; }
  friend BlockSkew operator*(double s, BlockSkew a) { return a *= s; }
  BlockSkew operator-() const { return -1.0 * *this; }

  double norm() const {
    double s = 0.0;
    for (const auto& x : blocks) s += x.squaredNorm();
    return std::sqrt(s);
  }
  double op_norm() const {
    double s = 0.0;
    for (const auto& x : blocks) s = std::max(s, operator_norm(x));
    return s;
  }

  void check(const BlockSkew& o) const {
    if (o.size() != size()) throw StructuralError("liealg", "block count mismatch");
    for (int b = 0; b < size(); ++b)
      if (o.blocks[b].rows() != blocks[b].rows()) throw StructuralError("liealg", "block shape mismatch");
  }
};

inline double inner(const BlockSkew& a, const BlockSkew& b) {
  a.check(b);
  double s = 0.0;
  for (int k = 0; k < a.size(); ++k) s += trace_inner(a.blocks[k], b.blocks[k]);
  return s;
}

inline BlockSkew bracket(const BlockSkew& a, const BlockSkew& b) {
  a.check(b);
  BlockSkew out;
  out.blocks.reserve(a.blocks.size());
  for (int k = 0; k < a.size(); ++k)
    out.blocks.push_back(a.blocks[k] * b.blocks[k] - b.blocks[k] * a.blocks[k]);
  return out;
}

/// Real coordinates of a block element; the Euclidean product of two such
/// vectors is the trace form.
inline RVector flatten(const BlockSkew& x) {
  const int m = x.order();
  RVector v(2 * m * m * x.size());
  Eigen::Index p = 0;
  for (const auto& blk : x.blocks) {
    for (int c = 0; c < m; ++c) {
      for (int r = 0; r < m; ++r) {
        v(p++) = blk(r, c).real();
        v(p++) = blk(r, c).imag();
      }
    }
  }
  return v;
}

/// b(k,l) E_kl + b(l,k) E_lk for one block, rotated by e^{i phase} on (k,l).
struct PairMatrix {
  int system = 0;
  int control = 0;
  int k = 0;
  int l = 1;
  Complex b_kl;
  Complex b_lk;

  static PairMatrix from_coupling(const GalerkinModel& model, int block, int k, int l) {
    const auto& b = model.couplings.at(block);
    return {model.blocks[block].system, model.blocks[block].control, k, l, b(k, l), b(l, k)};
  }

  PairMatrix rotated(double phase) const {
    PairMatrix p = *this;
    p.b_kl *= std::polar(1.0, phase);
    p.b_lk *= std::polar(1.0, -phase);
    return p;
  }

  CMatrix dense(int m) const {
    CMatrix x = CMatrix::Zero(m, m);
    x(k, l) += b_kl;
    x(l, k) += b_lk;
    return x;
  }
};

struct Generator {
  int system = -1;  // -1 for the diagonal residue, which spans every system
  int k = 0;
  int l = 0;
  double phase = 0.0;
  bool steerable = true;
  BlockSkew value;
};

/// Symmetric generator list: entries 2r and 2r+1 are negatives of each other.
struct GeneratorSet {
  std::vector<Generator> elements;

  int size() const { return static_cast<int>(elements.size()); }
  static int negation_of(int index) { return index ^ 1; }
  void add_pair(Generator g) {
    Generator neg = g;
    neg.value = -g.value;
    neg.phase = g.phase + kPi;
    elements.push_back(std::move(g));
    elements.push_back(std::move(neg));
  }
};

/// Phase-rotated pair generators of every coupled level pair, summed over the
/// controls of each system, at phases 0 and pi/2, plus the diagonal residue.
inline GeneratorSet build_generator_set(const GalerkinModel& model, double tol = 1e-12,
                                        const std::vector<double>& phases = {0.0, kPi / 2}) {
  GeneratorSet set;
  const int m = model.order;
  for (int i = 0; i < model.system_count(); ++i) {
    for (int k = 0; k < m; ++k) {
      for (int l = k + 1; l < m; ++l) {
        bool coupled = false;
        for (int b = 0; b < model.block_count(); ++b)
          if (model.blocks[b].system == i && std::abs(model.couplings[b](k, l)) > tol) coupled = true;
        if (!coupled) continue;
        for (double phi : phases) {
          Generator g{i, k, l, phi, true, BlockSkew::zero(model.block_count(), m)};
          for (int b = 0; b < model.block_count(); ++b)
            if (model.blocks[b].system == i)
              g.value.blocks[b] = PairMatrix::from_coupling(model, b, k, l).rotated(phi).dense(m);
          set.add_pair(std::move(g));
        }
      }
    }
  }
  Generator diag{-1, 0, 0, 0.0, false, BlockSkew::zero(model.block_count(), m)};
  bool any = false;
  for (int b = 0; b < model.block_count(); ++b) {
    diag.value.blocks[b].diagonal() = model.couplings[b].diagonal();
    if (model.couplings[b].diagonal().cwiseAbs().maxCoeff() > tol) any = true;
  }
  if (any) set.add_pair(std::move(diag));
  return set;
}

/// Wraps arbitrary elements as a symmetric, non-phase generator set.
inline GeneratorSet make_generator_set(const std::vector<BlockSkew>& values) {
  GeneratorSet set;
  for (const auto& v : values) set.add_pair(Generator{-1, 0, 0, 0.0, true, v});
  return set;
}

struct AveragingBudget {
  int samples = 256;
  double tol = 1e-3;
};

struct PhaseAverage {
  BlockSkew value;
  double residual = 0.0;
  std::vector<double> thetas;
  std::vector<double> weights;
};

namespace detail {

// One oscillating entry family of the phase-frame velocity: system, pair and
// the frequency lambda_k - lambda_l; `scale` is the largest coupling modulus.
struct PhaseConstraint {
  int system;
  int k;
  int l;
  double omega;
  double scale;
};

inline std::vector<PhaseConstraint> phase_constraints(const GalerkinModel& model, double tol = 1e-12) {
  std::vector<PhaseConstraint> out;
  for (int i = 0; i < model.system_count(); ++i) {
    for (int k = 0; k < model.order; ++k) {
      for (int l = k + 1; l < model.order; ++l) {
        double scale = 0.0;
        for (int b = 0; b < model.block_count(); ++b)
          if (model.blocks[b].system == i) scale = std::max(scale, std::abs(model.couplings[b](k, l)));
        if (scale > tol) out.push_back({i, k, l, model.spectra[i][k] - model.spectra[i][l], scale});
      }
    }
  }
  return out;
}

struct PhaseFit {
  std::vector<double> weights;
  double residual;  // weighted moment mismatch, max over constraints
};

// Convex weights over `thetas` whose moments sum_r w_r e^{-i theta_r omega_c}
// hit e^{i phase} on constraint `target` and 0 on all others.
inline PhaseFit fit_phase_weights(const std::vector<PhaseConstraint>& cons, int target, double phase,
                                  const std::vector<double>& thetas) {
  const Eigen::Index rows = 2 * static_cast<Eigen::Index>(cons.size());
  RMatrix c(rows, static_cast<Eigen::Index>(thetas.size()));
  RVector d = RVector::Zero(rows);
  for (std::size_t q = 0; q < cons.size(); ++q) {
    for (std::size_t r = 0; r < thetas.size(); ++r) {
      const Complex mom = std::polar(cons[q].scale, -thetas[r] * cons[q].omega);
      c(2 * q, r) = mom.real();
      c(2 * q + 1, r) = mom.imag();
    }
    if (static_cast<int>(q) == target) {
      const Complex want = std::polar(cons[q].scale, phase);
      d(2 * q) = want.real();
      d(2 * q + 1) = want.imag();
    }
  }
  const RVector w = simplex_least_squares(c, d);
  const RVector r = c * w - d;
  double worst = 0.0;
  for (std::size_t q = 0; q < cons.size(); ++q) worst = std::max(worst, std::hypot(r(2 * q), r(2 * q + 1)));
  return {std::vector<double>(w.data(), w.data() + w.size()), worst};
}

inline BlockSkew averaged_velocity(const GalerkinModel& model, const std::vector<double>& thetas,
                                   const std::vector<double>& weights) {
  BlockSkew out = BlockSkew::zero(model.block_count(), model.order);
  for (std::size_t r = 0; r < thetas.size(); ++r) {
    if (weights[r] == 0.0) continue;
    const auto f = phase_frame_velocity_at(model, thetas[r]);
    for (int b = 0; b < model.block_count(); ++b) out.blocks[b] += weights[r] * f[b];
  }
  return out;
}

}  // namespace detail

/// Convex combination of phase-frame velocities e^{-theta_r A} B e^{theta_r A}
/// approximating the pair generator of (system, k, l) rotated by `theta`
/// (with zero on every other oscillating entry of every block). The invariant
/// diagonal is subtracted from the returned value.
inline PhaseAverage phase_average_extract(const GalerkinModel& model, double v_floor, int system, int k, int l,
                                          double theta, const AveragingBudget& budget = {}) {
  if (!(v_floor > 0.0)) throw StructuralError("liealg", "v_floor must be positive");
  if (system < 0 || system >= model.system_count() || k < 0 || l < 0 || k >= model.order || l >= model.order)
    throw StructuralError("liealg", "pair index out of range");
  PhaseAverage out;
  if (k == l) {
    out.value = BlockSkew::zero(model.block_count(), model.order);
    for (int b = 0; b < model.block_count(); ++b)
      if (model.blocks[b].system == system) out.value.blocks[b](k, k) = model.couplings[b](k, k);
    out.thetas = {0.0};
    out.weights = {1.0};
    return out;
  }
  if (k > l) {
    std::swap(k, l);
    theta = -theta;
  }
  const auto cons = detail::phase_constraints(model);
  int target = -1;
  for (std::size_t q = 0; q < cons.size(); ++q)
    if (cons[q].system == system && cons[q].k == k && cons[q].l == l) target = static_cast<int>(q);
  if (target < 0) throw StructuralError("liealg", "target pair is not coupled");

  const double omega = std::abs(cons[target].omega);
  const double period = 2.0 * kPi / omega;
  const double step = period / 4.0;
  double anchor = std::fmod(-theta / cons[target].omega, period);
  if (anchor < 0.0) anchor += period;
  out.thetas.resize(budget.samples);
  for (int r = 0; r < budget.samples; ++r) out.thetas[r] = anchor + r * step;

  const auto fit = detail::fit_phase_weights(cons, target, theta, out.thetas);
  out.weights = fit.weights;
  out.value = detail::averaged_velocity(model, out.thetas, out.weights);
  BlockSkew want = BlockSkew::zero(model.block_count(), model.order);
  for (int b = 0; b < model.block_count(); ++b) {
    out.value.blocks[b].diagonal().setZero();
    if (model.blocks[b].system == system)
      want.blocks[b] = PairMatrix::from_coupling(model, b, k, l).rotated(theta).dense(model.order);
  }
  out.residual = (out.value - want).op_norm();
  if (out.residual > budget.tol) {
    throw SynthesisError("liealg", "phase averaging residual " + std::to_string(out.residual) +
                                       " above tolerance at " + std::to_string(budget.samples) + " samples",
                         out.residual);
  }
  return out;
}

struct Isolation {
  BlockSkew value;  // one block per control of the system
  double residual = 0.0;
  double condition = 1.0;
};

/// Isolates the pair generator of control j0 from the stack of same-position
/// pair matrices over all controls of one system, using the even powers
/// ad_b^{2k} a = (-4)^k sum_j |b_j|^{2k} P_j with a = sum_j P_j and b the
/// quarter-phase rotation of a.
inline Isolation vandermonde_isolate(const std::vector<PairMatrix>& stack, int j0, int m,
                                     double condition_limit = 1e12) {
  const int n = static_cast<int>(stack.size());
  if (n == 0 || j0 < 0 || j0 >= n) throw StructuralError("liealg", "isolation index out of range");
  BlockSkew a = BlockSkew::zero(n, m);
  BlockSkew b = BlockSkew::zero(n, m);
  RVector nodes(n);
  for (int j = 0; j < n; ++j) {
    a.blocks[j] = stack[j].dense(m);
    b.blocks[j] = stack[j].rotated(kPi / 2).dense(m);
    nodes(j) = -4.0 * std::norm(stack[j].b_kl);
  }
  Isolation out;
  BlockSkew want = BlockSkew::zero(n, m);
  want.blocks[j0] = stack[j0].dense(m);
  if (n == 1) {
    out.value = a;
    out.residual = (out.value - want).norm();
    return out;
  }
  // Coefficients w with sum_k w_k x_j^k = delta_{j j0}.
  RMatrix v(n, n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) v(j, k) = std::pow(nodes(j), k);
  Eigen::JacobiSVD<RMatrix> svd(v);
  out.condition = svd.singularValues()(0) / svd.singularValues()(n - 1);
  if (!(out.condition <= condition_limit)) {
    int pa = 0, pb = 1;
    for (int x = 0; x < n; ++x)
      for (int y = x + 1; y < n; ++y)
        if (std::abs(nodes(x) - nodes(y)) < std::abs(nodes(pa) - nodes(pb))) {
          pa = x;
          pb = y;
        }
    throw SynthesisError("liealg", "Vandermonde condition " + std::to_string(out.condition) +
                                       " too large; closest moduli " + std::to_string(std::abs(stack[pa].b_kl)) +
                                       " and " + std::to_string(std::abs(stack[pb].b_kl)) + " (controls " +
                                       std::to_string(pa + 1) + ", " + std::to_string(pb + 1) + ")",
                         out.condition);
  }
  const RVector w = v.fullPivLu().solve(RVector::Unit(n, j0));
  out.value = BlockSkew::zero(n, m);
  BlockSkew term = a;
  for (int k = 0; k < n; ++k) {
    out.value += w(k) * term;
    if (k + 1 < n) term = bracket(b, bracket(b, term));
  }
  out.residual = (out.value - want).norm();
  return out;
}

/// Right-nested bracket [g_0, [g_1, [..., g_d]]] of generator indices.
using LieWord = std::vector<int>;

struct LieClosure {
  std::vector<BlockSkew> basis;  // orthonormal in the trace form
  std::vector<LieWord> words;    // one word per basis element
  std::vector<BlockSkew> word_values;
  int dimension = 0;
};

inline BlockSkew evaluate_word(const GeneratorSet& gens, const LieWord& w) {
  BlockSkew x = gens.elements.at(w.back()).value;
  for (int p = static_cast<int>(w.size()) - 2; p >= 0; --p) x = bracket(gens.elements.at(w[p]).value, x);
  return x;
}

/// Breadth-first right-nested bracketing with Gram-Schmidt in the trace form;
/// a candidate is new when its residual exceeds rank_tol times its norm.
inline LieClosure lie_closure(const GeneratorSet& gens, int cap, double rank_tol = 1e-9,
                              bool steerable_only = false) {
  if (gens.elements.empty()) throw StructuralError("liealg", "empty generator set");
  LieClosure out;
  std::vector<RVector> flat;
  auto try_add = [&](const LieWord& w, const BlockSkew& x) {
    RVector v = flatten(x);
    const double n0 = v.norm();
    if (n0 == 0.0) return false;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& e : flat) v -= e.dot(v) * e;
    if (v.norm() <= rank_tol * n0) return false;
    v /= v.norm();
    flat.push_back(v);
    BlockSkew e = x;
    // Unflatten v into the basis element.
    const int m = x.order();
    Eigen::Index p = 0;
    for (auto& blk : e.blocks)
      for (int c = 0; c < m; ++c)
        for (int r = 0; r < m; ++r, p += 2) blk(r, c) = Complex(v(p), v(p + 1));
    out.basis.push_back(std::move(e));
    out.words.push_back(w);
    out.word_values.push_back(x);
    if (static_cast<int>(out.basis.size()) > cap)
      throw SynthesisError("liealg", "closure exceeded cap " + std::to_string(cap) + " without stabilizing",
                           static_cast<double>(out.basis.size()));
    return true;
  };

  std::vector<int> primary;
  for (int g = 0; g < gens.size(); g += 2) {
    if (steerable_only && !gens.elements[g].steerable) continue;
    primary.push_back(g);
  }
  std::vector<std::size_t> frontier;
  for (int g : primary)
    if (try_add({g}, gens.elements[g].value)) frontier.push_back(out.basis.size() - 1);
  while (!frontier.empty()) {
    std::vector<std::size_t> next;
    for (std::size_t idx : frontier) {
      for (int g : primary) {
        LieWord w{g};
        w.insert(w.end(), out.words[idx].begin(), out.words[idx].end());
        const BlockSkew x = bracket(gens.elements[g].value, out.word_values[idx]);
        if (try_add(w, x)) next.push_back(out.basis.size() - 1);
      }
    }
    frontier = std::move(next);
  }
  out.dimension = static_cast<int>(out.basis.size());
  return out;
}

inline int full_rank_dimension(int m, int total_blocks) { return (m * m - 1) * total_blocks; }

inline Verdict verify_full_rank(int m, int total_blocks, int closure_dim) {
  return closure_dim == full_rank_dimension(m, total_blocks) ? Verdict::kPass : Verdict::kFail;
}

inline Verdict verify_full_rank(const EnsembleSpec& spec, int m, int closure_dim) {
  return verify_full_rank(m, spec.block_count(), closure_dim);
}

}  // namespace simtrack
