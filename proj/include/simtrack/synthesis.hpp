#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "simtrack/liealg.hpp"
#include "simtrack/sim.hpp"

namespace simtrack {

/// A word of the Lie closure with a nonnegative coefficient; a negative
/// coefficient is absorbed by negating the word's first generator.
struct WordTerm {
  LieWord word;
  double coefficient = 0.0;
  int depth() const { return static_cast<int>(word.size()) - 1; }
};

struct VelocityDecomposition {
  std::vector<WordTerm> terms;
  double scale = 0.0;            // sum of coefficients
  std::vector<double> weights;   // coefficient / scale, one per term
  double residual = 0.0;
};

/// Independent words spanning the steerable closure, used as the synthesis
/// dictionary.
struct WordDictionary {
  std::vector<LieWord> words;
  std::vector<BlockSkew> values;
  RMatrix matrix;  // flattened values as columns

  static WordDictionary from_closure(const LieClosure& closure) {
    WordDictionary d;
    d.words = closure.words;
    d.values = closure.word_values;
    if (!d.values.empty()) {
      d.matrix.resize(flatten(d.values.front()).size(), static_cast<Eigen::Index>(d.values.size()));
      for (std::size_t c = 0; c < d.values.size(); ++c) d.matrix.col(static_cast<Eigen::Index>(c)) = flatten(d.values[c]);
    }
    return d;
  }
  int size() const { return static_cast<int>(words.size()); }
};

inline int default_closure_cap(const GalerkinModel& model) { return model.order * model.order * model.block_count(); }

inline WordDictionary build_dictionary(const GeneratorSet& gens, int cap) {
  return WordDictionary::from_closure(lie_closure(gens, cap, 1e-9, true));
}

inline WordTerm signed_term(const LieWord& word, double c) {
  WordTerm t{word, std::abs(c)};
  if (c < 0.0) t.word.front() = GeneratorSet::negation_of(t.word.front());
  return t;
}

/// Coordinates of `target` in the word dictionary (unique, since the words are
/// independent), reported as nonnegative terms and their convex weights.
inline VelocityDecomposition decompose_velocity(const BlockSkew& target, const WordDictionary& dict,
                                                double tol = 1e-9) {
  VelocityDecomposition out;
  const RVector t = flatten(target);
  if (dict.size() == 0) {
    out.residual = t.norm();
  } else {
    const RVector c = dict.matrix.colPivHouseholderQr().solve(t);
    out.residual = (dict.matrix * c - t).norm();
    for (int w = 0; w < dict.size(); ++w) {
      if (std::abs(c(w)) <= 1e-14 * std::max(1.0, t.norm())) continue;
      out.terms.push_back(signed_term(dict.words[w], c(w)));
      out.scale += std::abs(c(w));
    }
    for (const auto& term : out.terms) out.weights.push_back(term.coefficient / out.scale);
  }
  if (out.residual > tol * std::max(1.0, t.norm())) {
    throw SynthesisError("synthesis", "target velocity has a component of norm " + std::to_string(out.residual) +
                                          " outside the generated algebra",
                         out.residual);
  }
  return out;
}

inline VelocityDecomposition decompose_velocity(const BlockSkew& target, const GeneratorSet& gens, int cap,
                                                double tol = 1e-9) {
  return decompose_velocity(target, build_dictionary(gens, cap), tol);
}

/// Distance between the group commutator e^{-tu} e^{-tv} e^{tu} e^{tv} and
/// e^{t^2 [u,v]}.
inline double bch_defect(const CMatrix& u, const CMatrix& v, double t) {
  const CMatrix comm = expm_skew(u, -t) * expm_skew(v, -t) * expm_skew(u, t) * expm_skew(v, t);
  return group_distance(comm, expm_skew(u * v - v * u, t * t));
}

/// tau0 = eps / (10 T max||[u,v]||), halved until the accumulated one-period
/// defect (T / tau0) * max d(tau0) stays below eps / 10.
inline double choose_switching_period(double eps, double horizon, const GeneratorSet& gens) {
  double br = 0.0;
  for (int a = 0; a < gens.size(); a += 2)
    for (int b = a + 2; b < gens.size(); b += 2)
      br = std::max(br, bracket(gens.elements[a].value, gens.elements[b].value).op_norm());
  if (br == 0.0 || horizon <= 0.0) return std::max(eps, 1e-3);
  double tau = eps / (10.0 * horizon * br);
  for (int halvings = 0; halvings < 40; ++halvings) {
    double worst = 0.0;
    for (int a = 0; a < gens.size(); a += 2)
      for (int b = a + 2; b < gens.size(); b += 2)
        for (int blk = 0; blk < gens.elements[a].value.size(); ++blk)
          worst = std::max(worst, bch_defect(gens.elements[a].value.blocks[blk], gens.elements[b].value.blocks[blk], tau));
    if ((horizon / tau) * worst <= eps / 10.0) break;
    tau /= 2.0;
  }
  return tau;
}

struct EmitterOptions {
  double transit_speed = 1e9;    // v used to advance the phase between dwells
  double max_dwell_sweep = 0.05;  // largest |omega| * (phase swept) within one dwell
  int max_candidates = 256;       // coset candidates per dwell pattern
  double fit_tol = 1e-9;          // target moment residual of a dwell pattern
  long max_segments = 5'000'000;
};

/// Emits a v-domain control while integrating the phase-frame state exactly.
/// Generators are realized by dwells at v = 1/delta centred on phases where
/// the phase-frame velocity, averaged with convex weights, equals the
/// generator.
class PhaseFrameEmitter {
 public:
  PhaseFrameEmitter(const GalerkinModel& model, const GeneratorSet& gens, EmitterOptions opt = {})
      : model_(model), gens_(gens), opt_(opt), cons_(detail::phase_constraints(model)) {
    v_floor_ = 1.0 / model.delta;
    y_ = identity_states(model, model.order);
    control_.domain = ControlDomain::kV;
    control_.delta = model.delta;
    for (const auto& c : cons_) omega_max_ = std::max(omega_max_, std::abs(c.omega));
  }

  double theta() const { return theta_; }
  const std::vector<CMatrix>& state() const { return y_; }
  const PiecewiseConstantControl& control() const { return control_; }
  long segments() const { return static_cast<long>(control_.size()); }
  double worst_fit_residual() const { return worst_fit_; }
  long dwells() const { return dwells_; }

  void run(double v, double d) {
    if (!(d > 0.0)) return;
    if (segments() >= opt_.max_segments)
      throw SynthesisError("synthesis", "switching budget of " + std::to_string(opt_.max_segments) + " segments exhausted");
    for (int b = 0; b < model_.block_count(); ++b) {
      const auto& lam = model_.spectra[model_.blocks[b].system];
      const CMatrix h = v * model_.drift_of_block(b) + model_.couplings[b];
      y_[b] = apply_phase(lam, theta_ + v * d, expm_skew(h, d) * apply_phase(lam, -theta_, y_[b]));
    }
    theta_ += v * d;
    control_.append(d, v);
  }

  void transit_to(double target_theta) {
    if (target_theta <= theta_) return;
    const double v = std::max(opt_.transit_speed, v_floor_);
    run(v, (target_theta - theta_) / v);
  }

  /// Approximates exp(tau * g) on the phase-frame state.
  void realize_generator(int g, double tau) {
    if (!(tau > 0.0)) return;
    const Generator& gen = gens_.elements.at(g);
    if (!gen.steerable || gen.system < 0)
      throw SynthesisError("synthesis", "generator " + std::to_string(g) + " has no phase realization");
    int target = -1;
    for (std::size_t q = 0; q < cons_.size(); ++q)
      if (cons_[q].system == gen.system && cons_[q].k == gen.k && cons_[q].l == gen.l) target = static_cast<int>(q);
    if (target < 0) throw SynthesisError("synthesis", "generator pair is not coupled");
    const double omega = cons_[target].omega;
    const double period = 2.0 * kPi / std::abs(omega);
    const double sweep = v_floor_ * tau * omega_max_;
    const int pieces = std::max(1, static_cast<int>(std::ceil(sweep / opt_.max_dwell_sweep)));
    const double piece = tau / pieces;
    for (int p = 0; p < pieces; ++p) {
      const double margin = 0.5 * v_floor_ * piece;
      double anchor = std::fmod(-gen.phase / omega, period);
      if (anchor < 0.0) anchor += period;
      const double base = theta_ + margin;
      const double first = anchor + period * std::ceil((base - anchor) / period);
      std::vector<double> thetas;
      detail::PhaseFit fit{{1.0}, 0.0};
      for (int count = 1; count <= opt_.max_candidates; count *= 2) {
        thetas.resize(count);
        for (int r = 0; r < count; ++r) thetas[r] = first + r * period;
        fit = detail::fit_phase_weights(cons_, target, gen.phase, thetas);
        if (fit.residual <= opt_.fit_tol * cons_[target].scale) break;
      }
      worst_fit_ = std::max(worst_fit_, fit.residual);
      for (std::size_t r = 0; r < thetas.size(); ++r) {
        const double w = fit.weights[r];
        if (w <= 1e-12) continue;
        const double d = w * piece;
        transit_to(thetas[r] - 0.5 * v_floor_ * d);
        run(v_floor_, d);
        ++dwells_;
      }
    }
  }

  /// Approximates exp(c * value(word)), c >= 0, by nested group commutators
  /// with switching period tau0.
  void realize_word(const WordTerm& term, double tau0) {
    if (term.coefficient <= 0.0) return;
    const int d = term.depth();
    if (d == 0) {
      realize_generator(term.word.front(), term.coefficient);
      return;
    }
    const long cycles = std::max(1L, static_cast<long>(std::ceil(term.coefficient / std::pow(tau0, d + 1))));
    const double s = std::pow(term.coefficient / cycles, 1.0 / (d + 1));
    for (long n = 0; n < cycles; ++n) realize_commutator(term.word, 0, s, true);
  }

 private:
  // exp(+-s^{depth+1} [g_i, [...]]) by e^{Y} e^{X} e^{-Y} e^{-X}, X = s g_i,
  // Y = s^depth * inner.
  void realize_commutator(const LieWord& w, std::size_t from, double s, bool positive) {
    if (from + 1 == w.size()) {
      realize_generator(positive ? w[from] : GeneratorSet::negation_of(w[from]), s);
      return;
    }
    const int left = positive ? w[from] : GeneratorSet::negation_of(w[from]);
    realize_commutator(w, from + 1, s, true);
    realize_generator(left, s);
    realize_commutator(w, from + 1, s, false);
    realize_generator(GeneratorSet::negation_of(left), s);
  }

  const GalerkinModel& model_;
  const GeneratorSet& gens_;
  EmitterOptions opt_;
  std::vector<detail::PhaseConstraint> cons_;
  double v_floor_ = 1.0;
  double omega_max_ = 0.0;
  double theta_ = 0.0;
  std::vector<CMatrix> y_;
  PiecewiseConstantControl control_;
  double worst_fit_ = 0.0;
  long dwells_ = 0;
};

enum class TrackingMode { kGroup, kModulus };

inline const char* to_string(TrackingMode m) { return m == TrackingMode::kGroup ? "group" : "modulus"; }

struct TrackingOptions {
  TrackingMode mode = TrackingMode::kGroup;
  double step_tol_fraction = 0.25;  // per-sample acceptance, as a fraction of eps
  int max_iterations = 40;          // per target sample
  long max_segments = 5'000'000;
  double max_step = 0.3;            // trace-form norm cap of one correction
  double tau0 = 0.0;                // 0 selects choose_switching_period
  int closure_cap = 0;              // 0 selects m^2 * blocks
  double negligible_fraction = 0.1;  // terms moving the state by less than this * step tolerance are skipped
  double depth_penalty = 1e-2;      // modulus mode: weight on bracket coefficients
  double base_penalty = 1e-4;       // modulus mode: weight on generator coefficients
  EmitterOptions emitter;
};

struct PlanStep {
  int sample = 0;
  int iteration = 0;
  double gap_before = 0.0;
  std::vector<WordTerm> terms;
  double theta_start = 0.0;
  double theta_end = 0.0;
  long dwells = 0;
};

struct SynthesisPlan {
  TrackingMode mode = TrackingMode::kGroup;
  double tau0 = 0.0;
  int columns = 0;
  std::vector<PlanStep> steps;
  double worst_fit_residual = 0.0;
};

struct TrackingResult {
  PiecewiseConstantControl control;  // v domain
  SynthesisPlan plan;
  std::vector<CMatrix> final_state;  // phase frame
  double final_theta = 0.0;
  double final_gap = 0.0;            // at the last target sample
  double worst_sample_gap = 0.0;     // over all accepted samples
};

namespace detail {

inline double group_gap(const std::vector<CMatrix>& y, const SUTarget& target, int s) {
  double worst = 0.0;
  for (int b = 0; b < target.block_count(); ++b) worst = std::max(worst, group_distance(target.matrices[b][s], y[b]));
  return worst;
}

inline double modulus_gap_of(const std::vector<CMatrix>& y, const SUTarget& target, int s, int N) {
  return modulus_gap(y, target, s, N);
}

// Left/right diagonal phases D_L G D_R closest to y (alternating updates).
inline CMatrix coset_nearest(const CMatrix& g, const CMatrix& y) {
  CMatrix h = g;
  for (int it = 0; it < 4; ++it) {
    for (Eigen::Index l = 0; l < h.cols(); ++l) {
      const Complex c = h.col(l).dot(y.col(l));
      if (std::abs(c) > 1e-14) h.col(l) *= c / std::abs(c);
    }
    for (Eigen::Index k = 0; k < h.rows(); ++k) {
      const Complex c = (h.row(k).conjugate().cwiseProduct(y.row(k))).sum();
      if (std::abs(c) > 1e-14) h.row(k) *= c / std::abs(c);
    }
  }
  const Complex det = h.determinant();
  if (std::abs(det) > 0.0) h *= std::pow(std::conj(det) / std::abs(det), 1.0 / static_cast<double>(h.rows()));
  return h;
}

inline BlockSkew log_step(const std::vector<CMatrix>& goal, const std::vector<CMatrix>& y) {
  BlockSkew xi;
  for (std::size_t b = 0; b < y.size(); ++b) xi.blocks.push_back(traceless(logm_unitary(goal[b] * y[b].adjoint())));
  return xi;
}

inline BlockSkew combine(const WordDictionary& dict, const std::vector<int>& active, const RVector& c) {
  BlockSkew x = BlockSkew::zero(dict.values.front().size(), dict.values.front().order());
  for (std::size_t a = 0; a < active.size(); ++a) x += c(static_cast<Eigen::Index>(a)) * dict.values[active[a]];
  return x;
}

// Squared-modulus mismatch of exp(xi) y against the target sample, followed
// by penalty rows on the coefficients.
inline RVector modulus_residual(const WordDictionary& dict, const std::vector<int>& active, const RVector& c,
                                const std::vector<double>& weights, const std::vector<CMatrix>& y,
                                const SUTarget& target, int s, int N) {
  const BlockSkew xi = combine(dict, active, c);
  const int m = target.order;
  RVector r(target.block_count() * m * N + static_cast<Eigen::Index>(active.size()));
  Eigen::Index p = 0;
  for (int b = 0; b < target.block_count(); ++b) {
    const CMatrix z = expm_skew(xi.blocks[b]) * y[b];
    for (int l = 0; l < N; ++l)
      for (int k = 0; k < m; ++k) r(p++) = std::norm(z(k, l)) - std::norm(target.matrices[b][s](k, l));
  }
  for (std::size_t a = 0; a < active.size(); ++a) r(p++) = weights[a] * c(static_cast<Eigen::Index>(a));
  return r;
}

inline RVector levenberg_marquardt(const WordDictionary& dict, const std::vector<int>& active, RVector c,
                                   const std::vector<double>& weights, const std::vector<CMatrix>& y,
                                   const SUTarget& target, int s, int N) {
  auto cost = [&](const RVector& x) { return modulus_residual(dict, active, x, weights, y, target, s, N).squaredNorm(); };
  double mu = 1e-3;
  double f = cost(c);
  const Eigen::Index n = c.size();
  for (int it = 0; it < 60; ++it) {
    const RVector r = modulus_residual(dict, active, c, weights, y, target, s, N);
    RMatrix jac(r.size(), n);
    for (Eigen::Index a = 0; a < n; ++a) {
      RVector cp = c;
      const double h = 1e-7 * std::max(1.0, std::abs(c(a)));
      cp(a) += h;
      jac.col(a) = (modulus_residual(dict, active, cp, weights, y, target, s, N) - r) / h;
    }
    const RMatrix jtj = jac.transpose() * jac;
    const RVector g = jac.transpose() * r;
    bool improved = false;
    for (int tries = 0; tries < 12; ++tries) {
      RMatrix a = jtj;
      a.diagonal().array() += mu * (1.0 + jtj.diagonal().array());
      const RVector step = a.ldlt().solve(-g);
      const RVector trial = c + step;
      const double ft = cost(trial);
      if (ft < f) {
        c = trial;
        const bool small = f - ft < 1e-14 * std::max(1.0, f);
        f = ft;
        mu = std::max(mu / 3.0, 1e-12);
        improved = !small;
        break;
      }
      mu *= 4.0;
    }
    if (!improved) break;
  }
  return c;
}

}  // namespace detail

/// Closed-loop synthesis on the phase frame. For every target sample the
/// state is corrected until it is within step_tol_fraction * eps: in group
/// mode along log(M y^{-1}); in modulus mode along a least-squares fit of the
/// coordinate moduli, using generator words first and brackets only when the
/// generators alone leave a gap above eps / 2.
inline TrackingResult bch_tracking_control(const SUTarget& target, const GalerkinModel& model,
                                           const GeneratorSet& gens, double eps,
                                           const TrackingOptions& opt = {}) {
  if (!(eps > 0.0)) throw StructuralError("synthesis", "eps must be positive");
  if (target.order != model.order || target.block_count() != model.block_count())
    throw StructuralError("synthesis", "target and model shapes differ");
  const int N = target.columns;
  const int cap = opt.closure_cap > 0 ? opt.closure_cap : default_closure_cap(model);
  const WordDictionary dict = build_dictionary(gens, cap);
  const double horizon = target.times.empty() ? 0.0 : target.times.back() - target.times.front();

  TrackingResult out;
  out.plan.mode = opt.mode;
  out.plan.columns = N;
  out.plan.tau0 = opt.tau0 > 0.0 ? opt.tau0 : choose_switching_period(eps, std::max(horizon, 1.0), gens);
  EmitterOptions eo = opt.emitter;
  eo.max_segments = opt.max_segments;
  PhaseFrameEmitter em(model, gens, eo);
  const double step_tol = opt.step_tol_fraction * eps;
  double gen_norm = 0.0;
  for (const auto& g : gens.elements) gen_norm = std::max(gen_norm, g.value.op_norm());
  std::vector<double> word_norms;
  for (const auto& v : dict.values) word_norms.push_back(v.norm());
  auto word_norm = [&](const LieWord& w) {
    for (int i = 0; i < dict.size(); ++i) {
      LieWord u = dict.words[i];
      if (u.size() == w.size() && std::equal(u.begin() + 1, u.end(), w.begin() + 1) &&
          (u.front() | 1) == (w.front() | 1))
        return word_norms[i];
    }
    return evaluate_word(gens, w).norm();
  };

  auto gap_at = [&](int s) {
    return opt.mode == TrackingMode::kGroup ? detail::group_gap(em.state(), target, s)
                                            : detail::modulus_gap_of(em.state(), target, s, N);
  };

  std::vector<int> shallow, all;
  std::vector<double> shallow_w, all_w;
  for (int w = 0; w < dict.size(); ++w) {
    const int depth = static_cast<int>(dict.words[w].size()) - 1;
    const double pen = depth == 0 ? opt.base_penalty : opt.depth_penalty * depth;
    all.push_back(w);
    all_w.push_back(pen);
    if (depth == 0) {
      shallow.push_back(w);
      shallow_w.push_back(pen);
    }
  }

  for (int s = 0; s < target.sample_count(); ++s) {
    double gap = gap_at(s);
    double prev_gap = std::numeric_limits<double>::infinity();
    for (int it = 0; gap > step_tol; ++it) {
      if (it >= opt.max_iterations || gap > 0.99 * prev_gap) break;
      prev_gap = gap;

      std::vector<WordTerm> terms;
      if (opt.mode == TrackingMode::kGroup) {
        std::vector<CMatrix> goal;
        for (int b = 0; b < target.block_count(); ++b) goal.push_back(target.matrices[b][s]);
        BlockSkew xi = detail::log_step(goal, em.state());
        const double n = xi.norm();
        if (n > opt.max_step) xi *= opt.max_step / n;
        terms = decompose_velocity(xi, dict, 1e-6).terms;
      } else {
        std::vector<CMatrix> goal;
        for (int b = 0; b < target.block_count(); ++b)
          goal.push_back(detail::coset_nearest(target.matrices[b][s], em.state()[b]));
        BlockSkew xi = detail::log_step(goal, em.state());
        const double n = xi.norm();
        if (n > opt.max_step) xi *= opt.max_step / n;
        const RVector full = dict.matrix.colPivHouseholderQr().solve(flatten(xi));
        RVector c0(static_cast<Eigen::Index>(shallow.size()));
        {
          RMatrix sub(dict.matrix.rows(), c0.size());
          for (std::size_t a = 0; a < shallow.size(); ++a) sub.col(a) = dict.matrix.col(shallow[a]);
          c0 = sub.colPivHouseholderQr().solve(flatten(xi));
        }
        RVector c = detail::levenberg_marquardt(dict, shallow, c0, shallow_w, em.state(), target, s, N);
        std::vector<int> used = shallow;
        auto predicted = [&](const std::vector<int>& act, const RVector& coef) {
          const BlockSkew x = detail::combine(dict, act, coef);
          std::vector<CMatrix> z;
          for (int b = 0; b < target.block_count(); ++b) z.push_back(expm_skew(x.blocks[b]) * em.state()[b]);
          return detail::modulus_gap(z, target, s, N);
        };
        if (all.size() > shallow.size() && predicted(shallow, c) > 0.5 * eps) {
          RVector start = full;
          for (std::size_t a = 0; a < shallow.size(); ++a) start(shallow[a]) = c(static_cast<Eigen::Index>(a));
          RVector c2 = detail::levenberg_marquardt(dict, all, start, all_w, em.state(), target, s, N);
          if (predicted(all, c2) < predicted(shallow, c)) {
            c = c2;
            used = all;
          }
        }
        const BlockSkew step = detail::combine(dict, used, c);
        if (step.norm() > opt.max_step) c *= opt.max_step / step.norm();
        for (std::size_t a = 0; a < used.size(); ++a)
          if (std::abs(c(static_cast<Eigen::Index>(a))) > 1e-13)
            terms.push_back(signed_term(dict.words[used[a]], c(static_cast<Eigen::Index>(a))));
        if (terms.empty()) break;
      }
      std::erase_if(terms, [&](const WordTerm& t) {
        return t.coefficient * word_norm(t.word) < opt.negligible_fraction * step_tol;
      });
      if (terms.empty()) break;
      std::stable_sort(terms.begin(), terms.end(), [](const WordTerm& a, const WordTerm& b) { return a.depth() < b.depth(); });

      PlanStep step{s, it, gap, terms, em.theta(), 0.0, em.dwells()};
      try {
        for (const auto& t : terms) {
          double period = out.plan.tau0;
          if (!(opt.tau0 > 0.0) && t.depth() > 0) {
            // n cycles of amplitude s leave a defect near c * s * kappa; small
            // corrections may therefore use longer periods than tau0.
            const double kappa = std::pow(2.0 * gen_norm, t.depth() + 2);
            period = std::max(period, opt.negligible_fraction * step_tol / (t.coefficient * kappa));
          }
          em.realize_word(t, period);
        }
      } catch (const SynthesisError&) {
        throw SynthesisError("synthesis", "switching budget of " + std::to_string(opt.max_segments) +
                                              " segments exhausted at sample " + std::to_string(s) +
                                              "; achieved distance " + std::to_string(gap),
                             gap);
      }
      step.theta_end = em.theta();
      step.dwells = em.dwells() - step.dwells;
      out.plan.steps.push_back(std::move(step));
      gap = gap_at(s);
    }
    if (gap > eps) {
      throw SynthesisError("synthesis", "sample " + std::to_string(s) + " not reached within eps; achieved distance " +
                                            std::to_string(gap),
                           gap);
    }
    out.worst_sample_gap = std::max(out.worst_sample_gap, gap);
    out.final_gap = gap;
  }
  out.control = em.control();
  out.final_state = em.state();
  out.final_theta = em.theta();
  out.plan.worst_fit_residual = em.worst_fit_residual();
  return out;
}

struct PhaseAdjustment {
  double t_star = 0.0;
  double residual = 0.0;
  PiecewiseConstantControl segment;  // u domain, zero control
};

namespace detail {

inline double phase_mismatch(const GalerkinModel& model, const std::vector<CMatrix>& achieved,
                             const std::vector<CMatrix>& target, double t) {
  double worst = 0.0;
  for (int b = 0; b < model.block_count(); ++b) {
    const auto& lam = model.spectra[model.blocks[b].system];
    const CMatrix x = apply_phase(lam, -t, achieved[b]);  // e^{tA} x
    for (Eigen::Index l = 0; l < target[b].cols(); ++l) worst = std::max(worst, (x.col(l) - target[b].col(l)).norm());
  }
  return worst;
}

}  // namespace detail

/// Free drift duration t* in [0, T_max] best aligning e^{t A} x to the target
/// columns: a grid with step 2 pi / (10 max|lambda|) followed by golden-section
/// refinement around each local minimum of the grid.
inline PhaseAdjustment final_phase_adjust(const GalerkinModel& model, const std::vector<CMatrix>& achieved,
                                          const std::vector<CMatrix>& target, double t_max, double tol) {
  if (achieved.size() != target.size() || static_cast<int>(achieved.size()) != model.block_count())
    throw StructuralError("synthesis", "phase adjustment frames do not match the model");
  for (std::size_t b = 0; b < achieved.size(); ++b) {
    if (achieved[b].rows() != target[b].rows() || achieved[b].cols() != target[b].cols())
      throw StructuralError("synthesis", "phase adjustment frame shapes differ");
    const double dm = (achieved[b].cwiseAbs() - target[b].cwiseAbs()).cwiseAbs().maxCoeff();
    if (dm > tol)
      throw SynthesisError("synthesis", "moduli differ by " + std::to_string(dm) + " before phase adjustment", dm);
  }
  double lam_max = 0.0;
  for (const auto& sp : model.spectra)
    for (double l : sp) lam_max = std::max(lam_max, std::abs(l));
  auto f = [&](double t) { return detail::phase_mismatch(model, achieved, target, t); };

  PhaseAdjustment out;
  out.t_star = 0.0;
  out.residual = f(0.0);
  if (lam_max > 0.0 && out.residual > 0.0) {
    const double h = 2.0 * kPi / (10.0 * lam_max);
    const long n = static_cast<long>(std::floor(t_max / h));
    std::vector<double> coarse(n + 1);
    for (long k = 0; k <= n; ++k) coarse[k] = f(k * h);
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    auto refine = [&](double t0) {
      double a = std::max(0.0, t0 - h), b = std::min(t_max, t0 + h);
      double c = b - gr * (b - a), d = a + gr * (b - a);
      double fc = f(c), fd = f(d);
      for (int it = 0; it < 80 && b - a > 1e-13 * std::max(1.0, t0); ++it) {
        if (fc < fd) {
          b = d;
          d = c;
          fd = fc;
          c = b - gr * (b - a);
          fc = f(c);
        } else {
          a = c;
          c = d;
          fc = fd;
          d = a + gr * (b - a);
          fd = f(d);
        }
      }
      return 0.5 * (a + b);
    };
    // Every coarse local minimum is refined: the grid values alone do not
    // rank near-recurrences reliably at this step.
    for (long k = 0; k <= n; ++k) {
      const bool left = k == 0 || coarse[k] <= coarse[k - 1];
      const bool right = k == n || coarse[k] <= coarse[k + 1];
      if (!left || !right) continue;
      const double t = refine(k * h);
      const double v = f(t);
      if (v < out.residual) {
        out.residual = v;
        out.t_star = t;
      }
      if (coarse[k] < out.residual) {
        out.residual = coarse[k];
        out.t_star = k * h;
      }
    }
  }
  if (out.residual > tol) {
    throw SynthesisError("synthesis", "no drift time within " + std::to_string(t_max) + " aligns the phases; best t* = " +
                                          std::to_string(out.t_star) + " with residual " + std::to_string(out.residual),
                         out.residual);
  }
  out.segment.domain = ControlDomain::kU;
  out.segment.delta = model.delta;
  out.segment.append(out.t_star, 0.0);
  return out;
}

struct L1Bound {
  double bound = 0.0;          // with the min over chain pairs
  double literal_bound = 0.0;  // with the min over all (k,l) <= N1; infinite when that min is zero
  bool literal_degenerate = false;
  double chain_min = 0.0;
  double literal_min = 0.0;
  double mu_total = 0.0;       // sum over blocks of ||mu||_L1
  std::vector<double> mu;      // per block
};

/// ||mu||_L1 per block is the sum of ||log(M_s^{-1} M_{s+1})||_F over the grid.
inline std::vector<double> target_speed_integrals(const SUTarget& target) {
  std::vector<double> mu;
  for (int b = 0; b < target.block_count(); ++b) {
    double acc = 0.0;
    for (int s = 0; s + 1 < target.sample_count(); ++s)
      acc += logm_unitary(target.matrices[b][s].adjoint() * target.matrices[b][s + 1]).norm();
    mu.push_back(acc);
  }
  return mu;
}

/// (sum n_i)^{3/2} N1^2 sum ||mu|| / min|b|, with `model` truncated at order
/// N1 and min|b| taken over the widest connectedness chain of every block.
inline L1Bound l1_bound(const GalerkinModel& model, const SUTarget& target, int N1, double edge_tol = 1e-12) {
  if (N1 < 1 || N1 > model.order) throw StructuralError("synthesis", "N1 must lie in [1, model order]");
  L1Bound out;
  out.mu = target_speed_integrals(target);
  for (double v : out.mu) out.mu_total += v;
  const double blocks = model.block_count();
  out.chain_min = std::numeric_limits<double>::infinity();
  out.literal_min = std::numeric_limits<double>::infinity();
  for (int b = 0; b < model.block_count(); ++b) {
    const CMatrix& c = model.couplings[b];
    for (int k = 0; k < N1; ++k)
      for (int l = 0; l < N1; ++l) out.literal_min = std::min(out.literal_min, std::abs(c(k, l)));
    EnsembleSpec one{{SystemSpec{model.spectra[model.blocks[b].system], {c}, 0.0}}, model.delta};
    const auto chain = find_connectedness_chain(one, 0, 0, N1, edge_tol);
    if (!chain) throw SynthesisError("synthesis", "block " + std::to_string(b + 1) + " has no connectedness chain");
    for (const auto& p : chain->pairs) out.chain_min = std::min(out.chain_min, std::abs(c(p.k, p.l)));
  }
  if (N1 == 1) out.chain_min = out.literal_min;
  const double factor = std::pow(blocks, 1.5) * N1 * N1 * out.mu_total;
  out.bound = out.chain_min > 0.0 ? factor / out.chain_min : std::numeric_limits<double>::infinity();
  out.literal_degenerate = !(out.literal_min > 0.0);
  out.literal_bound = out.literal_degenerate ? std::numeric_limits<double>::infinity() : factor / out.literal_min;
  if (out.mu_total == 0.0) out.bound = out.literal_bound = 0.0;
  return out;
}

}  // namespace simtrack
