#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include "simtrack/galerkin.hpp"

namespace simtrack {

/// Sampled states of every block; states[s][b] is an m x cols frame.
struct Trajectory {
  std::vector<double> times;
  std::vector<BlockId> blocks;
  std::vector<std::vector<CMatrix>> states;
  PiecewiseConstantControl control;
  bool phase_frame = false;

  int sample_count() const { return static_cast<int>(times.size()); }
  const std::vector<CMatrix>& final_states() const { return states.back(); }
};

struct SamplingOptions {
  double step = 0.0;      // 0 selects horizon / default_divisions
  int default_divisions = 1000;
  bool breakpoints = true;  // also sample every control breakpoint
};

namespace detail {

inline CMatrix segment_generator(const GalerkinModel& model, int block, ControlDomain domain, double value) {
  const CMatrix a = model.drift_of_block(block);
  return domain == ControlDomain::kU ? CMatrix(a + value * model.couplings[block])
                                     : CMatrix(value * a + model.couplings[block]);
}

inline void check_init(const GalerkinModel& model, const std::vector<CMatrix>& init) {
  if (static_cast<int>(init.size()) != model.block_count())
    throw StructuralError("sim", "initial state count does not match the block count");
  for (const auto& x : init)
    if (x.rows() != model.order) throw StructuralError("sim", "initial state has the wrong dimension");
}

// Times in (start, end] where a sample is due: the user grid plus `end` if it
// is a breakpoint.
inline std::vector<double> due_times(double start, double end, double step, bool breakpoint) {
  std::vector<double> t;
  if (step > 0.0) {
    double k = std::floor(start / step) + 1.0;
    for (double s = k * step; s < end - 1e-12 * std::max(1.0, end); s = (++k) * step) t.push_back(s);
  }
  if (breakpoint) t.push_back(end);
  return t;
}

}  // namespace detail

inline std::vector<CMatrix> identity_states(const GalerkinModel& model, int cols) {
  return std::vector<CMatrix>(model.block_count(), CMatrix::Identity(model.order, cols));
}

/// Exact propagation of x' = (A + uB)x (u domain) or x' = (vA + B)x (v domain)
/// by one spectral factorization per block and constant segment.
inline Trajectory propagate(const GalerkinModel& model, const PiecewiseConstantControl& control,
                            const std::vector<CMatrix>& init, const SamplingOptions& opt = {}) {
  detail::check_init(model, init);
  validate_control(control);
  Trajectory traj;
  traj.blocks = model.blocks;
  traj.control = control;
  traj.times.push_back(0.0);
  traj.states.push_back(init);
  const double horizon = control.horizon();
  const double step = opt.step > 0.0 ? opt.step : (horizon > 0.0 ? horizon / opt.default_divisions : 0.0);
  std::vector<CMatrix> state = init;
  double start = 0.0;
  for (std::size_t l = 0; l < control.size(); ++l) {
    const double end = l + 1 == control.size() ? horizon : start + control.durations[l];
    std::vector<SkewExponential> exps;
    exps.reserve(model.blocks.size());
    for (int b = 0; b < model.block_count(); ++b)
      exps.emplace_back(detail::segment_generator(model, b, control.domain, control.values[l]));
    const auto due = detail::due_times(start, end, step, opt.breakpoints || l + 1 == control.size());
    for (double t : due) {
      std::vector<CMatrix> s(model.block_count());
      for (int b = 0; b < model.block_count(); ++b) s[b] = exps[b](t - start) * state[b];
      traj.times.push_back(t);
      traj.states.push_back(std::move(s));
    }
    for (int b = 0; b < model.block_count(); ++b) state[b] = exps[b](end - start) * state[b];
    start = end;
  }
  if (!opt.breakpoints && traj.times.back() != horizon && horizon > 0.0) {
    traj.times.push_back(horizon);
    traj.states.push_back(state);
  }
  return traj;
}

/// Final states only, without sampling.
inline std::vector<CMatrix> propagate_final(const GalerkinModel& model, const PiecewiseConstantControl& control,
                                            std::vector<CMatrix> state) {
  detail::check_init(model, state);
  for (std::size_t l = 0; l < control.size(); ++l)
    for (int b = 0; b < model.block_count(); ++b)
      state[b] = expm_skew(detail::segment_generator(model, b, control.domain, control.values[l]),
                           control.durations[l]) *
                 state[b];
  return state;
}

/// Diagonal phase e^{-theta A_i} applied on the left.
inline CMatrix apply_phase(const std::vector<double>& spectrum, double theta, const CMatrix& x) {
  CMatrix out = x;
  for (Eigen::Index k = 0; k < x.rows(); ++k) out.row(k) *= std::polar(1.0, -theta * spectrum[k]);
  return out;
}

/// Phase-frame trajectory y(t) = e^{-theta(t) A} x(t), theta(t) = int_0^t v,
/// composed per segment as y <- e^{-theta_end A} exp(d (vA + B)) e^{theta_start A} y.
inline Trajectory phase_propagate(const GalerkinModel& model, const PiecewiseConstantControl& v,
                                  const std::vector<CMatrix>& init, const SamplingOptions& opt = {}) {
  if (v.domain != ControlDomain::kV) throw StructuralError("sim", "phase propagation needs a v-domain control");
  detail::check_init(model, init);
  validate_control(v);
  Trajectory traj;
  traj.blocks = model.blocks;
  traj.control = v;
  traj.phase_frame = true;
  traj.times.push_back(0.0);
  traj.states.push_back(init);
  const double horizon = v.horizon();
  const double step = opt.step > 0.0 ? opt.step : (horizon > 0.0 ? horizon / opt.default_divisions : 0.0);
  std::vector<CMatrix> y = init;
  double start = 0.0;
  double theta = 0.0;
  for (std::size_t l = 0; l < v.size(); ++l) {
    const double end = l + 1 == v.size() ? horizon : start + v.durations[l];
    std::vector<SkewExponential> exps;
    for (int b = 0; b < model.block_count(); ++b)
      exps.emplace_back(detail::segment_generator(model, b, ControlDomain::kV, v.values[l]));
    auto advance = [&](double dt) {
      std::vector<CMatrix> s(model.block_count());
      for (int b = 0; b < model.block_count(); ++b) {
        const auto& lam = model.spectra[model.blocks[b].system];
        s[b] = apply_phase(lam, theta + v.values[l] * dt, exps[b](dt) * apply_phase(lam, -theta, y[b]));
      }
      return s;
    };
    for (double t : detail::due_times(start, end, step, opt.breakpoints || l + 1 == v.size())) {
      traj.times.push_back(t);
      traj.states.push_back(advance(t - start));
    }
    y = advance(end - start);
    theta += v.values[l] * v.durations[l];
    start = end;
  }
  return traj;
}

namespace detail {

inline double modulus_gap(const std::vector<CMatrix>& x, const SUTarget& target, int s, int N) {
  double worst = 0.0;
  for (int b = 0; b < target.block_count(); ++b) {
    const CMatrix& m = target.matrices[b][s];
    const CMatrix& y = x[b];
    for (int l = 0; l < N; ++l)
      for (Eigen::Index k = 0; k < m.rows(); ++k) worst = std::max(worst, std::abs(std::abs(y(k, l)) - std::abs(m(k, l))));
  }
  return worst;
}

}  // namespace detail

/// Modulus tracking error up to a monotone time warp: the smallest, over
/// monotone alignments that start together, end together and visit every
/// sample of both curves, of the largest coordinate-modulus discrepancy
/// (over blocks, rows and the first N columns) between matched samples.
inline double modulus_error(const Trajectory& traj, const SUTarget& target, int N) {
  if (traj.states.empty() || target.times.empty()) throw StructuralError("sim", "empty trajectory or target");
  if (N < 1 || N > target.columns) throw StructuralError("sim", "N exceeds the target column count");
  const int T = traj.sample_count();
  const int S = target.sample_count();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(S, inf), cur(S, inf);
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double best = inf;
      if (t == 0 && s == 0) best = -inf;
      if (t > 0) best = std::min({best, prev[s], s > 0 ? prev[s - 1] : inf});
      if (s > 0) best = std::min(best, cur[s - 1]);
      cur[s] = best == inf ? inf : std::max(best, detail::modulus_gap(traj.states[t], target, s, N));
    }
    std::swap(prev, cur);
  }
  return prev[S - 1];
}

/// Same alignment as modulus_error with the bi-invariant distance
/// ||log(M^{-1} y)||_F (max over blocks) in place of the modulus gap; needs
/// full m x m frames.
inline double group_tracking_error(const Trajectory& traj, const SUTarget& target) {
  if (traj.states.empty() || target.times.empty()) throw StructuralError("sim", "empty trajectory or target");
  const int T = traj.sample_count();
  const int S = target.sample_count();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(S, inf), cur(S, inf);
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double best = inf;
      if (t == 0 && s == 0) best = -inf;
      if (t > 0) best = std::min({best, prev[s], s > 0 ? prev[s - 1] : inf});
      if (s > 0) best = std::min(best, cur[s - 1]);
      if (best == inf) {
        cur[s] = inf;
        continue;
      }
      double d = 0.0;
      for (int b = 0; b < target.block_count(); ++b)
        d = std::max(d, group_distance(target.matrices[b][s], traj.states[t][b]));
      cur[s] = std::max(best, d);
    }
    std::swap(prev, cur);
  }
  return prev[S - 1];
}

/// Largest column distance ||x_l(T) - M_l(T)|| over blocks and l < N.
inline double endpoint_error(const std::vector<CMatrix>& final_states, const SUTarget& target, int N) {
  double worst = 0.0;
  for (int b = 0; b < target.block_count(); ++b) {
    const CMatrix& m = target.matrices[b].back();
    for (int l = 0; l < N; ++l) worst = std::max(worst, (final_states[b].col(l) - m.col(l)).norm());
  }
  return worst;
}

inline double endpoint_error(const Trajectory& traj, const SUTarget& target, int N) {
  return endpoint_error(traj.final_states(), target, N);
}

struct TrackingReport {
  double modulus_error = 0.0;
  double endpoint_error = 0.0;
  double measured_l1 = 0.0;
  double l1_bound = 0.0;        // chain-min form
  double l1_bound_literal = 0.0;  // literal min form; infinite when degenerate
  bool literal_degenerate = false;
  double wall_seconds = 0.0;
};

}  // namespace simtrack
