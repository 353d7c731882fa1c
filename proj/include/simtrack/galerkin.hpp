#pragma once

#include <functional>
#include <string>
#include <vector>

#include "simtrack/control.hpp"
#include "simtrack/model.hpp"

namespace simtrack {

/// Leading m x m blocks of an ensemble.
struct GalerkinModel {
  int order = 0;
  double delta = 1.0;
  std::vector<std::vector<double>> spectra;  // per system, length m
  std::vector<BlockId> blocks;
  std::vector<CMatrix> couplings;  // per block, m x m operator matrices

  int block_count() const { return static_cast<int>(blocks.size()); }
  int system_count() const { return static_cast<int>(spectra.size()); }

  CMatrix drift(int system) const {
    CMatrix a = CMatrix::Zero(order, order);
    for (int k = 0; k < order; ++k) a(k, k) = kI * spectra[system][k];
    return a;
  }
  CMatrix drift_of_block(int b) const { return drift(blocks[b].system); }
};

/// Time-sampled unitary curve per block, restricted to its first columns.
struct TargetCurve {
  std::vector<double> times;
  std::vector<BlockId> blocks;
  std::vector<std::vector<CMatrix>> frames;  // [block][sample], D x K
};

struct SUTarget {
  int order = 0;
  int columns = 0;  // N: leading columns that carry the target
  std::vector<double> times;
  std::vector<BlockId> blocks;
  std::vector<std::vector<CMatrix>> matrices;  // [block][sample], m x m special unitary

  int block_count() const { return static_cast<int>(blocks.size()); }
  int sample_count() const { return static_cast<int>(times.size()); }
};

inline GalerkinModel truncate_operators(const EnsembleSpec& spec, int m) {
  check_structure(spec);
  if (m < 1) throw StructuralError("galerkin", "Galerkin order must be positive");
  GalerkinModel g;
  g.order = m;
  g.delta = spec.delta;
  for (int i = 0; i < spec.system_count(); ++i) {
    const auto& s = spec.systems[i];
    if (m > s.depth())
      throw StructuralError("galerkin", "order " + std::to_string(m) + " exceeds stored depth " +
                                            std::to_string(s.depth()) + " of system " + std::to_string(i + 1));
    g.spectra.emplace_back(s.spectrum.begin(), s.spectrum.begin() + m);
    for (int j = 0; j < s.controls(); ++j) {
      g.blocks.push_back({i, j});
      g.couplings.push_back(s.couplings[j].topLeftCorner(m, m));
    }
  }
  return g;
}

/// Smallest N with sum_{k<N} |x_k|^2 > 1 - eps at every sample.
inline int essential_truncation(const std::vector<CVector>& samples, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw StructuralError("galerkin", "eps must lie in (0,1)");
  int n = 0;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const CVector& x = samples[s];
    double mass = 0.0;
    int need = -1;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      mass += std::norm(x(k));
      if (mass > 1.0 - eps) {
        need = static_cast<int>(k) + 1;
        break;
      }
    }
    if (need < 0)
      throw StructuralError("galerkin", "depth exhausted at sample " + std::to_string(s) +
                                            ": stored mass " + std::to_string(mass), mass);
    n = std::max(n, need);
  }
  return n;
}

/// Worst essential truncation over every block and every column k < N.
inline int essential_truncation(const TargetCurve& curve, int N, double eps) {
  int n = 1;
  for (const auto& per_block : curve.frames) {
    for (int k = 0; k < N; ++k) {
      std::vector<CVector> col;
      for (const auto& f : per_block) col.push_back(f.col(k));
      n = std::max(n, essential_truncation(col, eps));
    }
  }
  return n;
}

struct SUTargetOptions {
  double continuity_bound = 1.0;      // max ||M_s - M_{s-1}||_F between samples
  double gram_condition_limit = 1e8;  // of the projected columns' Gram matrix
  double identity_tol = 1e-9;         // frames at t_0 versus identity columns
  int max_refinements = 256;
};

using CurveSampler = std::function<std::vector<CMatrix>(double)>;

namespace detail {

// Orthonormalizes `refs` against `basis` (modified Gram-Schmidt, two passes)
// and appends the survivors; falls back to canonical vectors with the largest
// residual when a reference is nearly dependent.
inline void complete_frame(CMatrix& frame, int filled, const CMatrix& refs) {
  const Eigen::Index m = frame.rows();
  auto residual = [&](CVector v, int upto) {
    for (int pass = 0; pass < 2; ++pass)
      for (int c = 0; c < upto; ++c) v -= frame.col(c).dot(v) * frame.col(c);
    return v;
  };
  int col = filled;
  for (Eigen::Index r = 0; r < refs.cols() && col < m; ++r) {
    CVector v = residual(refs.col(r), col);
    if (v.norm() < 0.5) continue;
    frame.col(col++) = v / v.norm();
  }
  while (col < m) {
    Eigen::Index best = 0;
    double best_norm = -1.0;
    CVector best_v;
    for (Eigen::Index e = 0; e < m; ++e) {
      CVector v = residual(CVector::Unit(m, e), col);
      if (v.norm() > best_norm) {
        best_norm = v.norm();
        best = e;
        best_v = v;
      }
    }
    (void)best;
    frame.col(col++) = best_v / best_v.norm();
  }
}

struct FrameBuild {
  SUTarget target;
  double worst_projection_error = 0.0;
  int jump_block = -1;
  int jump_sample = -1;  // continuity violated between jump_sample-1 and jump_sample
};

inline FrameBuild build_frames(const TargetCurve& curve, int N, int m, const SUTargetOptions& opt) {
  FrameBuild out;
  SUTarget& t = out.target;
  t.order = m;
  t.columns = N;
  t.times = curve.times;
  t.blocks = curve.blocks;
  const int samples = static_cast<int>(curve.times.size());
  for (std::size_t b = 0; b < curve.frames.size(); ++b) {
    std::vector<CMatrix> mats;
    mats.reserve(samples);
    for (int s = 0; s < samples; ++s) {
      const CMatrix proj = curve.frames[b][s].topLeftCorner(m, N);
      const CMatrix gram = proj.adjoint() * proj;
      Eigen::SelfAdjointEigenSolver<CMatrix> es(gram, Eigen::EigenvaluesOnly);
      const double lo = es.eigenvalues()(0);
      const double hi = es.eigenvalues()(N - 1);
      if (!(lo > 0.0) || hi / lo > opt.gram_condition_limit) {
        throw StructuralError("galerkin", "projected columns are numerically dependent at grid point " +
                                              std::to_string(s) + " (t=" + std::to_string(curve.times[s]) +
                                              ") of block " + std::to_string(b + 1));
      }
      CMatrix frame = CMatrix::Zero(m, m);
      for (int k = 0; k < N; ++k) {
        CVector v = proj.col(k);
        for (int pass = 0; pass < 2; ++pass)
          for (int c = 0; c < k; ++c) v -= frame.col(c).dot(v) * frame.col(c);
        frame.col(k) = v / v.norm();
      }
      if (m > N) {
        const CMatrix refs = s == 0 ? CMatrix(CMatrix::Identity(m, m).rightCols(m - N))
                                    : CMatrix(mats.back().rightCols(m - N));
        complete_frame(frame, N, refs);
        const Complex det = frame.determinant();
        frame.col(m - 1) *= std::conj(det) / std::abs(det);
      } else {
        // No free column: remove the determinant phase globally, choosing the
        // m-th root closest to the previous frame.
        const double arg = std::arg(frame.determinant());
        CMatrix best;
        double best_dist = std::numeric_limits<double>::infinity();
        for (int r = 0; r < m; ++r) {
          const CMatrix cand = std::polar(1.0, -(arg + 2.0 * kPi * r) / m) * frame;
          const double dist = s == 0 ? (cand - CMatrix::Identity(m, m)).norm() : (cand - mats.back()).norm();
          if (dist < best_dist) {
            best_dist = dist;
            best = cand;
          }
        }
        frame = best;
      }
      for (int k = 0; k < N; ++k) {
        const double err = (proj.col(k) - frame.col(k)).norm();
        out.worst_projection_error = std::max(out.worst_projection_error, err);
      }
      if (s > 0 && out.jump_sample < 0 && (frame - mats.back()).norm() > opt.continuity_bound) {
        out.jump_block = static_cast<int>(b);
        out.jump_sample = s;
      }
      mats.push_back(std::move(frame));
    }
    t.matrices.push_back(std::move(mats));
  }
  return out;
}

inline void check_curve(const TargetCurve& curve, int N, double identity_tol) {
  if (curve.times.empty()) throw StructuralError("galerkin", "target curve has no samples");
  if (curve.frames.size() != curve.blocks.size())
    throw StructuralError("galerkin", "target curve block count mismatch");
  for (std::size_t s = 1; s < curve.times.size(); ++s)
    if (!(curve.times[s] > curve.times[s - 1])) throw StructuralError("galerkin", "target times must increase");
  for (std::size_t b = 0; b < curve.frames.size(); ++b) {
    if (curve.frames[b].size() != curve.times.size())
      throw StructuralError("galerkin", "block " + std::to_string(b + 1) + " sample count mismatch");
    const CMatrix& f0 = curve.frames[b][0];
    if (N < 1 || N > f0.cols() || N > f0.rows())
      throw StructuralError("galerkin", "N exceeds the stored column count");
    if ((f0.leftCols(N) - CMatrix::Identity(f0.rows(), N)).norm() > identity_tol)
      throw StructuralError("galerkin", "block " + std::to_string(b + 1) + " does not start at the identity");
  }
}

}  // namespace detail

/// Builds special unitary frames M(t) of the smallest order m >= N whose first
/// N columns are within eps of the m-truncated target columns at every sample.
/// With a sampler, intervals violating the continuity bound are bisected.
inline SUTarget build_su_target(TargetCurve curve, int N, double eps, const SUTargetOptions& opt = {},
                                const CurveSampler& sampler = {}) {
  detail::check_curve(curve, N, opt.identity_tol);
  const int depth = static_cast<int>(curve.frames.front().front().rows());
  int refinements = 0;
  double best_error = std::numeric_limits<double>::infinity();
  for (int m = N; m <= depth; ++m) {
    while (true) {
      auto built = detail::build_frames(curve, N, m, opt);
      if (built.jump_sample >= 0) {
        const int s = built.jump_sample;
        if (!sampler || refinements >= opt.max_refinements) {
          throw StructuralError("galerkin", "frame continuity violated on [" + std::to_string(curve.times[s - 1]) +
                                                ", " + std::to_string(curve.times[s]) + "] of block " +
                                                std::to_string(built.jump_block + 1));
        }
        const double mid = 0.5 * (curve.times[s - 1] + curve.times[s]);
        const auto fresh = sampler(mid);
        curve.times.insert(curve.times.begin() + s, mid);
        for (std::size_t b = 0; b < curve.frames.size(); ++b)
          curve.frames[b].insert(curve.frames[b].begin() + s, fresh.at(b));
        ++refinements;
        continue;
      }
      best_error = std::min(best_error, built.worst_projection_error);
      if (built.worst_projection_error < eps) return std::move(built.target);
      break;
    }
  }
  throw StructuralError("galerkin", "no order up to the stored depth meets the projection bound", best_error);
}

/// Smallest N1 in [m, D] whose row tails sum_{l >= N1} |b(k,l)|^2 (plus the
/// declared tail beyond D) stay below eps / (N T_v) for all rows k < m.
inline int tail_truncation_order(const EnsembleSpec& spec, double eps, int N, double T_v, int m) {
  check_structure(spec);
  if (!(T_v > 0.0) || N < 1) throw StructuralError("galerkin", "tail order needs T_v > 0 and N >= 1");
  const double threshold = eps / (N * T_v);
  int depth = std::numeric_limits<int>::max();
  for (const auto& s : spec.systems) depth = std::min(depth, s.depth());
  if (m > depth) throw StructuralError("galerkin", "order exceeds stored depth");
  double smallest = std::numeric_limits<double>::infinity();
  for (int n1 = m; n1 <= depth; ++n1) {
    double worst = 0.0;
    for (const auto& s : spec.systems) {
      for (const auto& b : s.couplings) {
        for (int k = 0; k < m; ++k) {
          double tail = s.truncation_tail;
          for (int l = n1; l < s.depth(); ++l) tail += std::norm(b(k, l));
          worst = std::max(worst, tail);
        }
      }
    }
    smallest = std::min(smallest, worst);
    if (worst < threshold) return n1;
  }
  throw StructuralError("galerkin", "tail bound unreachable at the stored depth; smallest tail " +
                                        std::to_string(smallest), smallest);
}

/// Velocity of the phase-frame variables y = e^{-theta A} x at phase theta:
/// e^{-theta A} B e^{theta A}, entries B(k,l) e^{-i theta (lambda_k - lambda_l)}.
inline std::vector<CMatrix> phase_frame_velocity_at(const GalerkinModel& model, double theta) {
  std::vector<CMatrix> out;
  out.reserve(model.blocks.size());
  for (int b = 0; b < model.block_count(); ++b) {
    const auto& lam = model.spectra[model.blocks[b].system];
    CMatrix f = model.couplings[b];
    for (int k = 0; k < model.order; ++k)
      for (int l = 0; l < model.order; ++l) f(k, l) *= std::polar(1.0, -theta * (lam[k] - lam[l]));
    out.push_back(std::move(f));
  }
  return out;
}

inline std::vector<CMatrix> phase_frame_velocity(const GalerkinModel& model, const PiecewiseConstantControl& v,
                                                 double t) {
  return phase_frame_velocity_at(model, v.integral(t));
}

/// Samples a curve given per block as a function of time.
inline TargetCurve make_target_curve(const std::vector<double>& times, const std::vector<BlockId>& blocks,
                                     const std::function<CMatrix(int, double)>& frame) {
  TargetCurve c;
  c.times = times;
  c.blocks = blocks;
  for (int b = 0; b < static_cast<int>(blocks.size()); ++b) {
    std::vector<CMatrix> f;
    for (double t : times) f.push_back(frame(b, t));
    c.frames.push_back(std::move(f));
  }
  return c;
}

}  // namespace simtrack
