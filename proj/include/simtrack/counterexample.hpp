#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "simtrack/sim.hpp"

namespace simtrack {

/// Three-level instance with real skew couplings, b21 = B(2,1) = 1.
inline EnsembleSpec bundled_counterexample_spec() {
  CMatrix b = CMatrix::Zero(3, 3);
  b(1, 0) = 1.0;
  b(0, 1) = -1.0;
  b(2, 1) = 0.5;
  b(1, 2) = -0.5;
  b(2, 0) = 0.3;
  b(0, 2) = -0.3;
  return EnsembleSpec{{SystemSpec{{1.0, 2.4142, 3.1416}, {b}, 0.0}}, 10.0};
}

/// One inequality checked on every confined sample: lhs - rhs >= -slack.
struct InequalityCheck {
  std::string name;
  bool holds = true;
  double worst_margin = std::numeric_limits<double>::infinity();  // min lhs - rhs
  std::optional<double> first_violation;                          // time
  long samples = 0;

  InequalityCheck() = default;
  explicit InequalityCheck(std::string n) : name(std::move(n)) {}

  void record(double t, double lhs, double rhs, double slack) {
    const double margin = lhs - rhs;
    ++samples;
    worst_margin = std::min(worst_margin, margin);
    if (margin < -slack && holds) {
      holds = false;
      first_violation = t;
    }
  }
};

struct CounterexampleReport {
  double eps = 0.0;
  double horizon = 0.0;
  int order = 0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double b21 = 0.0;
  double norm_b_phi1 = 0.0;  // truncated at `order`
  double norm_b_phi2 = 0.0;
  double k_rate = 0.0;       // b21 (1 - eps) - eps ||B phi_2||
  double threshold = 0.0;    // b21 / (b21 + ||B phi_2||)
  std::vector<std::string> warnings;
  std::optional<double> exit_time;          // first t with ||x(t) - phi_1|| > eps
  std::optional<double> modulus_exit_time;  // first t with max_{i>1} |x_i(t)| > eps
  double integral_at_exit = 0.0;
  // As derived: int u > lambda1 (1 - eps) t / (eps ||B phi_1||) and a2 >= K t.
  InequalityCheck literal_integral{"integral_lower_bound"};
  InequalityCheck literal_growth{"a2_linear_growth"};
  // With the terms the derivation drops: int u >= (lambda1 (1 - eps) t - eps) / (eps ||B phi_1||)
  // and a2 >= K int u - |lambda2| eps t.
  InequalityCheck corrected_integral{"integral_lower_bound_corrected"};
  InequalityCheck corrected_growth{"a2_growth_corrected"};
};

/// Lists violated shape assumptions; empty when the model fits.
inline std::vector<std::string> counterexample_shape_violations(const GalerkinModel& model,
                                                                const PiecewiseConstantControl& u,
                                                                double tol = 1e-12) {
  std::vector<std::string> out;
  if (model.block_count() != 1) out.push_back("exactly one system with one control is required");
  if (model.order < 2) out.push_back("at least two levels are required");
  if (out.empty()) {
    const CMatrix& b = model.couplings[0];
    if (!(model.spectra[0][0] > 0.0)) out.push_back("lambda_1 must be positive");
    if (b.imag().cwiseAbs().maxCoeff() > tol) out.push_back("couplings must be real");
    if (!(b(1, 0).real() > 0.0)) out.push_back("b_21 = B(2,1) must be positive");
  }
  if (u.domain != ControlDomain::kU) out.push_back("the control must be in the u domain");
  for (double v : u.values)
    if (v < 0.0) {
      out.push_back("the control must be nonnegative");
      break;
    }
  return out;
}

/// Simulates from phi_1 and reports the first exit from the eps-ball around
/// phi_1, refined by bisection, together with the bound chain checked on
/// every sample of the confined prefix. The last control value is held
/// until `horizon`.
inline CounterexampleReport verify_counterexample(const GalerkinModel& model, const PiecewiseConstantControl& u,
                                                  double eps, double horizon, double slack = 1e-6) {
  const auto bad = counterexample_shape_violations(model, u);
  if (!bad.empty()) {
    std::string msg = "model or control does not fit the counterexample shape:";
    for (const auto& b : bad) msg += " " + b + ";";
    throw HypothesisError("sim", msg);
  }
  if (!(eps > 0.0 && eps < 1.0)) throw StructuralError("sim", "eps must lie in (0, 1)");
  validate_control(u);

  const CMatrix& b = model.couplings[0];
  const auto& lam = model.spectra[0];
  CounterexampleReport r;
  r.eps = eps;
  r.horizon = horizon;
  r.order = model.order;
  r.lambda1 = lam[0];
  r.lambda2 = lam[1];
  r.b21 = b(1, 0).real();
  r.norm_b_phi1 = b.col(0).norm();
  r.norm_b_phi2 = b.col(1).norm();
  r.k_rate = r.b21 * (1.0 - eps) - eps * r.norm_b_phi2;
  r.threshold = r.b21 / (r.b21 + r.norm_b_phi2);
  if (eps >= r.threshold)
    r.warnings.push_back("eps " + std::to_string(eps) + " is not below the threshold " + std::to_string(r.threshold));

  const CVector phi1 = CVector::Unit(model.order, 0);
  auto dist = [&](const CVector& x) { return (x - phi1).norm(); };
  auto mod_exit = [&](const CVector& x) { return x.tail(model.order - 1).cwiseAbs().maxCoeff() > eps; };

  CVector x = phi1;
  double start = 0.0;
  double integral = 0.0;
  const double bnorm = operator_norm(b);
  double lam_max = 0.0;
  for (double l : lam) lam_max = std::max(lam_max, std::abs(l));

  auto check = [&](double t, double integ, const CVector& state) {
    const double a2 = state(1).real();
    r.literal_integral.record(t, integ, r.lambda1 * (1.0 - eps) * t / (eps * r.norm_b_phi1), slack);
    r.literal_growth.record(t, a2, r.k_rate * t, slack);
    r.corrected_integral.record(t, integ, (r.lambda1 * (1.0 - eps) * t - eps) / (eps * r.norm_b_phi1), slack);
    r.corrected_growth.record(t, a2, r.k_rate * integ - std::abs(r.lambda2) * eps * t, slack);
  };

  for (std::size_t l = 0; start < horizon; ++l) {
    const bool last = l + 1 >= u.size();
    const double value = u.empty() ? 0.0 : u.values[std::min(l, u.size() - 1)];
    const double len = last ? horizon - start : std::min(u.durations[l], horizon - start);
    const SkewExponential e(model.drift_of_block(0) + value * b);
    const double dt = std::min(0.01, 0.05 / (lam_max + value * bnorm + 1e-300));
    const long steps = std::max(1L, static_cast<long>(std::ceil(len / dt)));
    const double h = len / steps;
    for (long k = 1; k <= steps; ++k) {
      const CVector y = e(k * h) * x;
      const double t = start + k * h;
      if (!r.modulus_exit_time && mod_exit(y)) {
        double lo = (k - 1) * h, hi = k * h;
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (lo + hi);
          (mod_exit(e(mid) * x) ? hi : lo) = mid;
        }
        r.modulus_exit_time = start + hi;
      }
      if (dist(y) > eps) {
        double lo = (k - 1) * h, hi = k * h;
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (lo + hi);
          (dist(e(mid) * x) > eps ? hi : lo) = mid;
        }
        r.exit_time = start + hi;
        r.integral_at_exit = integral + value * hi;
        if (r.modulus_exit_time && *r.modulus_exit_time > *r.exit_time) r.modulus_exit_time.reset();
        return r;
      }
      check(t, integral + value * k * h, y);
    }
    x = e(len) * x;
    integral += value * len;
    start += len;
    if (last) break;
  }
  return r;
}

/// `switches` uniform switching times in [0, t_switch] and values uniform in
/// [0, u_max], drawn from `rng` in that order.
inline PiecewiseConstantControl random_nonnegative_control(std::mt19937_64& rng, int switches, double t_switch,
                                                          double u_max, double delta) {
  std::uniform_real_distribution<double> when(0.0, t_switch), level(0.0, u_max);
  std::vector<double> times(switches);
  for (auto& t : times) t = when(rng);
  std::sort(times.begin(), times.end());
  PiecewiseConstantControl c;
  c.domain = ControlDomain::kU;
  c.delta = delta;
  double prev = 0.0;
  for (double t : times) {
    const double v = level(rng);
    if (t > prev) {
      c.durations.push_back(t - prev);
      c.values.push_back(v);
    }
    prev = t;
  }
  // The final value is held past the last switch.
  c.durations.push_back(std::max(t_switch - prev, 1e-9));
  c.values.push_back(level(rng));
  return c;
}

}  // namespace simtrack
