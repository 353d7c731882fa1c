#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "simtrack/errors.hpp"

namespace simtrack {

enum class ControlDomain { kU, kV };

inline const char* to_string(ControlDomain d) { return d == ControlDomain::kU ? "u" : "v"; }

/// Piecewise-constant scalar control. In the u domain the value multiplies the
/// coupling (x' = (A + uB)x); in the v domain it multiplies the drift
/// (x' = (vA + B)x). An empty control has zero horizon.
struct PiecewiseConstantControl {
  ControlDomain domain = ControlDomain::kU;
  double delta = std::numeric_limits<double>::infinity();
  std::vector<double> durations;
  std::vector<double> values;

  std::size_t size() const { return durations.size(); }
  bool empty() const { return durations.empty(); }

  double horizon() const {
    double t = 0.0;
    for (double d : durations) t += d;
    return t;
  }

  /// Sum |value| * duration, accumulated in segment order.
  double l1_norm() const {
    double s = 0.0;
    for (std::size_t l = 0; l < size(); ++l) s += std::abs(values[l]) * durations[l];
    return s;
  }

  std::vector<double> breakpoints() const {
    std::vector<double> b{0.0};
    for (double d : durations) b.push_back(b.back() + d);
    return b;
  }

  /// Integral of the control over [0, t], clamped to the horizon.
  double integral(double t) const {
    double acc = 0.0;
    double start = 0.0;
    for (std::size_t l = 0; l < size() && start < t; ++l) {
      const double len = std::min(durations[l], t - start);
      acc += values[l] * len;
      start += durations[l];
    }
    return acc;
  }

  void append(double duration, double value) {
    if (duration <= 0.0) return;
    if (!values.empty() && values.back() == value) {
      durations.back() += duration;
      return;
    }
    durations.push_back(duration);
    values.push_back(value);
  }

  void append(const PiecewiseConstantControl& other) {
    for (std::size_t l = 0; l < other.size(); ++l) append(other.durations[l], other.values[l]);
  }
};

/// Checks positive durations and the domain of every value: u in [0, delta]
/// (zero allowed for free drift) and v >= 1/delta.
inline void validate_control(const PiecewiseConstantControl& c) {
  if (c.durations.size() != c.values.size())
    throw StructuralError("control", "durations and values differ in length");
  if (!(c.delta > 0.0)) throw StructuralError("control", "delta must be positive");
  for (std::size_t l = 0; l < c.size(); ++l) {
    const std::string where = "segment " + std::to_string(l + 1);
    if (!(c.durations[l] > 0.0) || !std::isfinite(c.durations[l]))
      throw StructuralError("control", where + " has a non-positive duration");
    const double v = c.values[l];
    if (!std::isfinite(v)) throw StructuralError("control", where + " has a non-finite value");
    if (c.domain == ControlDomain::kU && (v < 0.0 || v > c.delta))
      throw StructuralError("control", where + " leaves the u domain [0, delta]");
    if (c.domain == ControlDomain::kV && v < 1.0 / c.delta)
      throw StructuralError("control", where + " leaves the v domain [1/delta, inf)");
  }
}

/// u -> v: v_l = 1/u_l on intervals of length u_l * dt_l; v -> u symmetrically.
inline PiecewiseConstantControl reparametrize(const PiecewiseConstantControl& c) {
  PiecewiseConstantControl out;
  out.domain = c.domain == ControlDomain::kU ? ControlDomain::kV : ControlDomain::kU;
  out.delta = c.delta;
  out.durations.reserve(c.size());
  out.values.reserve(c.size());
  for (std::size_t l = 0; l < c.size(); ++l) {
    if (!(c.values[l] > 0.0))
      throw StructuralError("control", "segment " + std::to_string(l + 1) +
                                           " has a non-positive value and cannot be reparametrized");
    out.durations.push_back(c.values[l] * c.durations[l]);
    out.values.push_back(1.0 / c.values[l]);
  }
  return out;
}

}  // namespace simtrack
