#pragma once

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "simtrack/counterexample.hpp"
#include "simtrack/synthesis.hpp"

namespace simtrack::io {

using nlohmann::json;

namespace detail {

[[noreturn]] inline void field_error(const std::string& path, const std::string& what) {
  throw StructuralError("io", path + ": " + what);
}

inline const json& at(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) field_error(path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) field_error(path, "missing field '" + key + "'");
  return *it;
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) field_error(path, "expected a number");
  return j.get<double>();
}

inline int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) field_error(path, "expected an integer");
  return j.get<int>();
}

inline const json& array(const json& j, const std::string& path) {
  if (!j.is_array()) field_error(path, "expected an array");
  return j;
}

// Complex entries are [re, im]; a bare number is read as real.
inline Complex complex(const json& j, const std::string& path) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    field_error(path, "expected a number or an [re, im] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline CMatrix matrix(const json& j, const std::string& path) {
  array(j, path);
  if (j.empty()) field_error(path, "empty matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(array(j[0], path + "[0]").size());
  CMatrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::string rp = path + "[" + std::to_string(r) + "]";
    if (array(j[r], rp).size() != static_cast<std::size_t>(cols)) field_error(rp, "ragged matrix row");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = complex(j[r][c], rp + "[" + std::to_string(c) + "]");
  }
  return m;
}

inline std::vector<double> doubles(const json& j, const std::string& path) {
  std::vector<double> out;
  for (std::size_t k = 0; k < array(j, path).size(); ++k) out.push_back(number(j[k], path + "[" + std::to_string(k) + "]"));
  return out;
}

inline json complex_json(Complex z) { return json::array({z.real(), z.imag()}); }

inline json matrix_json(const CMatrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(complex_json(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

template <class T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace detail

/// Parses JSON text, turning syntax errors into structural errors that name
/// the source and line.
inline json parse(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const long line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n');
    throw StructuralError("io", source + ":" + std::to_string(line) + ": " + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path);
  out << text;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

// Spec: {"delta": d, "systems": [{"spectrum": [...], "couplings": [M, ...],
// "truncation_tail": t}]}

inline EnsembleSpec spec_from_json(const json& j) {
  EnsembleSpec spec;
  spec.delta = detail::number(detail::at(j, "delta", "spec"), "spec.delta");
  const json& systems = detail::array(detail::at(j, "systems", "spec"), "spec.systems");
  for (std::size_t i = 0; i < systems.size(); ++i) {
    const std::string p = "spec.systems[" + std::to_string(i) + "]";
    SystemSpec s;
    s.spectrum = detail::doubles(detail::at(systems[i], "spectrum", p), p + ".spectrum");
    const json& cs = detail::array(detail::at(systems[i], "couplings", p), p + ".couplings");
    for (std::size_t c = 0; c < cs.size(); ++c)
      s.couplings.push_back(detail::matrix(cs[c], p + ".couplings[" + std::to_string(c) + "]"));
    if (systems[i].contains("truncation_tail"))
      s.truncation_tail = detail::number(systems[i]["truncation_tail"], p + ".truncation_tail");
    spec.systems.push_back(std::move(s));
  }
  return spec;
}

inline json spec_to_json(const EnsembleSpec& spec) {
  json systems = json::array();
  for (const auto& s : spec.systems) {
    json cs = json::array();
    for (const auto& c : s.couplings) cs.push_back(detail::matrix_json(c));
    systems.push_back({{"spectrum", s.spectrum}, {"couplings", cs}, {"truncation_tail", s.truncation_tail}});
  }
  return {{"delta", spec.delta}, {"systems", systems}};
}

// Control: {"domain": "u"|"v", "delta": d|null, "segments": [[duration, value], ...]}

inline PiecewiseConstantControl control_from_json(const json& j) {
  PiecewiseConstantControl c;
  const json& dom = detail::at(j, "domain", "control");
  if (dom == "u") c.domain = ControlDomain::kU;
  else if (dom == "v") c.domain = ControlDomain::kV;
  else detail::field_error("control.domain", "expected \"u\" or \"v\"");
  if (j.contains("delta") && !j["delta"].is_null()) c.delta = detail::number(j["delta"], "control.delta");
  const json& segs = detail::array(detail::at(j, "segments", "control"), "control.segments");
  for (std::size_t l = 0; l < segs.size(); ++l) {
    const std::string p = "control.segments[" + std::to_string(l) + "]";
    if (!segs[l].is_array() || segs[l].size() != 2) detail::field_error(p, "expected [duration, value]");
    c.durations.push_back(detail::number(segs[l][0], p + "[0]"));
    c.values.push_back(detail::number(segs[l][1], p + "[1]"));
  }
  validate_control(c);
  return c;
}

inline json control_to_json(const PiecewiseConstantControl& c) {
  json segs = json::array();
  for (std::size_t l = 0; l < c.size(); ++l) segs.push_back(json::array({c.durations[l], c.values[l]}));
  return {{"domain", to_string(c.domain)}, {"delta", detail::finite_or_null(c.delta)}, {"segments", segs}};
}

// Target: {"times": [...], "frames": [{"system": i, "control": j,
// "samples": [D x K matrix per time]}]}; system and control are 1-based.

inline TargetCurve target_from_json(const json& j) {
  TargetCurve t;
  t.times = detail::doubles(detail::at(j, "times", "target"), "target.times");
  const json& frames = detail::array(detail::at(j, "frames", "target"), "target.frames");
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const std::string p = "target.frames[" + std::to_string(f) + "]";
    t.blocks.push_back({detail::integer(detail::at(frames[f], "system", p), p + ".system") - 1,
                        detail::integer(detail::at(frames[f], "control", p), p + ".control") - 1});
    const json& samples = detail::array(detail::at(frames[f], "samples", p), p + ".samples");
    if (samples.size() != t.times.size()) detail::field_error(p + ".samples", "sample count differs from times");
    std::vector<CMatrix> per;
    for (std::size_t s = 0; s < samples.size(); ++s)
      per.push_back(detail::matrix(samples[s], p + ".samples[" + std::to_string(s) + "]"));
    t.frames.push_back(std::move(per));
  }
  return t;
}

inline json target_to_json(const TargetCurve& t) {
  json frames = json::array();
  for (std::size_t b = 0; b < t.blocks.size(); ++b) {
    json samples = json::array();
    for (const auto& m : t.frames[b]) samples.push_back(detail::matrix_json(m));
    frames.push_back({{"system", t.blocks[b].system + 1}, {"control", t.blocks[b].control + 1}, {"samples", samples}});
  }
  return {{"times", t.times}, {"frames", frames}};
}

inline json validation_to_json(const ValidationReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks) {
    json e{{"name", c.name}, {"verdict", to_string(c.verdict)}, {"detail", c.detail}, {"tolerance", c.tolerance},
           {"witness", c.witness}};
    if (c.system >= 0) e["system"] = c.system + 1;
    if (c.control >= 0) e["control"] = c.control + 1;
    checks.push_back(std::move(e));
  }
  return {{"passed", r.passed()}, {"checks", checks}};
}

inline json plan_to_json(const SynthesisPlan& p, const GeneratorSet& gens) {
  json gen_list = json::array();
  for (int g = 0; g < gens.size(); ++g) {
    const auto& e = gens.elements[g];
    gen_list.push_back({{"index", g}, {"system", e.system}, {"levels", json::array({e.k + 1, e.l + 1})},
                        {"phase", e.phase}, {"steerable", e.steerable}});
  }
  json steps = json::array();
  for (const auto& s : p.steps) {
    json terms = json::array();
    double total = 0.0;
    for (const auto& t : s.terms) total += t.coefficient;
    for (const auto& t : s.terms)
      terms.push_back({{"word", t.word}, {"coefficient", t.coefficient}, {"weight", total > 0 ? t.coefficient / total : 0.0}});
    steps.push_back({{"sample", s.sample}, {"iteration", s.iteration}, {"gap_before", s.gap_before}, {"terms", terms},
                     {"theta_start", s.theta_start}, {"theta_end", s.theta_end}, {"dwells", s.dwells}});
  }
  return {{"mode", to_string(p.mode)}, {"tau0", p.tau0}, {"columns", p.columns},
          {"worst_fit_residual", p.worst_fit_residual}, {"generators", gen_list}, {"steps", steps}};
}

inline json tracking_report_to_json(const TrackingReport& r) {
  return {{"modulus_error", r.modulus_error},
          {"endpoint_error", detail::finite_or_null(r.endpoint_error)},
          {"measured_l1", r.measured_l1},
          {"l1_bound", detail::finite_or_null(r.l1_bound)},
          {"l1_bound_literal", detail::finite_or_null(r.l1_bound_literal)},
          {"literal_min_degenerate", r.literal_degenerate}};
}

inline json inequality_to_json(const InequalityCheck& c) {
  return {{"name", c.name}, {"holds", c.holds}, {"worst_margin", detail::finite_or_null(c.worst_margin)},
          {"first_violation", detail::optional_json(c.first_violation)}, {"samples", c.samples}};
}

inline json counterexample_to_json(const CounterexampleReport& r) {
  return {{"eps", r.eps},
          {"horizon", r.horizon},
          {"order", r.order},
          {"lambda1", r.lambda1},
          {"lambda2", r.lambda2},
          {"b21", r.b21},
          {"norm_b_phi1", r.norm_b_phi1},
          {"norm_b_phi2", r.norm_b_phi2},
          {"K", r.k_rate},
          {"threshold", r.threshold},
          {"warnings", r.warnings},
          {"exit_time", detail::optional_json(r.exit_time)},
          {"modulus_exit_time", detail::optional_json(r.modulus_exit_time)},
          {"integral_at_exit", r.integral_at_exit},
          {"checks", json::array({inequality_to_json(r.literal_integral), inequality_to_json(r.literal_growth),
                                  inequality_to_json(r.corrected_integral), inequality_to_json(r.corrected_growth)})}};
}

/// Columns: time, then |x| and arg x for every block, column and level.
inline std::string trajectory_csv(const Trajectory& traj) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "time";
  const auto& first = traj.states.front();
  for (std::size_t b = 0; b < first.size(); ++b)
    for (Eigen::Index l = 0; l < first[b].cols(); ++l)
      for (Eigen::Index k = 0; k < first[b].rows(); ++k) {
        const std::string tag = "s" + std::to_string(traj.blocks[b].system + 1) + "c" +
                                std::to_string(traj.blocks[b].control + 1) + "_col" + std::to_string(l + 1) + "_lvl" +
                                std::to_string(k + 1);
        out << ",mod_" << tag << ",arg_" << tag;
      }
  out << "\n";
  for (int s = 0; s < traj.sample_count(); ++s) {
    out << traj.times[s];
    for (const auto& x : traj.states[s])
      for (Eigen::Index l = 0; l < x.cols(); ++l)
        for (Eigen::Index k = 0; k < x.rows(); ++k) out << "," << std::abs(x(k, l)) << "," << std::arg(x(k, l));
    out << "\n";
  }
  return out.str();
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string cell;
    if (lineno == 1) {
      while (std::getline(ls, cell, ',')) t.header.push_back(cell);
      continue;
    }
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw StructuralError("io", "csv line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (row.size() != t.header.size())
      throw StructuralError("io", "csv line " + std::to_string(lineno) + ": expected " +
                                      std::to_string(t.header.size()) + " fields");
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace simtrack::io
