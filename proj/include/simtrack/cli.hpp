#pragma once

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "simtrack/io.hpp"

namespace simtrack::cli {

using io::json;

enum class ModeChoice { kAuto, kGroup, kModulus };

struct RunConfig {
  std::string spec_path;
  std::string target_path;
  std::string control_path;
  std::string out_dir = "simtrack-out";
  double eps = 0.1;
  int levels = 0;  // N; 0 takes every stored target column
  std::uint64_t seed = 1;
  ModeChoice mode = ModeChoice::kAuto;
  double t_max = 1e4;  // final free-drift search window
  long max_segments = 5'000'000;
  double tau0 = 0.0;
  // counterexample sweep
  int runs = 100;
  double horizon = 1e3;
  int switches = 20;
  double t_switch = 5.0;
  double u_max = 10.0;
  // named tolerance overrides (--tol name=value)
  HypothesisOptions hypotheses;
  SUTargetOptions frames;
  double step_tol_fraction = 0.25;
  double fit_tol = 1e-9;
  std::optional<double> phase_tol;  // defaults to eps
  double csv_divisions = 2000;

  void check() const {
    if (!(eps > 0.0 && eps < 1.0)) throw UsageError("eps must lie in (0, 1)");
    if (levels < 0) throw UsageError("--levels must be positive");
    if (runs < 1) throw UsageError("--runs must be positive");
    if (!(horizon > 0.0)) throw UsageError("--horizon must be positive");
    if (!(t_max >= 0.0)) throw UsageError("--t-max must be nonnegative");
    if (max_segments < 1) throw UsageError("--max-segments must be positive");
  }
};

/// Applies one "name=value" override.
inline void apply_tolerance(RunConfig& cfg, const std::string& item) {
  const auto eq = item.find('=');
  if (eq == std::string::npos) throw UsageError("tolerance override '" + item + "' is not name=value");
  const std::string name = item.substr(0, eq);
  double value = 0.0;
  try {
    std::size_t used = 0;
    value = std::stod(item.substr(eq + 1), &used);
    if (used != item.size() - eq - 1) throw std::invalid_argument(item);
  } catch (const std::exception&) {
    throw UsageError("tolerance override '" + item + "' has no numeric value");
  }
  if (!(value > 0.0)) throw UsageError("tolerance '" + name + "' must be positive");
  if (name == "skew") cfg.hypotheses.skew_tol = value;
  else if (name == "resonance") cfg.hypotheses.resonance_tol = value;
  else if (name == "edge") cfg.hypotheses.edge_tol = value;
  else if (name == "separation") cfg.hypotheses.separation_tol = value;
  else if (name == "identity") cfg.frames.identity_tol = value;
  else if (name == "continuity") cfg.frames.continuity_bound = value;
  else if (name == "fit") cfg.fit_tol = value;
  else if (name == "step") cfg.step_tol_fraction = value;
  else if (name == "phase") cfg.phase_tol = value;
  else
    throw UsageError("unknown tolerance '" + name +
                     "' (skew, resonance, edge, separation, identity, continuity, fit, step, phase)");
}

/// Structural checks raise exit 2, hypothesis checks exit 3; undecided
/// verdicts are reported but do not fail.
inline int validation_exit_code(const ValidationReport& r) {
  int code = 0;
  for (const auto& c : r.checks) {
    if (c.verdict != Verdict::kFail) continue;
    if (c.name == "dimensions" || c.name == "skew_adjoint") return 2;
    code = 3;
  }
  return code;
}

inline std::string describe_failure(const ValidationReport& r) {
  for (const auto& c : r.checks) {
    if (c.verdict != Verdict::kFail) continue;
    std::string msg = c.name;
    if (c.system >= 0) msg += " (system " + std::to_string(c.system + 1) + ", control " + std::to_string(c.control + 1) + ")";
    if (!c.witness.empty()) {
      msg += " witness";
      for (long long w : c.witness) msg += " " + std::to_string(w);
    }
    if (!c.detail.empty()) msg += ": " + c.detail;
    return msg;
  }
  return "";
}

inline int min_depth(const EnsembleSpec& spec) {
  int d = std::numeric_limits<int>::max();
  for (const auto& s : spec.systems) d = std::min(d, s.depth());
  return d;
}

struct SynthesisOutcome {
  int order = 0;
  int columns = 0;
  TrackingMode mode = TrackingMode::kGroup;
  SUTarget target;
  GalerkinModel model;
  GeneratorSet gens;
  ValidationReport hypotheses;
  int closure_dim = 0;
  TrackingResult tracking;
  PiecewiseConstantControl u;  // with the final free drift appended
  std::optional<PhaseAdjustment> adjustment;
  double raw_endpoint_error = 0.0;  // before the free drift
  int tail_order = 0;
  L1Bound l1;
  TrackingReport report;
  std::vector<std::string> warnings;
};

/// Target frames -> Galerkin order -> hypotheses -> rank -> tracking ->
/// u-domain control -> free-drift phase fix -> metrics.
inline SynthesisOutcome synthesize(const EnsembleSpec& spec, const TargetCurve& curve, const RunConfig& cfg) {
  cfg.check();
  {
    const auto v = validate_spec(spec, cfg.hypotheses.skew_tol);
    if (validation_exit_code(v) == 2) throw StructuralError("model", describe_failure(v));
  }
  if (curve.blocks != block_ids(spec))
    throw StructuralError("galerkin", "target frames must list every (system, control) block in order");
  if (curve.frames.empty() || curve.frames.front().empty())
    throw StructuralError("galerkin", "target has no frames");
  SynthesisOutcome out;
  const auto& f0 = curve.frames.front().front();
  out.columns = cfg.levels > 0 ? cfg.levels : static_cast<int>(f0.cols());
  if (f0.rows() > min_depth(spec))
    throw StructuralError("galerkin", "target frames have more levels than the spec stores");

  out.target = build_su_target(curve, out.columns, cfg.eps, cfg.frames);
  out.order = out.target.order;
  out.model = truncate_operators(spec, out.order);

  out.hypotheses = check_hypotheses(spec, out.order, cfg.hypotheses);
  if (const int code = validation_exit_code(out.hypotheses); code != 0) {
    const std::string why = describe_failure(out.hypotheses);
    if (code == 2) throw StructuralError("model", why);
    throw HypothesisError("model", why);
  }
  for (const auto& c : out.hypotheses.checks)
    if (c.verdict == Verdict::kUndecided) out.warnings.push_back(c.name + " undecided: " + c.detail);

  out.gens = build_generator_set(out.model);
  const int cap = default_closure_cap(out.model);
  out.closure_dim = lie_closure(out.gens, cap, 1e-9, true).dimension;
  if (verify_full_rank(spec, out.order, out.closure_dim) != Verdict::kPass)
    throw HypothesisError("liealg", "closure dimension " + std::to_string(out.closure_dim) + " differs from " +
                                        std::to_string(full_rank_dimension(out.order, spec.block_count())));

  TrackingOptions topt;
  out.mode = cfg.mode == ModeChoice::kGroup     ? TrackingMode::kGroup
             : cfg.mode == ModeChoice::kModulus ? TrackingMode::kModulus
             : out.model.block_count() == 1     ? TrackingMode::kGroup
                                                : TrackingMode::kModulus;
  topt.mode = out.mode;
  topt.max_segments = cfg.max_segments;
  topt.tau0 = cfg.tau0;
  topt.step_tol_fraction = cfg.step_tol_fraction;
  topt.emitter.fit_tol = cfg.fit_tol;
  out.tracking = bch_tracking_control(out.target, out.model, out.gens, cfg.eps, topt);

  out.u = out.tracking.control.empty() ? PiecewiseConstantControl{ControlDomain::kU, spec.delta, {}, {}}
                                       : reparametrize(out.tracking.control);
  const int N = out.columns;
  auto leading = [N](std::vector<CMatrix> frames) {
    for (auto& f : frames) f = f.leftCols(N).eval();
    return frames;
  };
  std::vector<CMatrix> goal;
  for (int b = 0; b < out.target.block_count(); ++b) goal.push_back(out.target.matrices[b].back().leftCols(N));
  const auto raw = leading(propagate_final(out.model, out.u, identity_states(out.model, out.order)));
  out.raw_endpoint_error = endpoint_error(raw, out.target, N);

  const double phase_tol = cfg.phase_tol.value_or(cfg.eps);
  try {
    out.adjustment = final_phase_adjust(out.model, raw, goal, cfg.t_max, phase_tol);
    out.u.append(out.adjustment->segment);
  } catch (const SynthesisError& e) {
    if (out.mode == TrackingMode::kGroup) throw;
    out.warnings.push_back(std::string("final phase adjustment skipped: ") + e.what());
  }

  SamplingOptions dense;
  dense.step = 0.0;
  dense.default_divisions = 1000;
  const Trajectory traj = propagate(out.model, out.u, identity_states(out.model, N), dense);
  out.report.modulus_error = modulus_error(traj, out.target, N);
  out.report.endpoint_error = endpoint_error(traj, out.target, N);
  out.report.measured_l1 = out.u.l1_norm();

  const double t_v = out.tracking.control.horizon();
  out.tail_order = t_v > 0.0 ? tail_truncation_order(spec, cfg.eps, N, t_v, out.order) : out.order;
  out.l1 = l1_bound(truncate_operators(spec, out.tail_order), out.target, out.tail_order, cfg.hypotheses.edge_tol);
  out.report.l1_bound = out.l1.bound;
  out.report.l1_bound_literal = out.l1.literal_bound;
  out.report.literal_degenerate = out.l1.literal_degenerate;
  return out;
}

inline json synthesis_report_json(const SynthesisOutcome& o, const RunConfig& cfg) {
  json adj = nullptr;
  if (o.adjustment) adj = {{"t_star", o.adjustment->t_star}, {"residual", o.adjustment->residual}};
  return {{"command", "synthesize"},
          {"seed", cfg.seed},
          {"eps", cfg.eps},
          {"columns", o.columns},
          {"order", o.order},
          {"mode", to_string(o.mode)},
          {"closure_dimension", o.closure_dim},
          {"hypotheses", io::validation_to_json(o.hypotheses)},
          {"tracking", io::tracking_report_to_json(o.report)},
          {"raw_endpoint_error", o.raw_endpoint_error},
          {"final_sample_gap", o.tracking.final_gap},
          {"worst_sample_gap", o.tracking.worst_sample_gap},
          {"phase_adjustment", adj},
          {"segments", o.u.size()},
          {"horizon_u", o.u.horizon()},
          {"horizon_v", o.tracking.control.horizon()},
          {"tail_order", o.tail_order},
          {"l1",
           {{"bound", io::detail::finite_or_null(o.l1.bound)},
            {"literal_bound", io::detail::finite_or_null(o.l1.literal_bound)},
            {"literal_min_degenerate", o.l1.literal_degenerate},
            {"chain_min", o.l1.chain_min},
            {"literal_min", o.l1.literal_min},
            {"mu_total", o.l1.mu_total},
            {"mu", o.l1.mu}}},
          {"warnings", o.warnings}};
}

struct SweepOutcome {
  std::vector<CounterexampleReport> runs;
  int exits = 0;
  int literal_holds = 0;
  int corrected_holds = 0;
  double latest_exit = 0.0;
};

/// One report per control: the given control, or `cfg.runs` seeded random
/// nonnegative controls drawn in run order.
inline SweepOutcome counterexample_sweep(const EnsembleSpec& spec, const RunConfig& cfg,
                                         const std::optional<PiecewiseConstantControl>& control) {
  cfg.check();
  const auto v = validate_spec(spec, cfg.hypotheses.skew_tol);
  if (validation_exit_code(v) == 2) throw StructuralError("model", describe_failure(v));
  const GalerkinModel model = truncate_operators(spec, min_depth(spec));
  SweepOutcome out;
  std::mt19937_64 rng(cfg.seed);
  const int n = control ? 1 : cfg.runs;
  for (int r = 0; r < n; ++r) {
    const auto u = control ? *control : random_nonnegative_control(rng, cfg.switches, cfg.t_switch, cfg.u_max, spec.delta);
    auto rep = verify_counterexample(model, u, cfg.eps, cfg.horizon);
    if (rep.exit_time) {
      ++out.exits;
      out.latest_exit = std::max(out.latest_exit, *rep.exit_time);
    }
    if (rep.literal_integral.holds && rep.literal_growth.holds) ++out.literal_holds;
    if (rep.corrected_integral.holds && rep.corrected_growth.holds) ++out.corrected_holds;
    out.runs.push_back(std::move(rep));
  }
  return out;
}

namespace detail {

inline std::filesystem::path out_path(const RunConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.out_dir);
  return std::filesystem::path(cfg.out_dir) / name;
}

inline void write(const RunConfig& cfg, const std::string& name, const std::string& text) {
  io::write_file(out_path(cfg, name).string(), text);
}

inline EnsembleSpec load_spec(const RunConfig& cfg) {
  if (cfg.spec_path.empty()) throw UsageError("--spec is required");
  return io::spec_from_json(io::parse(io::read_file(cfg.spec_path), cfg.spec_path));
}

}  // namespace detail

inline int cmd_validate(const RunConfig& cfg, std::ostream& log) {
  const EnsembleSpec spec = detail::load_spec(cfg);
  ValidationReport report;
  try {
    const int depth = cfg.levels > 0 ? cfg.levels : min_depth(spec);
    if (depth > min_depth(spec)) throw StructuralError("model", "--levels exceeds the stored depth");
    report = check_hypotheses(spec, depth, cfg.hypotheses);
  } catch (const StructuralError& e) {
    report.checks.push_back({"dimensions", Verdict::kFail, -1, -1, {}, e.what(), 0.0});
  }
  json j = io::validation_to_json(report);
  j["command"] = "validate";
  detail::write(cfg, "validation.json", io::dump(j));
  const int code = validation_exit_code(report);
  if (code != 0) log << "validation failed: " << describe_failure(report) << "\n";
  else log << "validation passed\n";
  return code;
}

inline int cmd_synthesize(const RunConfig& cfg, std::ostream& log) {
  const EnsembleSpec spec = detail::load_spec(cfg);
  if (cfg.target_path.empty()) throw UsageError("--target is required");
  const TargetCurve curve = io::target_from_json(io::parse(io::read_file(cfg.target_path), cfg.target_path));
  const auto outcome = synthesize(spec, curve, cfg);

  detail::write(cfg, "control.json", io::dump(io::control_to_json(outcome.u)));
  detail::write(cfg, "plan.json", io::dump(io::plan_to_json(outcome.tracking.plan, outcome.gens)));
  detail::write(cfg, "report.json", io::dump(synthesis_report_json(outcome, cfg)));
  SamplingOptions coarse;
  coarse.breakpoints = false;
  coarse.default_divisions = static_cast<int>(cfg.csv_divisions);
  detail::write(cfg, "trajectory.csv",
                io::trajectory_csv(propagate(outcome.model, outcome.u,
                                             identity_states(outcome.model, outcome.columns), coarse)));
  for (const auto& w : outcome.warnings) log << "warning: " << w << "\n";
  log << "order " << outcome.order << ", " << outcome.u.size() << " segments, modulus_error "
      << outcome.report.modulus_error << ", endpoint_error " << outcome.report.endpoint_error << ", L1 "
      << outcome.report.measured_l1 << " (bound " << outcome.report.l1_bound << ")\n";
  return 0;
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& log) {
  const EnsembleSpec spec = detail::load_spec(cfg);
  if (cfg.control_path.empty()) throw UsageError("--control is required");
  const auto control = io::control_from_json(io::parse(io::read_file(cfg.control_path), cfg.control_path));
  const auto v = validate_spec(spec, cfg.hypotheses.skew_tol);
  if (validation_exit_code(v) == 2) throw StructuralError("model", describe_failure(v));

  std::optional<SUTarget> target;
  if (!cfg.target_path.empty()) {
    const auto curve = io::target_from_json(io::parse(io::read_file(cfg.target_path), cfg.target_path));
    const int N = cfg.levels > 0 ? cfg.levels : static_cast<int>(curve.frames.at(0).at(0).cols());
    target = build_su_target(curve, N, cfg.eps, cfg.frames);
  }
  const int m = target ? target->order : min_depth(spec);
  const int N = target ? target->columns : (cfg.levels > 0 ? cfg.levels : m);
  if (N > m) throw StructuralError("sim", "--levels exceeds the Galerkin order");
  const GalerkinModel model = truncate_operators(spec, m);

  const Trajectory traj = propagate(model, control, identity_states(model, N));
  double defect = 0.0;
  const auto full = propagate_final(model, control, identity_states(model, m));
  for (const auto& x : full) defect = std::max(defect, unitarity_defect(x));

  json report{{"command", "simulate"},
              {"seed", cfg.seed},
              {"order", m},
              {"columns", N},
              {"domain", to_string(control.domain)},
              {"segments", control.size()},
              {"horizon", control.horizon()},
              {"l1", control.l1_norm()},
              {"unitarity_defect", defect}};
  if (target) {
    report["modulus_error"] = modulus_error(traj, *target, N);
    report["endpoint_error"] = endpoint_error(traj, *target, N);
  }
  detail::write(cfg, "report.json", io::dump(report));
  SamplingOptions coarse;
  coarse.breakpoints = false;
  coarse.default_divisions = static_cast<int>(cfg.csv_divisions);
  detail::write(cfg, "trajectory.csv", io::trajectory_csv(propagate(model, control, identity_states(model, N), coarse)));
  log << "simulated " << control.size() << " segments over " << control.horizon() << "\n";
  return 0;
}

inline int cmd_counterexample(const RunConfig& cfg, std::ostream& log) {
  const EnsembleSpec spec = cfg.spec_path.empty() ? bundled_counterexample_spec() : detail::load_spec(cfg);
  std::optional<PiecewiseConstantControl> control;
  if (!cfg.control_path.empty())
    control = io::control_from_json(io::parse(io::read_file(cfg.control_path), cfg.control_path));
  const auto sweep = counterexample_sweep(spec, cfg, control);

  json runs = json::array();
  for (std::size_t r = 0; r < sweep.runs.size(); ++r) {
    json e = io::counterexample_to_json(sweep.runs[r]);
    e["run"] = r;
    runs.push_back(std::move(e));
  }
  const int n = static_cast<int>(sweep.runs.size());
  json report{{"command", "counterexample"},
              {"seed", cfg.seed},
              {"eps", cfg.eps},
              {"horizon", cfg.horizon},
              {"spec", io::spec_to_json(spec)},
              {"summary",
               {{"runs", n},
                {"exits", sweep.exits},
                {"latest_exit", sweep.latest_exit},
                {"literal_chain_holds", sweep.literal_holds},
                {"corrected_chain_holds", sweep.corrected_holds}}},
              {"runs", runs}};
  detail::write(cfg, "counterexample.json", io::dump(report));
  for (const auto& w : sweep.runs.front().warnings) log << "warning: " << w << "\n";
  log << sweep.exits << "/" << n << " runs left the eps-ball before t = " << cfg.horizon << "; literal chain held in "
      << sweep.literal_holds << ", corrected chain in " << sweep.corrected_holds << "\n";
  return 0;
}

/// Parses argv and runs one subcommand; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Simultaneous tracking synthesis for bilinear quantum ensembles"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::vector<std::string> tols;
  std::string mode = "auto";

  auto common = [&](CLI::App* sub) {
    sub->add_option("--spec", cfg.spec_path, "ensemble spec (JSON)");
    sub->add_option("--out", cfg.out_dir, "output directory")->capture_default_str();
    sub->add_option("--levels", cfg.levels, "tracked columns N (validate: hypothesis depth)");
    sub->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
    sub->add_option("--tol", tols, "tolerance override name=value (repeatable)");
  };
  auto* validate = app.add_subcommand("validate", "check structure and controllability hypotheses");
  common(validate);
  auto* synth = app.add_subcommand("synthesize", "build a tracking control for a target curve");
  common(synth);
  synth->add_option("--target", cfg.target_path, "target curve (JSON)");
  synth->add_option("--eps", cfg.eps, "tracking tolerance in (0, 1)")->capture_default_str();
  synth->add_option("--mode", mode, "auto, group or modulus")->capture_default_str();
  synth->add_option("--t-max", cfg.t_max, "final free-drift window")->capture_default_str();
  synth->add_option("--tau0", cfg.tau0, "switching period (0 chooses)")->capture_default_str();
  synth->add_option("--max-segments", cfg.max_segments, "segment budget")->capture_default_str();
  auto* sim = app.add_subcommand("simulate", "propagate a control and export the trajectory");
  common(sim);
  sim->add_option("--control", cfg.control_path, "control (JSON)");
  sim->add_option("--target", cfg.target_path, "optional target curve for error metrics");
  sim->add_option("--eps", cfg.eps, "frame projection tolerance")->capture_default_str();
  auto* cex = app.add_subcommand("counterexample", "check the modulus-and-phase obstruction on random controls");
  common(cex);
  cex->add_option("--control", cfg.control_path, "single control instead of the random sweep");
  cex->add_option("--eps", cfg.eps, "ball radius")->capture_default_str();
  cex->add_option("--runs", cfg.runs, "random controls")->capture_default_str();
  cex->add_option("--horizon", cfg.horizon, "simulation horizon")->capture_default_str();
  cex->add_option("--switches", cfg.switches, "switches per random control")->capture_default_str();
  cex->add_option("--t-switch", cfg.t_switch, "switching window")->capture_default_str();
  cex->add_option("--u-max", cfg.u_max, "largest random value")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, log, err);
    return code == 0 ? 0 : 1;
  }

  try {
    for (const auto& t : tols) apply_tolerance(cfg, t);
    if (mode == "auto") cfg.mode = ModeChoice::kAuto;
    else if (mode == "group") cfg.mode = ModeChoice::kGroup;
    else if (mode == "modulus") cfg.mode = ModeChoice::kModulus;
    else throw UsageError("--mode must be auto, group or modulus");
    cfg.check();
    const auto start = std::chrono::steady_clock::now();
    int code = 0;
    if (validate->parsed()) code = cmd_validate(cfg, log);
    else if (synth->parsed()) code = cmd_synthesize(cfg, log);
    else if (sim->parsed()) code = cmd_simulate(cfg, log);
    else code = cmd_counterexample(cfg, log);
    const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start;
    log << "wall time " << wall.count() << " s\n";
    return code;
  } catch (const Error& e) {
    err << "error: " << e.what();
    if (e.achieved()) err << " (achieved " << *e.achieved() << ")";
    err << "\n";
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error [cli]: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace simtrack::cli
