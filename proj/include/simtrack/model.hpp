#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "simtrack/errors.hpp"
#include "simtrack/linalg.hpp"

namespace simtrack {

/// One quantum system: drift i*diag(spectrum) and its control couplings,
/// all stored at depth D = spectrum.size().
struct SystemSpec {
  std::vector<double> spectrum;
  std::vector<CMatrix> couplings;
  // Declared bound on sum_{l > D} |b(k,l)|^2 for every stored row k and
  // every coupling; 0 means the stored matrices are exact.
  double truncation_tail = 0.0;

  int depth() const { return static_cast<int>(spectrum.size()); }
  int controls() const { return static_cast<int>(couplings.size()); }
};

struct EnsembleSpec {
  std::vector<SystemSpec> systems;
  double delta = 1.0;

  int system_count() const { return static_cast<int>(systems.size()); }
  int block_count() const {
    int n = 0;
    for (const auto& s : systems) n += s.controls();
    return n;
  }
};

/// A (system, control) index; blocks are ordered lexicographically.
struct BlockId {
  int system = 0;
  int control = 0;
  bool operator==(const BlockId&) const = default;
};

inline std::vector<BlockId> block_ids(const EnsembleSpec& spec) {
  std::vector<BlockId> out;
  for (int i = 0; i < spec.system_count(); ++i)
    for (int j = 0; j < spec.systems[i].controls(); ++j) out.push_back({i, j});
  return out;
}

/// 0-based level pair; reports print levels 1-based.
struct LevelPair {
  int k = 0;
  int l = 0;
  bool operator==(const LevelPair&) const = default;
};

enum class Verdict { kPass, kFail, kUndecided };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::kPass: return "pass";
    case Verdict::kFail: return "fail";
    default: return "undecided";
  }
}

struct HypothesisCheck {
  std::string name;
  Verdict verdict = Verdict::kPass;
  int system = -1;
  int control = -1;
  std::vector<long long> witness;  // levels (1-based) or an integer relation
  std::string detail;
  double tolerance = 0.0;
};

struct ValidationReport {
  std::vector<HypothesisCheck> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const HypothesisCheck& c) { return c.verdict == Verdict::kPass; });
  }
  const HypothesisCheck* first_failure() const {
    for (const auto& c : checks)
      if (c.verdict != Verdict::kPass) return &c;
    return nullptr;
  }
};

/// Throws StructuralError on empty ensembles, bad delta or dimension mismatch.
inline void check_structure(const EnsembleSpec& spec) {
  if (spec.systems.empty()) throw StructuralError("model", "ensemble has no systems");
  if (!(spec.delta > 0.0)) throw StructuralError("model", "delta must be positive");
  for (int i = 0; i < spec.system_count(); ++i) {
    const auto& s = spec.systems[i];
    if (s.spectrum.empty())
      throw StructuralError("model", "system " + std::to_string(i + 1) + " has an empty spectrum");
    if (s.couplings.empty())
      throw StructuralError("model", "system " + std::to_string(i + 1) + " has no couplings");
    if (!(s.truncation_tail >= 0.0))
      throw StructuralError("model", "system " + std::to_string(i + 1) + " has a negative truncation tail");
    for (int j = 0; j < s.controls(); ++j) {
      const auto& b = s.couplings[j];
      if (b.rows() != s.depth() || b.cols() != s.depth()) {
        std::ostringstream os;
        os << "coupling (" << i + 1 << "," << j + 1 << ") is " << b.rows() << "x" << b.cols()
           << " but spectrum has " << s.depth() << " levels";
        throw StructuralError("model", os.str());
      }
    }
  }
}

inline ValidationReport validate_spec(const EnsembleSpec& spec, double tol = 1e-12) {
  check_structure(spec);
  ValidationReport report;
  report.checks.push_back({"dimensions", Verdict::kPass, -1, -1, {}, "", 0.0});
  for (int i = 0; i < spec.system_count(); ++i) {
    const auto& s = spec.systems[i];
    for (int j = 0; j < s.controls(); ++j) {
      HypothesisCheck c{"skew_adjoint", Verdict::kPass, i, j, {}, "", tol};
      const auto& b = s.couplings[j];
      double worst = 0.0;
      for (int k = 0; k < s.depth(); ++k) {
        for (int l = k; l < s.depth(); ++l) {
          const double dev = std::abs(b(l, k) + std::conj(b(k, l)));
          if (dev > tol && dev > worst) {
            worst = dev;
            c.verdict = Verdict::kFail;
            c.witness = {k + 1, l + 1};
          }
        }
      }
      if (c.verdict == Verdict::kFail) c.detail = "deviation " + std::to_string(worst);
      report.checks.push_back(c);
    }
    HypothesisCheck c{"simple_spectrum", Verdict::kPass, i, -1, {}, "", tol};
    for (int k = 0; k < s.depth() && c.verdict == Verdict::kPass; ++k) {
      for (int l = k + 1; l < s.depth(); ++l) {
        if (std::abs(s.spectrum[k] - s.spectrum[l]) <= tol) {
          c.verdict = Verdict::kFail;
          c.witness = {k + 1, l + 1};
          break;
        }
      }
    }
    report.checks.push_back(c);
  }
  return report;
}

struct NonresonanceResult {
  Verdict verdict = Verdict::kPass;
  std::vector<long long> relation;  // integer witness, first nonzero entry positive
  double residual = 0.0;            // |sum q_k lambda_k| of the witness
  int searched_coeff = 0;           // box radius actually covered
  long long evaluations = 0;
};

/// Bounded integer-relation search over `values`. The coordinate of largest
/// modulus is eliminated by rounding, the remaining ones are enumerated over
/// the box |q| <= c, with c reduced to fit the evaluation budget.
inline NonresonanceResult check_nonresonance(const std::vector<double>& values, int max_coeff = 100,
                                             double tol = 1e-9, long long budget = 50'000'000) {
  NonresonanceResult res;
  const int n = static_cast<int>(values.size());
  if (max_coeff < 1) throw StructuralError("model", "max_coeff must be >= 1");
  res.searched_coeff = max_coeff;
  if (n == 0) return res;
  for (int k = 0; k < n; ++k) {
    if (std::abs(values[k]) <= tol) {
      res.verdict = Verdict::kFail;
      res.relation.assign(n, 0);
      res.relation[k] = 1;
      res.residual = std::abs(values[k]);
      return res;
    }
  }
  if (n == 1) return res;

  int pivot = 0;
  for (int k = 1; k < n; ++k)
    if (std::abs(values[k]) > std::abs(values[pivot])) pivot = k;
  std::vector<int> free;
  for (int k = 0; k < n; ++k)
    if (k != pivot) free.push_back(k);
  const int dims = n - 1;

  int c = max_coeff;
  auto box = [dims](int r) {
    double count = 1.0;
    for (int d = 0; d < dims; ++d) count *= 2.0 * r + 1.0;
    return count;
  };
  while (c > 0 && box(c) > static_cast<double>(budget)) --c;
  res.searched_coeff = c;
  if (c == 0) {
    res.verdict = Verdict::kUndecided;
    return res;
  }

  std::vector<int> q(dims, -c);
  long long best_norm = -1;
  const double xp = values[pivot];
  while (true) {
    ++res.evaluations;
    double partial = 0.0;
    bool all_zero = true;
    for (int d = 0; d < dims; ++d) {
      partial += q[d] * values[free[d]];
      if (q[d] != 0) all_zero = false;
    }
    const double qp = std::round(-partial / xp);
    if (!all_zero && std::abs(qp) <= max_coeff) {
      const double r = std::abs(partial + qp * xp);
      if (r <= tol) {
        long long norm = static_cast<long long>(std::abs(qp));
        for (int v : q) norm = std::max<long long>(norm, std::abs(v));
        if (best_norm < 0 || norm < best_norm) {
          best_norm = norm;
          res.relation.assign(n, 0);
          for (int d = 0; d < dims; ++d) res.relation[free[d]] = q[d];
          res.relation[pivot] = static_cast<long long>(qp);
          res.residual = r;
        }
      }
    }
    int d = 0;
    while (d < dims && q[d] == c) q[d++] = -c;
    if (d == dims) break;
    ++q[d];
  }
  if (best_norm >= 0) {
    res.verdict = Verdict::kFail;
    auto first = std::find_if(res.relation.begin(), res.relation.end(), [](long long v) { return v != 0; });
    if (*first < 0)
      for (auto& v : res.relation) v = -v;
    return res;
  }
  res.verdict = c == max_coeff ? Verdict::kPass : Verdict::kUndecided;
  return res;
}

inline std::vector<double> concatenated_spectrum(const EnsembleSpec& spec) {
  std::vector<double> all;
  for (const auto& s : spec.systems) all.insert(all.end(), s.spectrum.begin(), s.spectrum.end());
  return all;
}

inline NonresonanceResult check_nonresonance(const EnsembleSpec& spec, int max_coeff = 100, double tol = 1e-9,
                                             long long budget = 50'000'000) {
  return check_nonresonance(concatenated_spectrum(spec), max_coeff, tol, budget);
}

struct ConnectednessChain {
  int system = 0;
  int control = 0;
  int depth = 0;
  std::vector<LevelPair> pairs;  // k < l
};

namespace detail {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[b] = a;
    return true;
  }
};

struct Edge {
  LevelPair pair;
  double weight;
};

// Kruskal on edges sorted by decreasing weight: the result maximizes the
// smallest coupling modulus on the tree.
inline std::optional<std::vector<LevelPair>> widest_spanning_tree(std::vector<Edge> edges, int depth) {
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.weight > b.weight; });
  UnionFind uf(depth);
  std::vector<LevelPair> tree;
  for (const auto& e : edges)
    if (uf.unite(e.pair.k, e.pair.l)) tree.push_back(e.pair);
  if (static_cast<int>(tree.size()) != depth - 1) return std::nullopt;
  return tree;
}

inline void check_chain_args(const EnsembleSpec& spec, int i0, int j0, int depth) {
  if (i0 < 0 || i0 >= spec.system_count() || j0 < 0 || j0 >= spec.systems[i0].controls())
    throw StructuralError("model", "chain request names a missing (system, control)");
  if (depth < 1 || depth > spec.systems[i0].depth())
    throw StructuralError("model", "chain depth exceeds the stored truncation depth");
}

}  // namespace detail

inline std::optional<ConnectednessChain> find_connectedness_chain(const EnsembleSpec& spec, int i0, int j0,
                                                                  int depth, double tol = 1e-12) {
  detail::check_chain_args(spec, i0, j0, depth);
  const auto& b = spec.systems[i0].couplings[j0];
  std::vector<detail::Edge> edges;
  for (int k = 0; k < depth; ++k)
    for (int l = k + 1; l < depth; ++l)
      if (std::abs(b(k, l)) > tol) edges.push_back({{k, l}, std::abs(b(k, l))});
  auto tree = detail::widest_spanning_tree(std::move(edges), depth);
  if (!tree) return std::nullopt;
  return ConnectednessChain{i0, j0, depth, *tree};
}

struct SeparationResult {
  Verdict verdict = Verdict::kPass;
  LevelPair pair;        // offending pair on failure
  int other_control = -1;  // offending j on failure
  double gap = std::numeric_limits<double>::infinity();  // smallest modulus gap seen
};

inline SeparationResult check_modulus_separation(const EnsembleSpec& spec, const ConnectednessChain& chain,
                                                 double tol = 1e-12) {
  SeparationResult res;
  const auto& sys = spec.systems.at(chain.system);
  const auto& b0 = sys.couplings.at(chain.control);
  for (const auto& s : chain.pairs) {
    for (int j = 0; j < sys.controls(); ++j) {
      if (j == chain.control) continue;
      const double gap = std::abs(std::abs(b0(s.k, s.l)) - std::abs(sys.couplings[j](s.k, s.l)));
      if (gap < res.gap) res.gap = gap;
      if (gap <= tol && res.verdict == Verdict::kPass) {
        res.verdict = Verdict::kFail;
        res.pair = s;
        res.other_control = j;
      }
    }
  }
  return res;
}

struct SeparatedChainSearch {
  std::optional<ConnectednessChain> chain;
  // Levels reached from level 1 using only separated edges (best found).
  int reached_levels = 0;
  std::vector<LevelPair> rejected;  // coupled pairs that fail separation
};

/// Existence of a chain whose pairs all pass modulus separation is decided
/// exactly: such a chain exists iff the graph of separated, nonzero edges is
/// connected, and the widest spanning tree of that graph is returned.
inline SeparatedChainSearch find_separated_chain(const EnsembleSpec& spec, int i0, int j0, int depth,
                                                 double tol = 1e-12, double separation_tol = 1e-12) {
  detail::check_chain_args(spec, i0, j0, depth);
  const auto& sys = spec.systems[i0];
  const auto& b0 = sys.couplings[j0];
  SeparatedChainSearch out;
  std::vector<detail::Edge> edges;
  for (int k = 0; k < depth; ++k) {
    for (int l = k + 1; l < depth; ++l) {
      if (std::abs(b0(k, l)) <= tol) continue;
      bool separated = true;
      for (int j = 0; j < sys.controls(); ++j)
        if (j != j0 && std::abs(std::abs(b0(k, l)) - std::abs(sys.couplings[j](k, l))) <= separation_tol)
          separated = false;
      if (separated)
        edges.push_back({{k, l}, std::abs(b0(k, l))});
      else
        out.rejected.push_back({k, l});
    }
  }
  detail::UnionFind uf(depth);
  for (const auto& e : edges) uf.unite(e.pair.k, e.pair.l);
  for (int k = 0; k < depth; ++k)
    if (uf.find(k) == uf.find(0)) ++out.reached_levels;
  if (auto tree = detail::widest_spanning_tree(std::move(edges), depth))
    out.chain = ConnectednessChain{i0, j0, depth, *tree};
  return out;
}

struct HypothesisOptions {
  int max_coeff = 100;
  double resonance_tol = 1e-9;
  long long budget = 50'000'000;
  double edge_tol = 1e-12;
  double separation_tol = 1e-12;
  double skew_tol = 1e-12;
};

/// Structural checks plus the controllability hypotheses at Galerkin depth
/// `depth`: non-resonance of the concatenated spectrum and, for every block,
/// a connectedness chain whose pairs separate that block's coupling moduli.
inline ValidationReport check_hypotheses(const EnsembleSpec& spec, int depth, const HypothesisOptions& opt = {}) {
  ValidationReport report = validate_spec(spec, opt.skew_tol);
  {
    std::vector<double> all;
    for (const auto& s : spec.systems) all.insert(all.end(), s.spectrum.begin(), s.spectrum.begin() + depth);
    const auto nr = check_nonresonance(all, opt.max_coeff, opt.resonance_tol, opt.budget);
    HypothesisCheck c{"nonresonance", nr.verdict, -1, -1, nr.relation, "", opt.resonance_tol};
    c.detail = "searched |q| <= " + std::to_string(nr.searched_coeff);
    report.checks.push_back(c);
  }
  for (int i = 0; i < spec.system_count(); ++i) {
    for (int j = 0; j < spec.systems[i].controls(); ++j) {
      const auto search = find_separated_chain(spec, i, j, depth, opt.edge_tol, opt.separation_tol);
      HypothesisCheck c{"separated_chain", Verdict::kPass, i, j, {}, "", opt.separation_tol};
      if (!search.chain) {
        c.verdict = Verdict::kFail;
        c.detail = "separated edges reach " + std::to_string(search.reached_levels) + " of " +
                   std::to_string(depth) + " levels";
        for (const auto& p : search.rejected) {
          c.witness.push_back(p.k + 1);
          c.witness.push_back(p.l + 1);
        }
      }
      report.checks.push_back(c);
    }
  }
  return report;
}

}  // namespace simtrack
