#pragma once

// Shared test helpers: an independent brute-force robustness oracle, a
// Boolean-semantics oracle, and seeded random formula/signal generators.
// The oracles share only the AST type with the library; interval
// resolution, window enumeration and the aggregate margins are recomputed
// here from their definitions.

#include <cmath>
#include <string>
#include <vector>

#include "stlcal/errors.hpp"
#include "stlcal/rng.hpp"
#include "stlcal/stl.hpp"
#include "stlcal/trace.hpp"

namespace stlcal::testing {

inline double oracle_channel(const ConfidenceSignal& s, const ChannelRef& ch, std::size_t t) {
  switch (ch.kind) {
    case ChannelRef::Kind::Base: return s.values[t];
    case ChannelRef::Kind::Diff: return s.diff[t];
    case ChannelRef::Kind::Lifted: return s.lifted.at(static_cast<std::size_t>(ch.index)).second[t];
  }
  return 0.0;
}

inline double oracle_agg(const Formula& f, const ParamVector& pv, const ConfidenceSignal& s) {
  const std::size_t n = s.size();
  if (f.agg == AggKind::VarLe) {
    double mean = 0.0;
    for (double v : s.values) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : s.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    return pv.value(f.margin) - var;
  }
  auto m = static_cast<std::size_t>(std::ceil(pv.value(f.window) * static_cast<double>(n)));
  if (m < 1) m = 1;
  if (m > n) m = n;
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < m; ++i) head += s.values[i];
  for (std::size_t i = n - m; i < n; ++i) tail += s.values[i];
  head /= static_cast<double>(m);
  tail /= static_cast<double>(m);
  const double eps = pv.value(f.margin);
  return f.agg == AggKind::Gain ? tail - head - eps : head - tail - eps;
}

// Direct recursive definition with explicit window enumeration.
inline double oracle_robustness(const Formula& f, const ParamVector& pv,
                                const ConfidenceSignal& s, std::size_t t) {
  switch (f.kind) {
    case Formula::Kind::Pred: {
      const double v = oracle_channel(s, f.channel, t);
      const double c = pv.value(f.threshold);
      return f.cmp == Cmp::Ge ? v - c : c - v;
    }
    case Formula::Kind::Agg:
      return oracle_agg(f, pv, s);
    case Formula::Kind::Not:
      return -oracle_robustness(f.children[0], pv, s, t);
    case Formula::Kind::And: {
      const double a = oracle_robustness(f.children[0], pv, s, t);
      const double b = oracle_robustness(f.children[1], pv, s, t);
      return a < b ? a : b;
    }
    case Formula::Kind::Or: {
      const double a = oracle_robustness(f.children[0], pv, s, t);
      const double b = oracle_robustness(f.children[1], pv, s, t);
      return a > b ? a : b;
    }
    case Formula::Kind::Always:
    case Formula::Kind::Eventually: {
      const std::size_t n = s.size();
      const auto start = static_cast<std::size_t>(
          std::floor(pv.value(f.lo) * static_cast<double>(n - 1)));
      const auto end = static_cast<std::size_t>(
          std::floor(pv.value(f.hi) * static_cast<double>(n - 1)));
      std::size_t lo = t + start;
      std::size_t hi = t + end;
      if (lo > n - 1) lo = n - 1;
      if (hi > n - 1) hi = n - 1;
      double acc = oracle_robustness(f.children[0], pv, s, lo);
      for (std::size_t k = lo + 1; k <= hi; ++k) {
        const double v = oracle_robustness(f.children[0], pv, s, k);
        if (f.kind == Formula::Kind::Always ? v < acc : v > acc) acc = v;
      }
      return acc;
    }
  }
  return 0.0;
}

// Boolean semantics with closed comparisons, for sign-soundness checks.
inline bool oracle_satisfied(const Formula& f, const ParamVector& pv,
                             const ConfidenceSignal& s, std::size_t t) {
  switch (f.kind) {
    case Formula::Kind::Pred: {
      const double v = oracle_channel(s, f.channel, t);
      const double c = pv.value(f.threshold);
      return f.cmp == Cmp::Ge ? v >= c : v <= c;
    }
    case Formula::Kind::Agg:
      return oracle_agg(f, pv, s) >= 0.0;
    case Formula::Kind::Not:
      return !oracle_satisfied(f.children[0], pv, s, t);
    case Formula::Kind::And:
      return oracle_satisfied(f.children[0], pv, s, t) &&
             oracle_satisfied(f.children[1], pv, s, t);
    case Formula::Kind::Or:
      return oracle_satisfied(f.children[0], pv, s, t) ||
             oracle_satisfied(f.children[1], pv, s, t);
    case Formula::Kind::Always:
    case Formula::Kind::Eventually: {
      const std::size_t n = s.size();
      const auto start = static_cast<std::size_t>(
          std::floor(pv.value(f.lo) * static_cast<double>(n - 1)));
      const auto end = static_cast<std::size_t>(
          std::floor(pv.value(f.hi) * static_cast<double>(n - 1)));
      std::size_t lo = t + start;
      std::size_t hi = t + end;
      if (lo > n - 1) lo = n - 1;
      if (hi > n - 1) hi = n - 1;
      for (std::size_t k = lo; k <= hi; ++k) {
        const bool sat = oracle_satisfied(f.children[0], pv, s, k);
        if (f.kind == Formula::Kind::Always && !sat) return false;
        if (f.kind == Formula::Kind::Eventually && sat) return true;
      }
      return f.kind == Formula::Kind::Always;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Random generators
// ---------------------------------------------------------------------------

struct GenOptions {
  int max_depth = 3;        // AST levels including the predicate leaf
  int n_lifted = 0;         // lifted channels available
  bool allow_not = true;
  bool allow_agg = true;
  bool temporal_only_ops = false;  // restrict internals to G/F (pure min/max stacks)
};

inline std::string gen_formula_text(Rng& rng, const GenOptions& opt, int depth) {
  auto num = [&](double lo, double hi) { return format_double(rng.uniform(lo, hi)); };
  auto channel = [&]() -> std::string {
    const double u = rng.uniform();
    if (opt.n_lifted > 0 && u < 0.2) {
      return "r" + std::to_string(rng.index(static_cast<std::size_t>(opt.n_lifted)));
    }
    return u < 0.6 ? "s" : "d";
  };
  auto leaf = [&]() -> std::string {
    const std::size_t pick = rng.index(opt.allow_agg ? 5 : 2);
    switch (pick) {
      case 0:
      case 1: {
        const std::string ch = channel();
        const std::string cmp = rng.uniform() < 0.5 ? "ge" : "le";
        std::string x;
        if (ch == "s") {
          x = num(0.0, 1.0);
        } else if (ch == "d") {
          x = num(-0.5, 0.5);
        } else {
          x = num(-2.0, 2.0);
        }
        return "(" + cmp + " " + ch + " " + x + ")";
      }
      case 2: return "(varle " + num(0.0, 0.25) + ")";
      case 3: return "(gain " + num(0.05, 0.5) + " " + num(0.0, 0.5) + ")";
      default: return "(loss " + num(0.05, 0.5) + " " + num(0.0, 0.5) + ")";
    }
  };
  if (depth <= 1) return leaf();
  const std::size_t n_kinds = opt.temporal_only_ops ? 3 : (opt.allow_not ? 6 : 5);
  switch (rng.index(n_kinds)) {
    case 0:
      return leaf();
    case 1:
    case 2: {
      const double a = rng.uniform();
      const double b = a + (1.0 - a) * rng.uniform();
      const std::string op = rng.uniform() < 0.5 ? "G" : "F";
      return "(" + op + " " + format_double(a) + " " + format_double(b) + " " +
             gen_formula_text(rng, opt, depth - 1) + ")";
    }
    case 3:
    case 4: {
      const std::string op = rng.uniform() < 0.5 ? "and" : "or";
      return "(" + op + " " + gen_formula_text(rng, opt, depth - 1) + " " +
             gen_formula_text(rng, opt, depth - 1) + ")";
    }
    default:
      return "(not " + gen_formula_text(rng, opt, depth - 1) + ")";
  }
}

inline std::pair<Formula, ParamVector> gen_formula(Rng& rng, const GenOptions& opt) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    // depth uniform in [1, max] so shallow shapes stay well represented
    const int depth = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(opt.max_depth)));
    const std::string text = gen_formula_text(rng, opt, depth);
    try {
      return parse_formula(text);
    } catch (const ParamError&) {
      // a random conjunction hit the recovery-shape low<high constraint
      continue;
    }
  }
  return parse_formula("(ge s 0.5)");
}

inline ConfidenceSignal gen_signal(Rng& rng, std::size_t max_len, int n_lifted) {
  const std::size_t n = 1 + rng.index(max_len);
  std::vector<double> values(n);
  for (auto& v : values) v = rng.uniform();
  ConfidenceSignal s = ConfidenceSignal::from_values(std::move(values));
  for (int c = 0; c < n_lifted; ++c) {
    std::vector<double> chan(n);
    for (auto& v : chan) v = rng.uniform(-1.0, 1.0);
    s.lifted.emplace_back("r" + std::to_string(c), std::move(chan));
  }
  return s;
}

}  // namespace stlcal::testing
