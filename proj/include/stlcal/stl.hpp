#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "stlcal/trace.hpp"

namespace stlcal {

// ---------------------------------------------------------------------------
// Formula AST and parameters
// ---------------------------------------------------------------------------
//
// Fragment: predicates over the signal channels, negation, binary and/or, and
// the bounded temporal operators Always (G) and Eventually (F). Temporal
// bounds are stored as fractions of the signal length so one formula applies
// to traces of any length. All numerals live in a companion ParamVector; the
// AST only holds parameter names.

enum class Cmp { Ge, Le };

enum class AggKind { VarLe, Gain, Loss };

struct ChannelRef {
  enum class Kind { Base, Diff, Lifted };
  Kind kind = Kind::Base;
  int index = -1;  // lifted channel number, -1 otherwise
};

enum class ParamRole {
  ThresholdS,      // level threshold on the base signal, [0, 1]
  ThresholdD,      // threshold on the difference channel, [-0.5, 0.5]
  ThresholdLifted, // threshold on a lifted robustness channel, [-2, 2]
  VarBound,        // variance bound nu, [0, 0.25]
  WindowFrac,      // gain/loss window fraction w, (0, 0.5]
  Margin,          // gain/loss margin eps, [0, 0.5]
  IntervalA,       // temporal lower bound fraction, [0, 1]
  IntervalB,       // temporal upper bound fraction, [0, 1]
  MapScale,        // sigmoid mapping alpha, (0, 10]
  MapBias,         // sigmoid mapping beta, [-10, 10]
};

// Grouping used by the parameter-variability analysis.
enum class ParamGroup { Time, Threshold, Difference, None };

ParamGroup group_of(ParamRole role);

struct ParamRange {
  double lo;
  double hi;
  bool lo_open = false;
};

ParamRange range_of(ParamRole role);

double midpoint_of(ParamRole role);

struct Formula {
  enum class Kind { Pred, Agg, Not, And, Or, Always, Eventually };
  Kind kind = Kind::Pred;

  // Pred
  ChannelRef channel;
  Cmp cmp = Cmp::Ge;
  std::string threshold;

  // Agg
  AggKind agg = AggKind::VarLe;
  std::string window;  // gain/loss only
  std::string margin;  // eps for gain/loss, nu for varle

  // Always / Eventually
  std::string lo;
  std::string hi;

  std::vector<Formula> children;
};

struct ParamEntry {
  std::string name;
  double value = 0.0;
  ParamRole role = ParamRole::ThresholdS;
};

// Ordered name -> (value, role) map. Insertion order is the canonical slot
// order used by serialization and by the hypernetwork heads.
class ParamVector {
 public:
  void set(const std::string& name, double value, ParamRole role);
  void set_value(const std::string& name, double value);
  double value(const std::string& name) const;
  ParamRole role(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;  // throws ParamError

  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<ParamEntry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<ParamEntry> entries_;
};

// Structural view of a formula's parameters: temporal (a, b) pairs, the
// low/high threshold pairs of recovery-shaped conjunctions, and everything
// else as free singles.
struct ParamStructure {
  std::vector<std::pair<std::string, std::string>> interval_pairs;
  std::vector<std::pair<std::string, std::string>> ordered_pairs;
  std::vector<std::string> singles;
};

ParamStructure param_structure(const Formula& f);

// Range and pair-constraint check; throws ParamError on violation.
void validate(const Formula& f, const ParamVector& params);

// Renames every slot to the canonical pre-order scheme (mu0, dmu0, a0/b0,
// ...) and rewrites the vector accordingly. Mapping entries (alpha/beta) are
// preserved at the end.
void canonicalize_params(Formula& f, ParamVector& params);

std::size_t formula_size(const Formula& f);

// ---------------------------------------------------------------------------
// Grammar
// ---------------------------------------------------------------------------
//
//   f  := (ge CH x) | (le CH x) | (varle x) | (gain w x) | (loss w x)
//       | (not f) | (and f f) | (or f f) | (G a b f) | (F a b f)
//   CH := s | d | rK
//
// parse assigns canonical slot names in pre-order; format is deterministic
// and round-trips bytes on canonical forms.

std::pair<Formula, ParamVector> parse_formula(const std::string& text);

std::string format_formula(const Formula& f, const ParamVector& params);

// Serialization with numerals replaced by '?'. Equal skeletons mean equal
// tree shape, operators, channels and comparators.
std::string canonical_skeleton(const Formula& f);

// Shortest decimal representation that round-trips and contains a '.'.
std::string format_double(double v);

// ---------------------------------------------------------------------------
// Robustness
// ---------------------------------------------------------------------------

// Maps fractional temporal bounds onto step indices of a length-n signal:
// start = floor(a*(n-1)), end = floor(b*(n-1)).
std::pair<std::size_t, std::size_t> resolve_interval(double a, double b, std::size_t n);

double robustness_at(const Formula& f, const ParamVector& params,
                     const ConfidenceSignal& s, std::size_t t);

double robustness_scalar(const Formula& f, const ParamVector& params,
                         const ConfidenceSignal& s);

// Reference per-step evaluation (loops robustness_at).
std::vector<double> robustness_trace(const Formula& f, const ParamVector& params,
                                     const ConfidenceSignal& s);

// Bottom-up evaluation with O(n) sliding-window min/max. Bit-identical to
// robustness_trace; this is the path the batch kernels use.
std::vector<double> robustness_trace_fast(const Formula& f, const ParamVector& params,
                                          const ConfidenceSignal& s);

// Smoothed semantics: min/max replaced by the stabilized log-sum-exp softmin
// and softmax at temperature tau.
double soft_robustness_at(const Formula& f, const ParamVector& params,
                          const ConfidenceSignal& s, std::size_t t, double tau);

double soft_robustness(const Formula& f, const ParamVector& params,
                       const ConfidenceSignal& s, double tau);

// Soft value plus analytic gradient w.r.t. every ParamVector slot (aligned
// with entry order). Interval and window-fraction slots resolve to discrete
// indices, so their entries are zero.
std::pair<double, std::vector<double>> soft_robustness_grad(
    const Formula& f, const ParamVector& params, const ConfidenceSignal& s,
    double tau);

double softmin(const std::vector<double>& xs, double tau);
double softmax_val(const std::vector<double>& xs, double tau);

}  // namespace stlcal
