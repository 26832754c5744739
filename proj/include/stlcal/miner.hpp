#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stlcal/catalog.hpp"
#include "stlcal/patterns.hpp"
#include "stlcal/trace.hpp"

namespace stlcal {

struct MineConfig {
  std::size_t n_pos = 5;
  std::size_t n_neg = 5;
  std::size_t beam = 8;  // candidates per polarity entering lifting/composition
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  int nm_budget = 200;  // Nelder-Mead evaluation cap per candidate
};

// Seeded shuffle, then the trailing fraction becomes the validation split.
std::pair<Dataset, Dataset> split_train_val(const Dataset& data, double val_fraction,
                                            std::uint64_t seed);

// Fits one primitive template under the class-appropriate NLL: coarse grid
// over the template's semantic parameters, Nelder-Mead refinement over the
// formula slots, and a 2-parameter logistic refit of (alpha, beta) at every
// candidate. A negative fitted slope is folded into a Not wrapper so alpha
// stays positive.
FittedPattern fit_template(const TemplateSpec& tmpl, const Dataset& data,
                           Polarity objective, std::uint64_t seed,
                           double val_fraction = 0.2, int nm_budget = 200);

// Appends one robustness-trace channel per pattern (r0, r1, ... in pattern
// order) to every instance's signal.
Dataset lift_signals(const Dataset& data, const std::vector<FittedPattern>& patterns);

// Structural composition candidates built from the top-K fitted patterns:
// temporal nesting of G/F over each pattern's satisfaction/violation
// predicate, plus pairwise conjunctions and disjunctions within the polarity.
struct Candidate {
  std::string name;
  Formula formula;
  ParamVector theta;
  Polarity polarity;
};

std::vector<Candidate> compose_candidates(const std::vector<FittedPattern>& fitted,
                                          std::size_t beam);

// Full dual-class mining: Step 1 template fitting, Step 2/3 composition over
// the top-K, refit of every candidate, then greedy forward selection of
// n_pos + n_neg patterns by marginal ensemble validation NLL, followed by the
// joint mapping fit. Deterministic given (data, config).
PatternSet mine(const Dataset& data, const MineConfig& config);

// Jaccard index over canonical skeletons of one polarity; 1.0 when both
// sides are empty.
double jaccard_similarity(const PatternSet& a, const PatternSet& b, Polarity polarity);

// Mean absolute pairwise difference of the parameters in one group across a
// collection of parameter vectors.
double param_variability(const std::vector<ParamVector>& vectors, ParamGroup group);

}  // namespace stlcal
