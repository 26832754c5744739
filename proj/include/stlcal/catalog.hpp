#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stlcal/stl.hpp"
#include "stlcal/trace.hpp"

namespace stlcal {

enum class Polarity { Positive, Negative };

inline const char* polarity_name(Polarity p) {
  return p == Polarity::Positive ? "pos" : "neg";
}

// Data-driven grid inputs: thresholds search the deciles of the pooled
// training signal, drop margins the deciles of |diff|, variance bounds the
// deciles of per-instance variance.
struct GridContext {
  std::vector<double> level_grid;
  std::vector<double> drop_grid;
  std::vector<double> var_grid;
  std::vector<double> window_grid{0.1, 0.25, 0.5};
};

GridContext make_grid_context(const Dataset& data);

// One primitive template: a named formula shape, its polarity, and the coarse
// search grid over its semantic parameters.
struct TemplateSpec {
  std::string name;
  Polarity polarity;
  std::vector<std::string> semantic_params;
  std::function<std::vector<std::map<std::string, double>>(const GridContext&)> grid;
  std::function<std::pair<Formula, ParamVector>(const std::map<std::string, double>&)> build;
};

// The twelve tabulated primitives (six per polarity).
std::vector<TemplateSpec> list_templates(std::optional<Polarity> polarity = std::nullopt);

const TemplateSpec& template_by_name(const std::string& name);

// Builds a template's formula from semantic parameter values. Throws
// ParamError on unknown names, missing values or range/order violations.
std::pair<Formula, ParamVector> instantiate(const std::string& name,
                                            const std::map<std::string, double>& theta);

// Atomic predicate table backing the templates.
struct PredicateDescriptor {
  std::string category;  // Level, Deviation, Derivative, Aggregate
  std::string form;
};

std::vector<PredicateDescriptor> atomic_predicates();

// Deviation predicates (s_t >= mean - k*sigma) are materialized per instance
// as a plain level predicate at mean - k*sigma, clamped into [0, 1].
std::pair<Formula, ParamVector> materialize_deviation(const ConfidenceSignal& s, double k);

}  // namespace stlcal
