#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stlcal/trace.hpp"

namespace stlcal {

enum class Scenario { StableHigh, SharpDrop, Oscillate, Gain, InstanceThreshold };

Scenario scenario_from_name(const std::string& name);
std::string scenario_name(Scenario s);

struct SynthResult {
  Dataset data;
  // Planted separating formula in grammar text; empty for the
  // instance-threshold scenario, which has no global oracle. High robustness
  // indicates the correct class for "pos" polarity and the incorrect class
  // for "neg".
  std::string oracle_formula;
  std::string oracle_polarity;
  // Per-question separating level for the instance-threshold scenario.
  std::map<std::string, double> instance_thresholds;
};

// Seeded generator. Classes are balanced, labels are decided before noise and
// noise is truncated so it never crosses the separating margin; signal
// lengths are uniform in [6, 14].
SynthResult generate(Scenario scenario, std::size_t n_instances, std::uint64_t seed);

// Deterministic 16-bit hash behind the instance-threshold scenario:
// theta = 0.4 + 0.4 * h(id)/65535.
double instance_threshold_for(const std::string& id);

// Ranking AUROC of a "min over steps" score, i.e. the best any fixed level
// threshold can do; the instance-threshold scenario keeps this below 0.9.
double fixed_threshold_auroc(const Dataset& data);

}  // namespace stlcal
