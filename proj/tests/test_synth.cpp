#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>

#include "doctest.h"
#include "stlcal/errors.hpp"
#include "stlcal/metrics.hpp"
#include "stlcal/stl.hpp"
#include "stlcal/synth.hpp"

using namespace stlcal;

namespace {

double oracle_auroc(const SynthResult& r) {
  auto [f, pv] = parse_formula(r.oracle_formula);
  std::vector<double> rho;
  std::vector<int> labels;
  for (const auto& inst : r.data) {
    rho.push_back(robustness_scalar(f, pv, inst.signal));
    // negative-polarity oracles rank the incorrect class high
    labels.push_back(r.oracle_polarity == "neg" ? 1 - inst.label : inst.label);
  }
  const auto a = auroc(rho, labels);
  REQUIRE(a.has_value());
  return *a;
}

}  // namespace

TEST_CASE("balanced classes and deterministic output") {
  const auto r = generate(Scenario::StableHigh, 100, 1);
  REQUIRE(r.data.size() == 100);
  std::size_t pos = 0;
  for (const auto& inst : r.data) pos += static_cast<std::size_t>(inst.label);
  CHECK(pos == 50);

  const auto again = generate(Scenario::StableHigh, 100, 1);
  for (std::size_t i = 0; i < r.data.size(); ++i) {
    CHECK(r.data[i].signal.values == again.data[i].signal.values);
    CHECK(r.data[i].label == again.data[i].label);
    CHECK(r.data[i].question == again.data[i].question);
  }

  const auto other_seed = generate(Scenario::StableHigh, 100, 2);
  bool any_diff = false;
  for (std::size_t i = 0; i < r.data.size(); ++i) {
    if (r.data[i].signal.values != other_seed.data[i].signal.values) any_diff = true;
  }
  CHECK(any_diff);

  CHECK_THROWS_AS(generate(Scenario::StableHigh, 1, 1), DegenerateData);
}

TEST_CASE("signal ranges and lengths") {
  for (const Scenario sc : {Scenario::StableHigh, Scenario::SharpDrop, Scenario::Oscillate,
                            Scenario::Gain, Scenario::InstanceThreshold}) {
    const auto r = generate(sc, 60, 5);
    for (const auto& inst : r.data) {
      CHECK(inst.signal.size() >= 6);
      CHECK(inst.signal.size() <= 14);
      for (double v : inst.signal.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
}

TEST_CASE("sharp_drop plants exactly one large drop in label-0 signals") {
  const auto r = generate(Scenario::SharpDrop, 200, 7);
  for (const auto& inst : r.data) {
    int big_drops = 0;
    for (std::size_t t = 1; t < inst.signal.size(); ++t) {
      if (inst.signal.diff[t] <= -0.4) ++big_drops;
    }
    if (inst.label == 0) {
      CHECK(big_drops == 1);
    } else {
      CHECK(big_drops == 0);
      for (std::size_t t = 1; t < inst.signal.size(); ++t) {
        CHECK(std::fabs(inst.signal.diff[t]) <= 0.1);
      }
    }
  }
}

TEST_CASE("each separable scenario ships a perfect oracle formula") {
  for (const Scenario sc :
       {Scenario::StableHigh, Scenario::SharpDrop, Scenario::Oscillate, Scenario::Gain}) {
    const auto r = generate(sc, 150, 11);
    REQUIRE(!r.oracle_formula.empty());
    INFO(scenario_name(sc));
    CHECK(oracle_auroc(r) == 1.0);
  }
}

TEST_CASE("gain scenario separates window means by at least 0.3") {
  const auto r = generate(Scenario::Gain, 100, 13);
  auto [f, pv] = parse_formula("(gain 0.5 0.0)");
  for (const auto& inst : r.data) {
    const double margin = robustness_scalar(f, pv, inst.signal);
    if (inst.label == 1) CHECK(margin >= 0.3);
  }
}

TEST_CASE("instance_threshold has per-question but no global separation") {
  const auto r = generate(Scenario::InstanceThreshold, 400, 3);
  CHECK(r.oracle_formula.empty());
  REQUIRE(r.instance_thresholds.size() == r.data.size());

  // the planted per-question threshold separates perfectly
  for (const auto& inst : r.data) {
    const double theta = r.instance_thresholds.at(inst.id);
    CHECK(theta >= 0.4);
    CHECK(theta <= 0.8);
    CHECK(theta == instance_threshold_for(inst.id));
    const double lo = *std::min_element(inst.signal.values.begin(), inst.signal.values.end());
    const double hi = *std::max_element(inst.signal.values.begin(), inst.signal.values.end());
    if (inst.label == 1) {
      CHECK(lo > theta);
    } else {
      CHECK(hi < theta);
    }
  }

  // no fixed level threshold gets close
  CHECK(fixed_threshold_auroc(r.data) < 0.9);

  // the id encoding is stable across seeds
  const auto r2 = generate(Scenario::InstanceThreshold, 400, 4);
  for (const auto& inst : r2.data) {
    CHECK(r.instance_thresholds.at(inst.id) == r2.instance_thresholds.at(inst.id));
  }
}

TEST_CASE("scenario names round trip") {
  for (const Scenario sc : {Scenario::StableHigh, Scenario::SharpDrop, Scenario::Oscillate,
                            Scenario::Gain, Scenario::InstanceThreshold}) {
    CHECK(scenario_from_name(scenario_name(sc)) == sc);
  }
  CHECK_THROWS_AS(scenario_from_name("nope"), SchemaError);
}
