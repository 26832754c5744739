#include "stlcal/synth.hpp"

#include <algorithm>
#include <cmath>

#include "stlcal/errors.hpp"
#include "stlcal/metrics.hpp"
#include "stlcal/rng.hpp"

namespace stlcal {

Scenario scenario_from_name(const std::string& name) {
  if (name == "stable_high") return Scenario::StableHigh;
  if (name == "sharp_drop") return Scenario::SharpDrop;
  if (name == "oscillate") return Scenario::Oscillate;
  if (name == "gain") return Scenario::Gain;
  if (name == "instance_threshold") return Scenario::InstanceThreshold;
  throw SchemaError("unknown scenario: " + name);
}

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::StableHigh: return "stable_high";
    case Scenario::SharpDrop: return "sharp_drop";
    case Scenario::Oscillate: return "oscillate";
    case Scenario::Gain: return "gain";
    case Scenario::InstanceThreshold: return "instance_threshold";
  }
  return "?";
}

double instance_threshold_for(const std::string& id) {
  const std::uint64_t h16 = fnv1a("itq-" + id) & 0xFFFFull;
  return 0.4 + 0.4 * static_cast<double>(h16) / 65535.0;
}

namespace {

constexpr std::size_t kMinLen = 6;
constexpr std::size_t kMaxLen = 14;

std::size_t draw_len(Rng& rng) {
  return kMinLen + rng.index(kMaxLen - kMinLen + 1);
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

std::vector<double> stable_high_signal(Rng& rng, std::size_t n, bool with_dip) {
  const double base = rng.uniform(0.7, 0.95);
  std::vector<double> s(n);
  for (auto& v : s) v = clamp01(base + rng.truncated_normal(0.03));
  if (with_dip) {
    const std::size_t pos = rng.index(n);
    s[pos] = rng.uniform(0.02, 0.12);
  }
  return s;
}

std::vector<double> sharp_drop_signal(Rng& rng, std::size_t n, bool with_drop) {
  std::vector<double> s(n);
  if (!with_drop) {
    s[0] = rng.uniform(0.5, 0.85);
    for (std::size_t t = 1; t < n; ++t) {
      s[t] = std::clamp(s[t - 1] + rng.uniform(-0.09, 0.09), 0.05, 0.95);
    }
    return s;
  }
  const std::size_t drop_at = 1 + rng.index(n - 1);
  s[0] = rng.uniform(0.6, 0.9);
  for (std::size_t t = 1; t < n; ++t) {
    if (t < drop_at) {
      s[t] = std::clamp(s[t - 1] + rng.uniform(-0.08, 0.08), 0.57, 0.95);
    } else if (t == drop_at) {
      s[t] = s[t - 1] - rng.uniform(0.42, 0.55);  // the single planted drop
    } else {
      s[t] = std::clamp(s[t - 1] + rng.uniform(-0.08, 0.08), 0.02, 0.95);
    }
  }
  return s;
}

std::vector<double> oscillate_signal(Rng& rng, std::size_t n, bool oscillating) {
  std::vector<double> s(n);
  if (oscillating) {
    const double amp = rng.uniform(0.18, 0.3);
    for (std::size_t t = 0; t < n; ++t) {
      const double swing = (t % 2 == 0) ? amp : -amp;
      s[t] = clamp01(0.5 + swing + rng.truncated_normal(0.01));
    }
  } else {
    const double base = rng.uniform(0.45, 0.75);
    for (auto& v : s) v = clamp01(base + rng.truncated_normal(0.02));
  }
  return s;
}

std::vector<double> gain_signal(Rng& rng, std::size_t n, bool gaining) {
  std::vector<double> s(n);
  if (gaining) {
    const double lo = rng.uniform(0.1, 0.3);
    const double hi = lo + rng.uniform(0.42, 0.55);
    for (std::size_t t = 0; t < n; ++t) {
      const double level = (t < n / 2) ? lo : hi;
      s[t] = clamp01(level + rng.truncated_normal(0.015));
    }
  } else if (rng.uniform() < 0.5) {
    const double base = rng.uniform(0.25, 0.75);
    for (auto& v : s) v = clamp01(base + rng.truncated_normal(0.015));
  } else {
    const double hi = rng.uniform(0.55, 0.85);
    const double lo = hi - rng.uniform(0.42, 0.55);
    for (std::size_t t = 0; t < n; ++t) {
      const double level = (t < n / 2) ? hi : lo;
      s[t] = clamp01(level + rng.truncated_normal(0.015));
    }
  }
  return s;
}

// theta encoded as eight base-4 digit tokens so a hashed bag-of-words can
// recover it linearly.
std::string threshold_question(const std::string& id) {
  const std::uint64_t h16 = fnv1a("itq-" + id) & 0xFFFFull;
  std::string q = "threshold probe";
  for (int pos = 0; pos < 8; ++pos) {
    const auto digit = (h16 >> (2 * (7 - pos))) & 0x3ull;
    q += " d" + std::to_string(pos) + "v" + std::to_string(digit);
  }
  return q;
}

std::vector<double> instance_threshold_signal(Rng& rng, std::size_t n, double theta,
                                              bool above) {
  // band offset 0.03..0.11 from theta, noise truncated at 0.024 < margin
  const double offset = 0.03 + 0.08 * rng.uniform();
  const double level = above ? std::min(theta + offset, 0.97) : std::max(theta - offset, 0.03);
  std::vector<double> s(n);
  for (auto& v : s) v = clamp01(level + rng.truncated_normal(0.008));
  return s;
}

}  // namespace

SynthResult generate(Scenario scenario, std::size_t n_instances, std::uint64_t seed) {
  if (n_instances < 2) throw DegenerateData("need at least two instances");
  Rng rng(seed ^ 0x5e11c0defull);

  SynthResult out;
  out.data.reserve(n_instances);
  const std::string task = scenario_name(scenario);

  for (std::size_t i = 0; i < n_instances; ++i) {
    LabeledInstance inst;
    inst.id = task + "-" + std::to_string(i);
    inst.task = task;
    inst.label = (i % 2 == 0) ? 1 : 0;
    const std::size_t n = draw_len(rng);

    std::vector<double> values;
    switch (scenario) {
      case Scenario::StableHigh:
        inst.question = "stability check " + std::to_string(i);
        values = stable_high_signal(rng, n, inst.label == 0);
        break;
      case Scenario::SharpDrop:
        inst.question = "drop check " + std::to_string(i);
        values = sharp_drop_signal(rng, n, inst.label == 0);
        break;
      case Scenario::Oscillate:
        inst.question = "oscillation check " + std::to_string(i);
        values = oscillate_signal(rng, n, inst.label == 0);
        break;
      case Scenario::Gain:
        inst.question = "gain check " + std::to_string(i);
        values = gain_signal(rng, n, inst.label == 1);
        break;
      case Scenario::InstanceThreshold: {
        inst.question = threshold_question(inst.id);
        const double theta = instance_threshold_for(inst.id);
        values = instance_threshold_signal(rng, n, theta, inst.label == 1);
        out.instance_thresholds[inst.id] = theta;
        break;
      }
    }
    inst.signal = ConfidenceSignal::from_values(std::move(values));
    out.data.push_back(std::move(inst));
  }

  out.oracle_polarity = "pos";
  switch (scenario) {
    case Scenario::StableHigh: out.oracle_formula = "(G 0.0 1.0 (ge s 0.45))"; break;
    case Scenario::SharpDrop:
      out.oracle_formula = "(F 0.0 1.0 (le d -0.25))";
      out.oracle_polarity = "neg";
      break;
    case Scenario::Oscillate: out.oracle_formula = "(varle 0.012)"; break;
    case Scenario::Gain: out.oracle_formula = "(gain 0.5 0.2)"; break;
    case Scenario::InstanceThreshold: {
      out.oracle_formula.clear();
      // the planted per-instance threshold must separate perfectly while no
      // fixed one comes close
      for (const auto& inst : out.data) {
        const double theta = out.instance_thresholds.at(inst.id);
        const double lo = *std::min_element(inst.signal.values.begin(), inst.signal.values.end());
        const double hi = *std::max_element(inst.signal.values.begin(), inst.signal.values.end());
        const bool ok = inst.label == 1 ? (lo > theta) : (hi < theta);
        if (!ok) throw OptError("instance-threshold construction violated its margin");
      }
      if (fixed_threshold_auroc(out.data) >= 0.9) {
        throw OptError("instance-threshold scenario is globally separable");
      }
      break;
    }
  }
  return out;
}

double fixed_threshold_auroc(const Dataset& data) {
  std::vector<double> score;
  std::vector<int> labels;
  score.reserve(data.size());
  for (const auto& inst : data) {
    score.push_back(*std::min_element(inst.signal.values.begin(), inst.signal.values.end()));
    labels.push_back(inst.label);
  }
  const auto a = auroc(score, labels);
  return a ? *a : 0.5;
}

}  // namespace stlcal
