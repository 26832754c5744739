#include "stlcal/catalog.hpp"

#include <algorithm>
#include <cmath>

#include "stlcal/errors.hpp"

namespace stlcal {

namespace {

std::vector<double> quantile_grid(std::vector<double> xs, double lo_clamp, double hi_clamp) {
  if (xs.empty()) return {0.5 * (lo_clamp + hi_clamp)};
  std::sort(xs.begin(), xs.end());
  std::vector<double> grid;
  for (int i = 1; i <= 9; ++i) {
    const double q = 0.1 * i;
    const double idx = q * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(idx));
    const auto hi = static_cast<std::size_t>(std::ceil(idx));
    double v = xs[lo] + (idx - std::floor(idx)) * (xs[hi] - xs[lo]);
    v = std::clamp(v, lo_clamp, hi_clamp);
    grid.push_back(v);
  }
  grid.push_back(std::clamp(xs.back(), lo_clamp, hi_clamp));
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

double require(const std::map<std::string, double>& theta, const std::string& key) {
  auto it = theta.find(key);
  if (it == theta.end()) throw ParamError("template parameter missing: " + key);
  return it->second;
}

std::pair<Formula, ParamVector> build_text(const std::string& text) {
  return parse_formula(text);
}

using Theta = std::map<std::string, double>;
using ThetaGrid = std::vector<Theta>;

ThetaGrid cross(const std::vector<std::pair<std::string, std::vector<double>>>& axes) {
  ThetaGrid grid{{}};
  for (const auto& [name, values] : axes) {
    ThetaGrid next;
    for (const auto& partial : grid) {
      for (double v : values) {
        Theta t = partial;
        t[name] = v;
        next.push_back(t);
      }
    }
    grid = std::move(next);
  }
  return grid;
}

std::vector<TemplateSpec> build_catalog() {
  std::vector<TemplateSpec> cat;

  // -- positive -------------------------------------------------------------

  cat.push_back({"WeakestLink",
                 Polarity::Positive,
                 {"mu"},
                 [](const GridContext& g) { return cross({{"mu", g.level_grid}}); },
                 [](const Theta& th) {
                   return build_text("(G 0.0 1.0 (ge s " + format_double(require(th, "mu")) + "))");
                 }});

  cat.push_back({"EndHigh",
                 Polarity::Positive,
                 {"mu", "k"},
                 [](const GridContext& g) {
                   return cross({{"mu", g.level_grid}, {"k", g.window_grid}});
                 },
                 [](const Theta& th) {
                   return build_text("(G " + format_double(1.0 - require(th, "k")) +
                                     " 1.0 (ge s " + format_double(require(th, "mu")) + "))");
                 }});

  cat.push_back({"StartHigh",
                 Polarity::Positive,
                 {"mu", "k"},
                 [](const GridContext& g) {
                   return cross({{"mu", g.level_grid}, {"k", g.window_grid}});
                 },
                 [](const Theta& th) {
                   return build_text("(G 0.0 " + format_double(require(th, "k")) +
                                     " (ge s " + format_double(require(th, "mu")) + "))");
                 }});

  cat.push_back({"NeverSharpDrop",
                 Polarity::Positive,
                 {"eps"},
                 [](const GridContext& g) { return cross({{"eps", g.drop_grid}}); },
                 [](const Theta& th) {
                   return build_text("(G 0.0 1.0 (ge d " +
                                     format_double(-require(th, "eps")) + "))");
                 }});

  cat.push_back({"ConfidenceGain",
                 Polarity::Positive,
                 {"w", "eps"},
                 [](const GridContext& g) {
                   return cross({{"w", g.window_grid}, {"eps", g.drop_grid}});
                 },
                 [](const Theta& th) {
                   return build_text("(gain " + format_double(require(th, "w")) + " " +
                                     format_double(require(th, "eps")) + ")");
                 }});

  cat.push_back({"LowVarOverall",
                 Polarity::Positive,
                 {"nu"},
                 [](const GridContext& g) { return cross({{"nu", g.var_grid}}); },
                 [](const Theta& th) {
                   return build_text("(varle " + format_double(require(th, "nu")) + ")");
                 }});

  // -- negative -------------------------------------------------------------

  cat.push_back({"EventuallyLow",
                 Polarity::Negative,
                 {"mu"},
                 [](const GridContext& g) { return cross({{"mu", g.level_grid}}); },
                 [](const Theta& th) {
                   return build_text("(F 0.0 1.0 (le s " + format_double(require(th, "mu")) + "))");
                 }});

  cat.push_back({"EndLow",
                 Polarity::Negative,
                 {"mu", "k"},
                 [](const GridContext& g) {
                   return cross({{"mu", g.level_grid}, {"k", g.window_grid}});
                 },
                 [](const Theta& th) {
                   return build_text("(F " + format_double(1.0 - require(th, "k")) +
                                     " 1.0 (le s " + format_double(require(th, "mu")) + "))");
                 }});

  cat.push_back({"ConfidenceLoss",
                 Polarity::Negative,
                 {"w", "eps"},
                 [](const GridContext& g) {
                   return cross({{"w", g.window_grid}, {"eps", g.drop_grid}});
                 },
                 [](const Theta& th) {
                   return build_text("(loss " + format_double(require(th, "w")) + " " +
                                     format_double(require(th, "eps")) + ")");
                 }});

  cat.push_back({"SharpDrop",
                 Polarity::Negative,
                 {"eps"},
                 [](const GridContext& g) { return cross({{"eps", g.drop_grid}}); },
                 [](const Theta& th) {
                   return build_text("(F 0.0 1.0 (le d " +
                                     format_double(-require(th, "eps")) + "))");
                 }});

  cat.push_back({"FinalDecline",
                 Polarity::Negative,
                 {"k"},
                 [](const GridContext& g) { return cross({{"k", g.window_grid}}); },
                 [](const Theta& th) {
                   return build_text("(G " + format_double(1.0 - require(th, "k")) +
                                     " 1.0 (le d 0.0))");
                 }});

  cat.push_back({"Recovery",
                 Polarity::Negative,
                 {"mu_low", "mu_high"},
                 [](const GridContext& g) {
                   ThetaGrid grid;
                   for (double lo : g.level_grid) {
                     for (double hi : g.level_grid) {
                       if (lo < hi) grid.push_back({{"mu_low", lo}, {"mu_high", hi}});
                     }
                   }
                   return grid;
                 },
                 [](const Theta& th) {
                   const double lo = require(th, "mu_low");
                   const double hi = require(th, "mu_high");
                   if (!(lo < hi)) throw ParamError("Recovery requires mu_low < mu_high");
                   return build_text("(and (F 0.0 1.0 (le s " + format_double(lo) +
                                     ")) (F 0.0 1.0 (ge s " + format_double(hi) + ")))");
                 }});

  return cat;
}

const std::vector<TemplateSpec>& catalog() {
  static const std::vector<TemplateSpec> cat = build_catalog();
  return cat;
}

}  // namespace

GridContext make_grid_context(const Dataset& data) {
  std::vector<double> levels;
  std::vector<double> drops;
  std::vector<double> vars;
  for (const auto& inst : data) {
    const auto& s = inst.signal;
    levels.insert(levels.end(), s.values.begin(), s.values.end());
    for (std::size_t t = 1; t < s.diff.size(); ++t) drops.push_back(std::fabs(s.diff[t]));
    double mean = 0.0;
    for (double v : s.values) mean += v;
    mean /= static_cast<double>(s.size());
    double var = 0.0;
    for (double v : s.values) var += (v - mean) * (v - mean);
    vars.push_back(var / static_cast<double>(s.size()));
  }
  GridContext g;
  g.level_grid = quantile_grid(std::move(levels), 0.0, 1.0);
  g.drop_grid = quantile_grid(std::move(drops), 0.0, 0.5);
  g.var_grid = quantile_grid(std::move(vars), 0.0, 0.25);
  return g;
}

std::vector<TemplateSpec> list_templates(std::optional<Polarity> polarity) {
  std::vector<TemplateSpec> out;
  for (const auto& t : catalog()) {
    if (!polarity || t.polarity == *polarity) out.push_back(t);
  }
  return out;
}

const TemplateSpec& template_by_name(const std::string& name) {
  for (const auto& t : catalog()) {
    if (t.name == name) return t;
  }
  throw ParamError("unknown template: " + name);
}

std::pair<Formula, ParamVector> instantiate(const std::string& name,
                                            const std::map<std::string, double>& theta) {
  return template_by_name(name).build(theta);
}

std::vector<PredicateDescriptor> atomic_predicates() {
  return {
      {"Level", "(ge s mu)"},
      {"Level", "(le s mu)"},
      {"Deviation", "(ge s mean-k*sigma)"},
      {"Derivative", "(ge d -eps)"},
      {"Derivative", "(le d -eps)"},
      {"Derivative", "(le d 0)"},
      {"Aggregate", "(varle nu)"},
      {"Aggregate", "(gain w eps)"},
  };
}

std::pair<Formula, ParamVector> materialize_deviation(const ConfidenceSignal& s, double k) {
  double mean = 0.0;
  for (double v : s.values) mean += v;
  mean /= static_cast<double>(s.size());
  double var = 0.0;
  for (double v : s.values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(s.size());
  const double level = std::clamp(mean - k * std::sqrt(var), 0.0, 1.0);
  return parse_formula("(ge s " + format_double(level) + ")");
}

}  // namespace stlcal
