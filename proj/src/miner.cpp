#include "stlcal/miner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "stlcal/errors.hpp"
#include "stlcal/estimator.hpp"
#include "stlcal/exec.hpp"
#include "stlcal/rng.hpp"

namespace stlcal {

namespace {

// ---------------------------------------------------------------------------
// Logistic refit of (alpha, beta) on clipped robustness
// ---------------------------------------------------------------------------

struct LogisticFit {
  double a = 1.0;
  double b = 0.0;
  double nll = 0.0;        // pure NLL, reported as the loss
  double objective = 0.0;  // NLL plus the intercept ridge, used for ranking
};

double nll_of(const std::vector<double>& rho, const std::vector<int>& targets, double a,
              double b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double p = clip_prob(sigmoid(a * rho[i] + b));
    acc += targets[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
  }
  return acc / static_cast<double>(rho.size());
}

// Damped Newton on the 2-parameter logistic NLL, projected into the
// [-10, 10]^2 box. Separable data drives the slope to the box edge. The
// small ridge on the intercept keeps the decision boundary inside the
// threshold parameter: without it any mu is compensated by beta and mined
// thresholds lose their reading.
constexpr double kInterceptRidge = 1e-4;

LogisticFit logistic_refit(const std::vector<double>& rho, const std::vector<int>& targets) {
  const auto n = static_cast<double>(rho.size());
  double a = 0.0, b = 0.0;
  double cur = nll_of(rho, targets, a, b);  // b = 0, no ridge term yet
  for (int iter = 0; iter < 40; ++iter) {
    double ga = 0.0, gb = 0.0, haa = 0.0, hab = 0.0, hbb = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
      const double p = sigmoid(a * rho[i] + b);
      const double r = p - static_cast<double>(targets[i]);
      const double s = p * (1.0 - p);
      ga += r * rho[i];
      gb += r;
      haa += s * rho[i] * rho[i];
      hab += s * rho[i];
      hbb += s;
    }
    ga /= n; gb /= n; haa /= n; hab /= n; hbb /= n;
    gb += 2.0 * kInterceptRidge * b;
    haa += 1e-8;
    hbb += 1e-8 + 2.0 * kInterceptRidge;
    const double det = haa * hbb - hab * hab;
    double da, db;
    if (std::fabs(det) > 1e-14) {
      da = (hbb * ga - hab * gb) / det;
      db = (haa * gb - hab * ga) / det;
    } else {
      da = ga; db = gb;
    }
    const double norm = std::max(std::fabs(da), std::fabs(db));
    if (norm < 1e-11) break;
    if (norm > 8.0) { da *= 8.0 / norm; db *= 8.0 / norm; }

    // the objective is convex; backtrack until the step descends
    bool accepted = false;
    double scale = 1.0;
    for (int ls = 0; ls < 25; ++ls) {
      const double na = std::clamp(a - scale * da, -10.0, 10.0);
      const double nb = std::clamp(b - scale * db, -10.0, 10.0);
      const double next = nll_of(rho, targets, na, nb) + kInterceptRidge * nb * nb;
      if (next <= cur) {
        a = na;
        b = nb;
        cur = next;
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) break;
  }
  const double nll = nll_of(rho, targets, a, b);
  return {a, b, nll, nll + kInterceptRidge * b * b};
}

// ---------------------------------------------------------------------------
// Candidate scoring
// ---------------------------------------------------------------------------

std::vector<int> targets_for(const Dataset& data, Polarity objective) {
  std::vector<int> t(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    t[i] = objective == Polarity::Positive ? data[i].label : 1 - data[i].label;
  }
  return t;
}

std::vector<double> clipped_rho(const Formula& f, const ParamVector& pv,
                                const Dataset& data) {
  std::vector<double> rho(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    rho[i] = clip_rho(robustness_scalar(f, pv, data[i].signal));
  }
  return rho;
}

struct ScoredTheta {
  ParamVector pv;
  LogisticFit fit;
};

ScoredTheta score_theta(const Formula& f, const ParamVector& pv, const Dataset& train,
                        const std::vector<int>& targets) {
  ScoredTheta out{pv, {}};
  out.fit = logistic_refit(clipped_rho(f, pv, train), targets);
  return out;
}

// ---------------------------------------------------------------------------
// Slot-space projection and Nelder-Mead
// ---------------------------------------------------------------------------

void project_slots(const Formula& f, ParamVector& pv) {
  for (auto& e : pv.entries()) {
    const ParamRange r = range_of(e.role);
    const double lo = r.lo_open ? r.lo + 1e-6 : r.lo;
    e.value = std::clamp(e.value, lo, r.hi);
  }
  const ParamStructure st = param_structure(f);
  for (const auto& [a, b] : st.interval_pairs) {
    if (pv.value(a) > pv.value(b)) pv.set_value(a, pv.value(b));
  }
  for (const auto& [low, high] : st.ordered_pairs) {
    if (!(pv.value(low) < pv.value(high))) {
      const double hi = std::max(pv.value(high), 2e-9);
      pv.set_value(high, hi);
      pv.set_value(low, hi - 1e-9);
    }
  }
}

// Derivative-free refinement over the named slots; every evaluation projects
// into the feasible box and refits (alpha, beta).
ScoredTheta nelder_mead(const Formula& f, const ParamVector& start,
                        const std::vector<std::string>& slots, const Dataset& train,
                        const std::vector<int>& targets, int budget) {
  ScoredTheta best = score_theta(f, start, train, targets);
  if (slots.empty() || budget <= 0) return best;
  const std::size_t dim = slots.size();

  struct Vertex {
    std::vector<double> x;
    ScoredTheta scored;
  };
  auto eval = [&](const std::vector<double>& x) {
    ParamVector pv = start;
    for (std::size_t i = 0; i < dim; ++i) pv.set_value(slots[i], x[i]);
    project_slots(f, pv);
    return score_theta(f, pv, train, targets);
  };

  int evals = 0;
  std::vector<Vertex> simplex;
  {
    std::vector<double> x0(dim);
    for (std::size_t i = 0; i < dim; ++i) x0[i] = start.value(slots[i]);
    simplex.push_back({x0, best});
    for (std::size_t i = 0; i < dim && evals < budget; ++i) {
      std::vector<double> xi = x0;
      const ParamRange r = range_of(start.role(slots[i]));
      xi[i] += 0.1 * (r.hi - r.lo);
      auto scored = eval(xi);
      ++evals;
      simplex.push_back({std::move(xi), std::move(scored)});
    }
  }
  if (simplex.size() < 2) return best;

  auto value = [](const Vertex& v) { return v.scored.fit.objective; };
  while (evals < budget) {
    std::stable_sort(simplex.begin(), simplex.end(),
                     [&](const Vertex& a, const Vertex& b) { return value(a) < value(b); });
    const std::size_t worst = simplex.size() - 1;
    std::vector<double> centroid(dim, 0.0);
    for (std::size_t v = 0; v < worst; ++v) {
      for (std::size_t i = 0; i < dim; ++i) centroid[i] += simplex[v].x[i];
    }
    for (double& c : centroid) c /= static_cast<double>(worst);

    auto blend = [&](double coef) {
      std::vector<double> x(dim);
      for (std::size_t i = 0; i < dim; ++i) {
        x[i] = centroid[i] + coef * (simplex[worst].x[i] - centroid[i]);
      }
      return x;
    };

    const auto xr = blend(-1.0);
    auto fr = eval(xr);
    ++evals;
    if (fr.fit.objective < value(simplex[0])) {
      if (evals < budget) {
        const auto xe = blend(-2.0);
        auto fe = eval(xe);
        ++evals;
        simplex[worst] = fe.fit.objective < fr.fit.objective ? Vertex{xe, std::move(fe)}
                                                 : Vertex{xr, std::move(fr)};
      } else {
        simplex[worst] = {xr, std::move(fr)};
      }
    } else if (fr.fit.objective < value(simplex[worst - 1])) {
      simplex[worst] = {xr, std::move(fr)};
    } else {
      const auto xc = blend(0.5);
      auto fc = eval(xc);
      ++evals;
      if (fc.fit.objective < value(simplex[worst])) {
        simplex[worst] = {xc, std::move(fc)};
      } else {
        for (std::size_t v = 1; v < simplex.size() && evals < budget; ++v) {
          for (std::size_t i = 0; i < dim; ++i) {
            simplex[v].x[i] = 0.5 * (simplex[v].x[i] + simplex[0].x[i]);
          }
          simplex[v].scored = eval(simplex[v].x);
          ++evals;
        }
      }
    }
  }

  for (const auto& v : simplex) {
    if (value(v) < best.fit.objective) best = v.scored;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Pattern assembly
// ---------------------------------------------------------------------------

// A negative slope means the formula discriminates in the inverted
// direction; fold the sign into a Not wrapper so alpha stays in (0, 10].
void fold_negative_alpha(Formula& f, ParamVector& pv, LogisticFit& fit) {
  if (fit.a < 0.0) {
    Formula wrapped;
    wrapped.kind = Formula::Kind::Not;
    wrapped.children.push_back(std::move(f));
    f = std::move(wrapped);
    fit.a = -fit.a;
  }
  if (fit.a < 1e-6) fit.a = 1e-6;
  pv.set("alpha", fit.a, ParamRole::MapScale);
  pv.set("beta", fit.b, ParamRole::MapBias);
}

FittedPattern finalize_pattern(std::string name, Formula f, ScoredTheta scored,
                               Polarity objective, const Dataset& val,
                               const std::vector<int>& val_targets) {
  fold_negative_alpha(f, scored.pv, scored.fit);
  FittedPattern p;
  p.name = std::move(name);
  p.formula = std::move(f);
  p.theta = std::move(scored.pv);
  p.polarity = objective;
  p.train_loss = scored.fit.nll;
  // validation loss under the fitted mapping; the Not fold flips rho signs
  p.val_loss = nll_of(clipped_rho(p.formula, p.theta, val), val_targets,
                      p.theta.value("alpha"), p.theta.value("beta"));
  p.skeleton = canonical_skeleton(p.formula);
  return p;
}

FittedPattern fit_template_split(const TemplateSpec& tmpl, const Dataset& train,
                                 const Dataset& val, Polarity objective, int nm_budget) {
  if (!has_both_classes(train) || !has_both_classes(val)) {
    throw DegenerateData("template fitting needs both classes in train and val");
  }
  const auto targets = targets_for(train, objective);
  const auto val_targets = targets_for(val, objective);
  const GridContext ctx = make_grid_context(train);
  const auto grid = tmpl.grid(ctx);
  if (grid.empty()) throw DegenerateData("empty parameter grid for " + tmpl.name);

  struct GridResult {
    Formula f;
    ScoredTheta scored;
  };
  std::vector<GridResult> results(grid.size());
  for_each_index(grid.size(), [&](std::size_t g) {
    auto [f, pv] = tmpl.build(grid[g]);
    auto scored = score_theta(f, pv, train, targets);
    results[g] = {std::move(f), std::move(scored)};
  });

  std::size_t best = 0;
  for (std::size_t g = 1; g < results.size(); ++g) {
    const double cur = results[g].scored.fit.objective;
    const double ref = results[best].scored.fit.objective;
    if (cur < ref) {
      best = g;
    } else if (cur == ref) {
      // ties: fewer AST nodes, then lexicographic formula text
      const auto sz_cur = formula_size(results[g].f);
      const auto sz_ref = formula_size(results[best].f);
      if (sz_cur < sz_ref ||
          (sz_cur == sz_ref &&
           format_formula(results[g].f, results[g].scored.pv) <
               format_formula(results[best].f, results[best].scored.pv))) {
        best = g;
      }
    }
  }

  // slots that vary across the grid are the searched ones; the rest stay
  // frozen through refinement
  std::vector<std::string> nm_slots;
  for (const auto& e : results[best].scored.pv.entries()) {
    if (e.role == ParamRole::MapScale || e.role == ParamRole::MapBias) continue;
    bool varies = false;
    for (const auto& r : results) {
      if (r.scored.pv.value(e.name) != e.value) {
        varies = true;
        break;
      }
    }
    if (varies) nm_slots.push_back(e.name);
  }

  const Formula& f = results[best].f;
  ScoredTheta refined =
      nelder_mead(f, results[best].scored.pv, nm_slots, train, targets, nm_budget);
  if (!std::isfinite(refined.fit.nll)) throw OptError("non-finite loss for " + tmpl.name);
  return finalize_pattern(tmpl.name, f, std::move(refined), objective, val, val_targets);
}

FittedPattern refit_candidate(const Candidate& cand, const Dataset& train,
                              const Dataset& val, int nm_budget) {
  const auto targets = targets_for(train, cand.polarity);
  const auto val_targets = targets_for(val, cand.polarity);
  std::vector<std::string> slots;
  for (const auto& e : cand.theta.entries()) {
    if (e.role != ParamRole::MapScale && e.role != ParamRole::MapBias) {
      slots.push_back(e.name);
    }
  }
  ScoredTheta refined = nelder_mead(cand.formula, cand.theta, slots, train, targets, nm_budget);
  if (!std::isfinite(refined.fit.nll)) throw OptError("non-finite loss for " + cand.name);
  return finalize_pattern(cand.name, cand.formula, std::move(refined), cand.polarity, val,
                          val_targets);
}

}  // namespace

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

std::pair<Dataset, Dataset> split_train_val(const Dataset& data, double val_fraction,
                                            std::uint64_t seed) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed ^ 0x51f7u);
  rng.shuffle(idx);
  std::size_t n_val = static_cast<std::size_t>(val_fraction * static_cast<double>(data.size()));
  n_val = std::clamp<std::size_t>(n_val, 1, data.size() - 1);
  Dataset train, val;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    (i + n_val < idx.size() ? train : val).push_back(data[idx[i]]);
  }
  return {std::move(train), std::move(val)};
}

FittedPattern fit_template(const TemplateSpec& tmpl, const Dataset& data,
                           Polarity objective, std::uint64_t seed, double val_fraction,
                           int nm_budget) {
  if (!has_both_classes(data)) throw DegenerateData("single-class data");
  auto [train, val] = split_train_val(data, val_fraction, seed);
  return fit_template_split(tmpl, train, val, objective, nm_budget);
}

Dataset lift_signals(const Dataset& data, const std::vector<FittedPattern>& patterns) {
  if (patterns.empty()) return data;
  Dataset out = data;
  for_each_index(out.size(), [&](std::size_t i) {
    for (std::size_t j = 0; j < patterns.size(); ++j) {
      out[i].signal.lifted.emplace_back(
          "r" + std::to_string(j) + ":" + patterns[j].name,
          robustness_trace_fast(patterns[j].formula, patterns[j].theta, out[i].signal));
    }
  });
  return out;
}

std::vector<Candidate> compose_candidates(const std::vector<FittedPattern>& fitted,
                                          std::size_t beam) {
  if (beam < 1) throw DegenerateData("beam width must be >= 1");
  std::vector<const FittedPattern*> top;
  for (const auto& p : fitted) top.push_back(&p);
  std::stable_sort(top.begin(), top.end(), [](const FittedPattern* a, const FittedPattern* b) {
    if (a->val_loss != b->val_loss) return a->val_loss < b->val_loss;
    return a->name < b->name;
  });
  if (top.size() > beam) top.resize(beam);

  std::vector<Candidate> out;
  auto add = [&](std::string name, Formula f, ParamVector pv, Polarity pol) {
    canonicalize_params(f, pv);
    out.push_back({std::move(name), std::move(f), std::move(pv), pol});
  };

  // Temporal nesting over the satisfaction (r_j >= 0) and violation
  // (r_j <= 0) predicates of each pattern. Under robustness semantics those
  // are the pattern itself and its negation, so candidates inline the base
  // formula and stay self-contained.
  for (const FittedPattern* base : top) {
    for (const bool always : {true, false}) {
      for (const bool satisfied : {true, false}) {
        Formula inner = base->formula;
        if (!satisfied) {
          Formula neg;
          neg.kind = Formula::Kind::Not;
          neg.children.push_back(std::move(inner));
          inner = std::move(neg);
        }
        Formula nested;
        nested.kind = always ? Formula::Kind::Always : Formula::Kind::Eventually;
        nested.lo = "fresh_a";
        nested.hi = "fresh_b";
        nested.children.push_back(std::move(inner));
        ParamVector pv = base->theta;
        pv.set("fresh_a", 0.0, ParamRole::IntervalA);
        pv.set("fresh_b", 1.0, ParamRole::IntervalB);
        const std::string label = std::string(always ? "G(" : "F(") +
                                  (satisfied ? "" : "!") + base->name + ")";
        add(label, std::move(nested), std::move(pv), base->polarity);
      }
    }
  }

  // Pairwise boolean combinations within the polarity (i < j).
  for (std::size_t i = 0; i < top.size(); ++i) {
    for (std::size_t j = i + 1; j < top.size(); ++j) {
      for (const bool conj : {true, false}) {
        Formula combo;
        combo.kind = conj ? Formula::Kind::And : Formula::Kind::Or;
        combo.children.push_back(top[i]->formula);
        combo.children.push_back(top[j]->formula);
        // merge thetas under temporary unique names; canonicalize renames
        Formula lhs = combo.children[0];
        Formula rhs = combo.children[1];
        ParamVector merged;
        ParamVector lhs_pv = top[i]->theta;
        ParamVector rhs_pv = top[j]->theta;
        auto import = [&](Formula& node, ParamVector& src, const std::string& tag) {
          std::vector<Formula*> stack{&node};
          while (!stack.empty()) {
            Formula* cur = stack.back();
            stack.pop_back();
            auto retag = [&](std::string& name) {
              if (name.empty()) return;
              const std::string fresh = tag + name;
              merged.set(fresh, src.value(name), src.role(name));
              name = fresh;
            };
            retag(cur->threshold);
            retag(cur->window);
            retag(cur->margin);
            retag(cur->lo);
            retag(cur->hi);
            for (auto& c : cur->children) stack.push_back(&c);
          }
        };
        import(lhs, lhs_pv, "L.");
        import(rhs, rhs_pv, "R.");
        combo.children[0] = std::move(lhs);
        combo.children[1] = std::move(rhs);
        const std::string label = std::string(conj ? "and(" : "or(") + top[i]->name + "," +
                                  top[j]->name + ")";
        add(label, std::move(combo), std::move(merged), top[i]->polarity);
      }
    }
  }
  return out;
}

PatternSet mine(const Dataset& data, const MineConfig& config) {
  if (config.n_pos + config.n_neg == 0) throw DegenerateData("nothing to mine");
  if (!has_both_classes(data)) throw DegenerateData("single-class data");
  auto [train, val] = split_train_val(data, config.val_fraction, config.seed);
  if (!has_both_classes(train) || !has_both_classes(val)) {
    throw DegenerateData("split produced a single-class partition");
  }

  // Step 1: all catalog templates per polarity.
  std::vector<FittedPattern> pools[2];
  for (const Polarity pol : {Polarity::Positive, Polarity::Negative}) {
    const auto templates = list_templates(pol);
    auto& pool = pools[pol == Polarity::Positive ? 0 : 1];
    pool.resize(templates.size());
    for_each_index(templates.size(), [&](std::size_t k) {
      pool[k] = fit_template_split(templates[k], train, val, pol, config.nm_budget);
    });
  }

  // Steps 2-3: lift the top-K and refit the composed candidates.
  for (auto& pool : pools) {
    const auto candidates = compose_candidates(pool, config.beam);
    std::vector<FittedPattern> refit(candidates.size());
    for_each_index(candidates.size(), [&](std::size_t k) {
      refit[k] = refit_candidate(candidates[k], train, val, config.nm_budget);
    });
    pool.insert(pool.end(), refit.begin(), refit.end());
  }

  // Greedy forward selection on marginal ensemble validation NLL. Weight
  // logits are refit at every step from a warm start; a candidate whose refit
  // does not beat the muted configuration keeps the mute, so the ensemble
  // NLL never increases across steps.
  std::vector<int> val_labels(val.size());
  for (std::size_t i = 0; i < val.size(); ++i) val_labels[i] = val[i].label;

  auto contributions = [&](const FittedPattern& p) {
    std::vector<double> c(val.size());
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double rho = clip_rho(robustness_scalar(p.formula, p.theta, val[i].signal));
      const double prob = clip_prob(sigmoid(p.theta.value("alpha") * rho + p.theta.value("beta")));
      c[i] = p.polarity == Polarity::Positive ? prob : 1.0 - prob;
    }
    return c;
  };

  auto ensemble_nll = [&](const std::vector<std::vector<double>>& contrib,
                          const std::vector<double>& logits) {
    const auto w = softmax_weights(logits);
    double acc = 0.0;
    for (std::size_t i = 0; i < val.size(); ++i) {
      double P = 0.0;
      for (std::size_t k = 0; k < contrib.size(); ++k) P += w[k] * contrib[k][i];
      P = std::clamp(P, 1e-12, 1.0 - 1e-12);
      acc += val_labels[i] == 1 ? -std::log(P) : -std::log(1.0 - P);
    }
    return acc / static_cast<double>(val.size());
  };

  auto refit_logits = [&](const std::vector<std::vector<double>>& contrib,
                          std::vector<double> logits) {
    double lr = 0.25;
    double cur = ensemble_nll(contrib, logits);
    for (int epoch = 0; epoch < 150 && lr > 1e-10; ++epoch) {
      const auto w = softmax_weights(logits);
      std::vector<double> grad(logits.size(), 0.0);
      for (std::size_t i = 0; i < val.size(); ++i) {
        double P = 0.0;
        for (std::size_t k = 0; k < contrib.size(); ++k) P += w[k] * contrib[k][i];
        P = std::clamp(P, 1e-12, 1.0 - 1e-12);
        const double dP = (val_labels[i] == 1 ? -1.0 / P : 1.0 / (1.0 - P)) /
                          static_cast<double>(val.size());
        for (std::size_t k = 0; k < contrib.size(); ++k) {
          grad[k] += dP * w[k] * (contrib[k][i] - P);
        }
      }
      std::vector<double> trial = logits;
      for (std::size_t k = 0; k < trial.size(); ++k) trial[k] -= lr * grad[k];
      const double next = ensemble_nll(contrib, trial);
      if (std::isnan(next) || next > cur) {
        lr *= 0.5;
        continue;
      }
      lr = std::min(lr * 1.2, 1e3);
      logits = std::move(trial);
      cur = next;
    }
    // shift so the largest logit is zero; softmax is shift-invariant
    double m = logits[0];
    for (double l : logits) m = std::max(m, l);
    for (double& l : logits) l -= m;
    return std::make_pair(logits, cur);
  };

  std::vector<std::vector<double>> pool_contrib[2];
  for (int side = 0; side < 2; ++side) {
    for (const auto& p : pools[side]) pool_contrib[side].push_back(contributions(p));
  }

  PatternSet ps;
  ps.seed = config.seed;
  std::vector<std::vector<double>> selected_contrib;
  std::vector<double> logits;
  std::vector<bool> used[2] = {std::vector<bool>(pools[0].size(), false),
                               std::vector<bool>(pools[1].size(), false)};
  std::vector<std::pair<int, std::size_t>> picks;
  std::vector<double> selection_nll;

  const std::size_t quota[2] = {config.n_pos, config.n_neg};
  std::size_t taken[2] = {0, 0};
  // candidates compete on marginal validation NLL plus a small per-node
  // complexity charge, so a composition only displaces its base pattern when
  // the added structure genuinely pays
  constexpr double kSizePenalty = 1e-3;
  while (taken[0] < quota[0] || taken[1] < quota[1]) {
    int best_side = -1;
    std::size_t best_idx = 0;
    double best_nll = std::numeric_limits<double>::infinity();
    double best_score = std::numeric_limits<double>::infinity();
    std::vector<double> best_logits;
    for (int side = 0; side < 2; ++side) {
      if (taken[side] >= quota[side]) continue;
      for (std::size_t k = 0; k < pools[side].size(); ++k) {
        if (used[side][k]) continue;
        auto contrib = selected_contrib;
        contrib.push_back(pool_contrib[side][k]);
        std::vector<double> warm = logits;
        warm.push_back(selected_contrib.empty() ? 0.0 : -12.0);
        auto [fitted_logits, fitted_nll] = refit_logits(contrib, warm);
        if (!selected_contrib.empty()) {
          // fall back to muting the newcomer if the refit lost ground
          std::vector<double> muted = logits;
          muted.push_back(-30.0);
          const double muted_nll = ensemble_nll(contrib, muted);
          if (muted_nll < fitted_nll) {
            fitted_logits = std::move(muted);
            fitted_nll = muted_nll;
          }
        }
        const double score =
            fitted_nll +
            kSizePenalty * static_cast<double>(formula_size(pools[side][k].formula));
        if (score < best_score) {
          best_score = score;
          best_nll = fitted_nll;
          best_side = side;
          best_idx = k;
          best_logits = std::move(fitted_logits);
        }
      }
    }
    if (best_side < 0) break;
    used[best_side][best_idx] = true;
    selected_contrib.push_back(pool_contrib[best_side][best_idx]);
    logits = std::move(best_logits);
    picks.emplace_back(best_side, best_idx);
    selection_nll.push_back(best_nll);
    ++taken[best_side];
  }

  // assemble in pos-then-neg block order, keeping per-side pick order
  std::vector<double> ordered_logits;
  for (int side = 0; side < 2; ++side) {
    for (std::size_t p = 0; p < picks.size(); ++p) {
      if (picks[p].first != side) continue;
      auto& pattern = pools[side][picks[p].second];
      (side == 0 ? ps.pos : ps.neg).push_back(pattern);
      ordered_logits.push_back(logits[p]);
    }
  }
  ps.weight_logits = std::move(ordered_logits);

  // Final joint calibration of the mapping on the training split.
  FitMappingConfig map_cfg;
  map_cfg.seed = config.seed;
  fit_mapping(ps, train, map_cfg);

  ps.val_nll = mean_nll(predict_dataset(ps, val, Semantics::hard()), val_labels);
  ps.config = {{"n_pos", config.n_pos},
               {"n_neg", config.n_neg},
               {"K", config.beam},
               {"val_fraction", config.val_fraction},
               {"selection_nll", selection_nll}};
  return ps;
}

double jaccard_similarity(const PatternSet& a, const PatternSet& b, Polarity polarity) {
  auto skeletons = [&](const PatternSet& ps) {
    std::set<std::string> out;
    for (const auto& p : polarity == Polarity::Positive ? ps.pos : ps.neg) {
      out.insert(p.skeleton.empty() ? canonical_skeleton(p.formula) : p.skeleton);
    }
    return out;
  };
  const auto sa = skeletons(a);
  const auto sb = skeletons(b);
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& s : sa) inter += sb.count(s);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double param_variability(const std::vector<ParamVector>& vectors, ParamGroup group) {
  if (vectors.size() < 2) throw DegenerateData("need at least two parameter vectors");
  double acc = 0.0;
  std::size_t samples = 0;
  for (std::size_t p = 0; p < vectors.size(); ++p) {
    for (std::size_t q = p + 1; q < vectors.size(); ++q) {
      for (const auto& e : vectors[p].entries()) {
        if (group_of(e.role) != group) continue;
        if (!vectors[q].contains(e.name)) continue;
        acc += std::fabs(e.value - vectors[q].value(e.name));
        ++samples;
      }
    }
  }
  return samples == 0 ? 0.0 : acc / static_cast<double>(samples);
}

}  // namespace stlcal
