#include "stlcal/stl.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <sstream>

#include "stlcal/errors.hpp"

namespace stlcal {

// ---------------------------------------------------------------------------
// Parameter metadata
// ---------------------------------------------------------------------------

ParamGroup group_of(ParamRole role) {
  switch (role) {
    case ParamRole::IntervalA:
    case ParamRole::IntervalB:
    case ParamRole::WindowFrac:
      return ParamGroup::Time;
    case ParamRole::ThresholdS:
    case ParamRole::ThresholdLifted:
    case ParamRole::VarBound:
      return ParamGroup::Threshold;
    case ParamRole::ThresholdD:
    case ParamRole::Margin:
      return ParamGroup::Difference;
    case ParamRole::MapScale:
    case ParamRole::MapBias:
      return ParamGroup::None;
  }
  return ParamGroup::None;
}

ParamRange range_of(ParamRole role) {
  switch (role) {
    case ParamRole::ThresholdS: return {0.0, 1.0};
    case ParamRole::ThresholdD: return {-0.5, 0.5};
    case ParamRole::ThresholdLifted: return {-2.0, 2.0};
    case ParamRole::VarBound: return {0.0, 0.25};
    case ParamRole::WindowFrac: return {0.0, 0.5, true};
    case ParamRole::Margin: return {0.0, 0.5};
    case ParamRole::IntervalA: return {0.0, 1.0};
    case ParamRole::IntervalB: return {0.0, 1.0};
    case ParamRole::MapScale: return {0.0, 10.0, true};
    case ParamRole::MapBias: return {-10.0, 10.0};
  }
  return {0.0, 1.0};
}

double midpoint_of(ParamRole role) {
  const ParamRange r = range_of(role);
  return 0.5 * (r.lo + r.hi);
}

void ParamVector::set(const std::string& name, double value, ParamRole role) {
  for (auto& e : entries_) {
    if (e.name == name) {
      e.value = value;
      e.role = role;
      return;
    }
  }
  entries_.push_back({name, value, role});
}

void ParamVector::set_value(const std::string& name, double value) {
  for (auto& e : entries_) {
    if (e.name == name) {
      e.value = value;
      return;
    }
  }
  throw ParamError("unbound parameter: " + name);
}

double ParamVector::value(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.value;
  }
  throw ParamError("unbound parameter: " + name);
}

ParamRole ParamVector::role(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.role;
  }
  throw ParamError("unbound parameter: " + name);
}

bool ParamVector::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

std::size_t ParamVector::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw ParamError("unbound parameter: " + name);
}

// ---------------------------------------------------------------------------
// Structure, validation, canonicalization
// ---------------------------------------------------------------------------

namespace {

bool is_eventually_pred(const Formula& f, Cmp cmp, const std::string** threshold) {
  if (f.kind != Formula::Kind::Eventually) return false;
  const Formula& c = f.children.front();
  if (c.kind != Formula::Kind::Pred || c.channel.kind != ChannelRef::Kind::Base) return false;
  if (c.cmp != cmp) return false;
  *threshold = &c.threshold;
  return true;
}

void collect_structure(const Formula& f, ParamStructure& out) {
  switch (f.kind) {
    case Formula::Kind::Pred:
      out.singles.push_back(f.threshold);
      break;
    case Formula::Kind::Agg:
      if (f.agg != AggKind::VarLe) out.singles.push_back(f.window);
      out.singles.push_back(f.margin);
      break;
    case Formula::Kind::Not:
      collect_structure(f.children[0], out);
      break;
    case Formula::Kind::And:
    case Formula::Kind::Or: {
      // Recovery shape: a conjunction of "eventually below" and "eventually
      // above" on the base signal carries the ordered low < high constraint.
      const std::string* low = nullptr;
      const std::string* high = nullptr;
      if (f.kind == Formula::Kind::And &&
          ((is_eventually_pred(f.children[0], Cmp::Le, &low) &&
            is_eventually_pred(f.children[1], Cmp::Ge, &high)) ||
           (is_eventually_pred(f.children[1], Cmp::Le, &low) &&
            is_eventually_pred(f.children[0], Cmp::Ge, &high)))) {
        out.ordered_pairs.emplace_back(*low, *high);
        for (const auto& child : f.children) {
          out.interval_pairs.emplace_back(child.lo, child.hi);
        }
        break;
      }
      collect_structure(f.children[0], out);
      collect_structure(f.children[1], out);
      break;
    }
    case Formula::Kind::Always:
    case Formula::Kind::Eventually:
      out.interval_pairs.emplace_back(f.lo, f.hi);
      collect_structure(f.children[0], out);
      break;
  }
}

}  // namespace

ParamStructure param_structure(const Formula& f) {
  ParamStructure out;
  collect_structure(f, out);
  return out;
}

void validate(const Formula& f, const ParamVector& params) {
  // arity / range walk
  std::vector<const Formula*> stack{&f};
  while (!stack.empty()) {
    const Formula* node = stack.back();
    stack.pop_back();
    auto check = [&](const std::string& name) {
      const double v = params.value(name);
      const ParamRange r = range_of(params.role(name));
      const bool lo_ok = r.lo_open ? (v > r.lo) : (v >= r.lo);
      if (!lo_ok || v > r.hi) {
        throw ParamError("parameter " + name + " = " + format_double(v) +
                         " outside its range");
      }
    };
    switch (node->kind) {
      case Formula::Kind::Pred:
        check(node->threshold);
        break;
      case Formula::Kind::Agg:
        if (node->agg != AggKind::VarLe) check(node->window);
        check(node->margin);
        break;
      case Formula::Kind::Not:
        if (node->children.size() != 1) throw ParamError("not takes one child");
        break;
      case Formula::Kind::And:
      case Formula::Kind::Or:
        if (node->children.size() != 2) throw ParamError("and/or take two children");
        break;
      case Formula::Kind::Always:
      case Formula::Kind::Eventually:
        if (node->children.size() != 1) throw ParamError("temporal ops take one child");
        check(node->lo);
        check(node->hi);
        break;
    }
    for (const auto& c : node->children) stack.push_back(&c);
  }

  const ParamStructure st = param_structure(f);
  for (const auto& [a, b] : st.interval_pairs) {
    if (params.value(a) > params.value(b)) {
      throw ParamError("interval bounds violate a <= b: " + a + " > " + b);
    }
  }
  for (const auto& [low, high] : st.ordered_pairs) {
    if (!(params.value(low) < params.value(high))) {
      throw ParamError("recovery thresholds violate low < high");
    }
  }
}

namespace {

struct NameCounters {
  std::map<std::string, int> counts;
  std::string fresh(const std::string& prefix) {
    const int k = counts[prefix]++;
    return prefix + std::to_string(k);
  }
};

std::string prefix_for(ParamRole role) {
  switch (role) {
    case ParamRole::ThresholdS: return "mu";
    case ParamRole::ThresholdD: return "dmu";
    case ParamRole::ThresholdLifted: return "rmu";
    case ParamRole::VarBound: return "nu";
    case ParamRole::WindowFrac: return "w";
    case ParamRole::Margin: return "eps";
    case ParamRole::IntervalA: return "a";
    case ParamRole::IntervalB: return "b";
    case ParamRole::MapScale: return "alpha";
    case ParamRole::MapBias: return "beta";
  }
  return "p";
}

ParamRole threshold_role(const ChannelRef& ch) {
  switch (ch.kind) {
    case ChannelRef::Kind::Base: return ParamRole::ThresholdS;
    case ChannelRef::Kind::Diff: return ParamRole::ThresholdD;
    case ChannelRef::Kind::Lifted: return ParamRole::ThresholdLifted;
  }
  return ParamRole::ThresholdS;
}

void rename_walk(Formula& f, const ParamVector& old, ParamVector& fresh,
                 NameCounters& counters) {
  auto move_slot = [&](std::string& name, ParamRole role) {
    const double v = old.value(name);
    name = counters.fresh(prefix_for(role));
    fresh.set(name, v, role);
  };
  switch (f.kind) {
    case Formula::Kind::Pred:
      move_slot(f.threshold, threshold_role(f.channel));
      break;
    case Formula::Kind::Agg:
      if (f.agg != AggKind::VarLe) move_slot(f.window, ParamRole::WindowFrac);
      move_slot(f.margin, f.agg == AggKind::VarLe ? ParamRole::VarBound : ParamRole::Margin);
      break;
    case Formula::Kind::Always:
    case Formula::Kind::Eventually: {
      // a/b share one counter so pairs line up as a0/b0, a1/b1, ...
      const int k = counters.counts["ab"]++;
      const double av = old.value(f.lo);
      const double bv = old.value(f.hi);
      f.lo = "a" + std::to_string(k);
      f.hi = "b" + std::to_string(k);
      fresh.set(f.lo, av, ParamRole::IntervalA);
      fresh.set(f.hi, bv, ParamRole::IntervalB);
      break;
    }
    default:
      break;
  }
  for (auto& c : f.children) rename_walk(c, old, fresh, counters);
}

}  // namespace

void canonicalize_params(Formula& f, ParamVector& params) {
  NameCounters counters;
  ParamVector fresh;
  rename_walk(f, params, fresh, counters);
  if (params.contains("alpha")) {
    fresh.set("alpha", params.value("alpha"), ParamRole::MapScale);
  }
  if (params.contains("beta")) {
    fresh.set("beta", params.value("beta"), ParamRole::MapBias);
  }
  params = std::move(fresh);
}

std::size_t formula_size(const Formula& f) {
  std::size_t n = 1;
  for (const auto& c : f.children) n += formula_size(c);
  return n;
}

// ---------------------------------------------------------------------------
// Number formatting
// ---------------------------------------------------------------------------

std::string format_double(double v) {
  if (v == 0.0) return "0.0";  // collapses -0.0 as well
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  if (s.find('e') == std::string::npos && s.find('E') == std::string::npos) {
    if (s.find('.') == std::string::npos) s += ".0";
    return s;
  }
  // Shortest representation used an exponent; the grammar wants plain
  // decimals, so find the shortest fixed form that still round-trips.
  for (int prec = 1; prec <= 40; ++prec) {
    auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, prec);
    std::string fixed(buf, r.ptr);
    double back = 0.0;
    std::from_chars(fixed.data(), fixed.data() + fixed.size(), back);
    if (back == v) {
      if (fixed.find('.') == std::string::npos) fixed += ".0";
      return fixed;
    }
  }
  std::snprintf(buf, sizeof(buf), "%.40f", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace {

struct Parser {
  const std::string& text;
  std::size_t pos = 0;
  NameCounters counters;
  ParamVector params;

  explicit Parser(const std::string& t) : text(t) {}

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  [[noreturn]] void fail(const std::string& msg, std::size_t at) {
    throw ParseError(msg, at);
  }

  void expect(char c) {
    skip_ws();
    if (pos >= text.size() || text[pos] != c) {
      fail(std::string("expected '") + c + "'", pos);
    }
    ++pos;
  }

  std::string atom() {
    skip_ws();
    const std::size_t start = pos;
    while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos])) &&
           text[pos] != '(' && text[pos] != ')') {
      ++pos;
    }
    if (start == pos) fail("expected an atom", start);
    return text.substr(start, pos - start);
  }

  double numeral() {
    skip_ws();
    const std::size_t at = pos;
    const std::string tok = atom();
    std::size_t i = 0;
    if (i < tok.size() && tok[i] == '-') ++i;
    std::size_t digits = 0;
    while (i < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i]))) ++i, ++digits;
    if (i < tok.size() && tok[i] == '.') {
      ++i;
      while (i < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i]))) ++i, ++digits;
    }
    if (digits == 0 || i != tok.size()) fail("expected a decimal numeral", at);
    double v = 0.0;
    auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (r.ec != std::errc()) fail("unparsable numeral", at);
    return v;
  }

  ChannelRef channel() {
    skip_ws();
    const std::size_t at = pos;
    const std::string tok = atom();
    if (tok == "s") return {ChannelRef::Kind::Base, -1};
    if (tok == "d") return {ChannelRef::Kind::Diff, -1};
    if (tok.size() >= 2 && tok[0] == 'r') {
      int idx = 0;
      auto r = std::from_chars(tok.data() + 1, tok.data() + tok.size(), idx);
      if (r.ec == std::errc() && r.ptr == tok.data() + tok.size() && idx >= 0) {
        return {ChannelRef::Kind::Lifted, idx};
      }
    }
    fail("expected a channel (s, d or rK)", at);
  }

  std::string bind(double v, ParamRole role) {
    const std::string name = role == ParamRole::IntervalA   ? "a" + std::to_string(counters.counts["ab"])
                             : role == ParamRole::IntervalB ? "b" + std::to_string(counters.counts["ab"]++)
                                                            : counters.fresh(prefix_for(role));
    params.set(name, v, role);
    return name;
  }

  Formula expr() {
    expect('(');
    skip_ws();
    const std::size_t at = pos;
    const std::string head = atom();
    Formula f;
    if (head == "ge" || head == "le") {
      f.kind = Formula::Kind::Pred;
      f.cmp = head == "ge" ? Cmp::Ge : Cmp::Le;
      f.channel = channel();
      f.threshold = bind(numeral(), threshold_role(f.channel));
    } else if (head == "varle") {
      f.kind = Formula::Kind::Agg;
      f.agg = AggKind::VarLe;
      f.margin = bind(numeral(), ParamRole::VarBound);
    } else if (head == "gain" || head == "loss") {
      f.kind = Formula::Kind::Agg;
      f.agg = head == "gain" ? AggKind::Gain : AggKind::Loss;
      f.window = bind(numeral(), ParamRole::WindowFrac);
      f.margin = bind(numeral(), ParamRole::Margin);
    } else if (head == "not") {
      f.kind = Formula::Kind::Not;
      f.children.push_back(expr());
    } else if (head == "and" || head == "or") {
      f.kind = head == "and" ? Formula::Kind::And : Formula::Kind::Or;
      f.children.push_back(expr());
      f.children.push_back(expr());
    } else if (head == "G" || head == "F") {
      f.kind = head == "G" ? Formula::Kind::Always : Formula::Kind::Eventually;
      f.lo = bind(numeral(), ParamRole::IntervalA);
      f.hi = bind(numeral(), ParamRole::IntervalB);
      f.children.push_back(expr());
    } else {
      fail("unknown operator '" + head + "'", at);
    }
    expect(')');
    return f;
  }
};

}  // namespace

std::pair<Formula, ParamVector> parse_formula(const std::string& text) {
  Parser p(text);
  Formula f = p.expr();
  p.skip_ws();
  if (p.pos != text.size()) p.fail("trailing input after formula", p.pos);
  validate(f, p.params);
  return {std::move(f), std::move(p.params)};
}

namespace {

void format_walk(const Formula& f, const ParamVector& pv, std::string& out,
                 bool skeleton) {
  auto num = [&](const std::string& name) {
    return skeleton ? std::string("?") : format_double(pv.value(name));
  };
  auto chan = [&]() {
    switch (f.channel.kind) {
      case ChannelRef::Kind::Base: return std::string("s");
      case ChannelRef::Kind::Diff: return std::string("d");
      case ChannelRef::Kind::Lifted: return "r" + std::to_string(f.channel.index);
    }
    return std::string("s");
  };
  switch (f.kind) {
    case Formula::Kind::Pred:
      out += "(" + std::string(f.cmp == Cmp::Ge ? "ge" : "le") + " " + chan() + " " +
             num(f.threshold) + ")";
      break;
    case Formula::Kind::Agg:
      if (f.agg == AggKind::VarLe) {
        out += "(varle " + num(f.margin) + ")";
      } else {
        out += "(" + std::string(f.agg == AggKind::Gain ? "gain" : "loss") + " " +
               num(f.window) + " " + num(f.margin) + ")";
      }
      break;
    case Formula::Kind::Not:
      out += "(not ";
      format_walk(f.children[0], pv, out, skeleton);
      out += ")";
      break;
    case Formula::Kind::And:
    case Formula::Kind::Or:
      out += f.kind == Formula::Kind::And ? "(and " : "(or ";
      format_walk(f.children[0], pv, out, skeleton);
      out += " ";
      format_walk(f.children[1], pv, out, skeleton);
      out += ")";
      break;
    case Formula::Kind::Always:
    case Formula::Kind::Eventually:
      out += f.kind == Formula::Kind::Always ? "(G " : "(F ";
      out += num(f.lo) + " " + num(f.hi) + " ";
      format_walk(f.children[0], pv, out, skeleton);
      out += ")";
      break;
  }
}

}  // namespace

std::string format_formula(const Formula& f, const ParamVector& params) {
  std::string out;
  format_walk(f, params, out, false);
  return out;
}

std::string canonical_skeleton(const Formula& f) {
  std::string out;
  ParamVector dummy;
  format_walk(f, dummy, out, true);
  return out;
}

// ---------------------------------------------------------------------------
// Hard semantics
// ---------------------------------------------------------------------------

std::pair<std::size_t, std::size_t> resolve_interval(double a, double b, std::size_t n) {
  const double span = static_cast<double>(n - 1);
  const auto start = static_cast<std::size_t>(std::floor(a * span));
  const auto end = static_cast<std::size_t>(std::floor(b * span));
  return {start, end};
}

namespace {

double channel_value(const ConfidenceSignal& s, const ChannelRef& ch, std::size_t t) {
  switch (ch.kind) {
    case ChannelRef::Kind::Base: return s.values[t];
    case ChannelRef::Kind::Diff: return s.diff[t];
    case ChannelRef::Kind::Lifted:
      if (ch.index < 0 || static_cast<std::size_t>(ch.index) >= s.lifted.size()) {
        throw IndexError("lifted channel r" + std::to_string(ch.index) + " not present");
      }
      return s.lifted[static_cast<std::size_t>(ch.index)].second[t];
  }
  return 0.0;
}

double population_variance(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(xs.size());
}

std::size_t agg_window_steps(double w, std::size_t n) {
  auto m = static_cast<std::size_t>(std::ceil(w * static_cast<double>(n)));
  if (m < 1) m = 1;
  if (m > n) m = n;
  return m;
}

double window_mean(const std::vector<double>& xs, std::size_t begin, std::size_t count) {
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) sum += xs[begin + i];
  return sum / static_cast<double>(count);
}

// Aggregate predicates are time-invariant margins over the base values.
double agg_robustness(const Formula& f, const ParamVector& pv, const ConfidenceSignal& s) {
  const std::size_t n = s.size();
  switch (f.agg) {
    case AggKind::VarLe:
      return pv.value(f.margin) - population_variance(s.values);
    case AggKind::Gain: {
      const std::size_t m = agg_window_steps(pv.value(f.window), n);
      return window_mean(s.values, n - m, m) - window_mean(s.values, 0, m) -
             pv.value(f.margin);
    }
    case AggKind::Loss: {
      const std::size_t m = agg_window_steps(pv.value(f.window), n);
      return window_mean(s.values, 0, m) - window_mean(s.values, n - m, m) -
             pv.value(f.margin);
    }
  }
  return 0.0;
}

std::pair<std::size_t, std::size_t> window_at(const Formula& f, const ParamVector& pv,
                                              std::size_t n, std::size_t t) {
  const auto [start, end] = resolve_interval(pv.value(f.lo), pv.value(f.hi), n);
  std::size_t lo = t + start;
  std::size_t hi = t + end;
  if (lo > n - 1) lo = n - 1;  // clamp; windows past the end never go empty
  if (hi > n - 1) hi = n - 1;
  return {lo, hi};
}

double rob_at(const Formula& f, const ParamVector& pv, const ConfidenceSignal& s,
              std::size_t t) {
  switch (f.kind) {
    case Formula::Kind::Pred: {
      const double v = channel_value(s, f.channel, t);
      const double c = pv.value(f.threshold);
      return f.cmp == Cmp::Ge ? v - c : c - v;
    }
    case Formula::Kind::Agg:
      return agg_robustness(f, pv, s);
    case Formula::Kind::Not:
      return -rob_at(f.children[0], pv, s, t);
    case Formula::Kind::And:
      return std::min(rob_at(f.children[0], pv, s, t), rob_at(f.children[1], pv, s, t));
    case Formula::Kind::Or:
      return std::max(rob_at(f.children[0], pv, s, t), rob_at(f.children[1], pv, s, t));
    case Formula::Kind::Always:
    case Formula::Kind::Eventually: {
      const auto [lo, hi] = window_at(f, pv, s.size(), t);
      double acc = rob_at(f.children[0], pv, s, lo);
      for (std::size_t k = lo + 1; k <= hi; ++k) {
        const double v = rob_at(f.children[0], pv, s, k);
        acc = f.kind == Formula::Kind::Always ? std::min(acc, v) : std::max(acc, v);
      }
      return acc;
    }
  }
  return 0.0;
}

}  // namespace

double robustness_at(const Formula& f, const ParamVector& params,
                     const ConfidenceSignal& s, std::size_t t) {
  if (t >= s.size()) {
    throw IndexError("step " + std::to_string(t) + " out of range for signal of length " +
                     std::to_string(s.size()));
  }
  return rob_at(f, params, s, t);
}

double robustness_scalar(const Formula& f, const ParamVector& params,
                         const ConfidenceSignal& s) {
  return robustness_at(f, params, s, 0);
}

std::vector<double> robustness_trace(const Formula& f, const ParamVector& params,
                                     const ConfidenceSignal& s) {
  std::vector<double> out(s.size());
  for (std::size_t t = 0; t < s.size(); ++t) out[t] = robustness_at(f, params, s, t);
  return out;
}

namespace {

// Sliding min/max over [t + start, t + end] clamped to n-1, via a monotonic
// deque scanned right to left. Both window edges shrink monotonically as t
// decreases, so stale candidates only ever leave through the front.
std::vector<double> sliding_extreme(const std::vector<double>& xs, std::size_t start,
                                    std::size_t end, bool take_min) {
  const std::size_t n = xs.size();
  std::vector<double> out(n);
  std::deque<std::size_t> dq;   // candidate indices, extreme value at front
  std::size_t next_push = n;    // smallest index pushed so far
  auto dominates = [&](double a, double b) { return take_min ? a <= b : a >= b; };
  for (std::size_t t = n; t-- > 0;) {
    std::size_t lo = t + start, hi = t + end;
    if (lo > n - 1) lo = n - 1;
    if (hi > n - 1) hi = n - 1;
    while (next_push > lo) {
      --next_push;
      while (!dq.empty() && dominates(xs[next_push], xs[dq.back()])) dq.pop_back();
      dq.push_back(next_push);
    }
    while (dq.front() > hi) dq.pop_front();
    out[t] = xs[dq.front()];
  }
  return out;
}

std::vector<double> trace_walk(const Formula& f, const ParamVector& pv,
                               const ConfidenceSignal& s) {
  const std::size_t n = s.size();
  std::vector<double> out(n);
  switch (f.kind) {
    case Formula::Kind::Pred: {
      const double c = pv.value(f.threshold);
      for (std::size_t t = 0; t < n; ++t) {
        const double v = channel_value(s, f.channel, t);
        out[t] = f.cmp == Cmp::Ge ? v - c : c - v;
      }
      return out;
    }
    case Formula::Kind::Agg: {
      const double v = agg_robustness(f, pv, s);
      std::fill(out.begin(), out.end(), v);
      return out;
    }
    case Formula::Kind::Not: {
      out = trace_walk(f.children[0], pv, s);
      for (double& v : out) v = -v;
      return out;
    }
    case Formula::Kind::And:
    case Formula::Kind::Or: {
      const auto a = trace_walk(f.children[0], pv, s);
      const auto b = trace_walk(f.children[1], pv, s);
      for (std::size_t t = 0; t < n; ++t) {
        out[t] = f.kind == Formula::Kind::And ? std::min(a[t], b[t]) : std::max(a[t], b[t]);
      }
      return out;
    }
    case Formula::Kind::Always:
    case Formula::Kind::Eventually: {
      const auto child = trace_walk(f.children[0], pv, s);
      const auto [start, end] = resolve_interval(pv.value(f.lo), pv.value(f.hi), n);
      return sliding_extreme(child, start, end, f.kind == Formula::Kind::Always);
    }
  }
  return out;
}

}  // namespace

std::vector<double> robustness_trace_fast(const Formula& f, const ParamVector& params,
                                          const ConfidenceSignal& s) {
  if (s.size() == 0) throw EmptyTrace("empty signal");
  return trace_walk(f, params, s);
}

// ---------------------------------------------------------------------------
// Soft semantics
// ---------------------------------------------------------------------------

double softmin(const std::vector<double>& xs, double tau) {
  double m = xs[0];
  for (double x : xs) m = std::min(m, x);
  double acc = 0.0;
  for (double x : xs) acc += std::exp(-tau * (x - m));
  return m - std::log(acc) / tau;
}

double softmax_val(const std::vector<double>& xs, double tau) {
  double m = xs[0];
  for (double x : xs) m = std::max(m, x);
  double acc = 0.0;
  for (double x : xs) acc += std::exp(tau * (x - m));
  return m + std::log(acc) / tau;
}

namespace {

double soft_at(const Formula& f, const ParamVector& pv, const ConfidenceSignal& s,
               std::size_t t, double tau) {
  switch (f.kind) {
    case Formula::Kind::Pred:
    case Formula::Kind::Agg:
      return rob_at(f, pv, s, t);
    case Formula::Kind::Not:
      return -soft_at(f.children[0], pv, s, t, tau);
    case Formula::Kind::And:
    case Formula::Kind::Or: {
      const std::vector<double> xs{soft_at(f.children[0], pv, s, t, tau),
                                   soft_at(f.children[1], pv, s, t, tau)};
      return f.kind == Formula::Kind::And ? softmin(xs, tau) : softmax_val(xs, tau);
    }
    case Formula::Kind::Always:
    case Formula::Kind::Eventually: {
      const auto [lo, hi] = window_at(f, pv, s.size(), t);
      std::vector<double> xs;
      xs.reserve(hi - lo + 1);
      for (std::size_t k = lo; k <= hi; ++k) xs.push_back(soft_at(f.children[0], pv, s, k, tau));
      return f.kind == Formula::Kind::Always ? softmin(xs, tau) : softmax_val(xs, tau);
    }
  }
  return 0.0;
}

struct ValGrad {
  double value = 0.0;
  std::vector<double> grad;
};

ValGrad soft_grad_at(const Formula& f, const ParamVector& pv, const ConfidenceSignal& s,
                     std::size_t t, double tau) {
  const std::size_t dim = pv.size();
  ValGrad out;
  out.grad.assign(dim, 0.0);
  switch (f.kind) {
    case Formula::Kind::Pred: {
      const double v = channel_value(s, f.channel, t);
      const double c = pv.value(f.threshold);
      out.value = f.cmp == Cmp::Ge ? v - c : c - v;
      out.grad[pv.index_of(f.threshold)] = f.cmp == Cmp::Ge ? -1.0 : 1.0;
      return out;
    }
    case Formula::Kind::Agg: {
      out.value = agg_robustness(f, pv, s);
      // d/d(nu) = +1 for varle, d/d(eps) = -1 for gain/loss; the window
      // fraction resolves to a discrete step count, so its slot stays zero.
      out.grad[pv.index_of(f.margin)] = f.agg == AggKind::VarLe ? 1.0 : -1.0;
      return out;
    }
    case Formula::Kind::Not: {
      out = soft_grad_at(f.children[0], pv, s, t, tau);
      out.value = -out.value;
      for (double& g : out.grad) g = -g;
      return out;
    }
    case Formula::Kind::And:
    case Formula::Kind::Or:
    case Formula::Kind::Always:
    case Formula::Kind::Eventually: {
      std::vector<ValGrad> parts;
      if (f.kind == Formula::Kind::And || f.kind == Formula::Kind::Or) {
        parts.push_back(soft_grad_at(f.children[0], pv, s, t, tau));
        parts.push_back(soft_grad_at(f.children[1], pv, s, t, tau));
      } else {
        const auto [lo, hi] = window_at(f, pv, s.size(), t);
        for (std::size_t k = lo; k <= hi; ++k) {
          parts.push_back(soft_grad_at(f.children[0], pv, s, k, tau));
        }
      }
      const bool is_min =
          f.kind == Formula::Kind::And || f.kind == Formula::Kind::Always;
      std::vector<double> xs;
      xs.reserve(parts.size());
      for (const auto& p : parts) xs.push_back(p.value);
      out.value = is_min ? softmin(xs, tau) : softmax_val(xs, tau);
      // softmin/softmax gradients are the Boltzmann weights of the parts
      double m = xs[0];
      for (double x : xs) m = is_min ? std::min(m, x) : std::max(m, x);
      double z = 0.0;
      std::vector<double> w(parts.size());
      for (std::size_t i = 0; i < parts.size(); ++i) {
        w[i] = std::exp((is_min ? -tau : tau) * (xs[i] - m));
        z += w[i];
      }
      for (std::size_t i = 0; i < parts.size(); ++i) {
        const double wi = w[i] / z;
        for (std::size_t j = 0; j < dim; ++j) out.grad[j] += wi * parts[i].grad[j];
      }
      return out;
    }
  }
  return out;
}

}  // namespace

double soft_robustness_at(const Formula& f, const ParamVector& params,
                          const ConfidenceSignal& s, std::size_t t, double tau) {
  if (tau <= 0.0) throw ParamError("temperature must be positive");
  if (t >= s.size()) throw IndexError("step out of range");
  return soft_at(f, params, s, t, tau);
}

double soft_robustness(const Formula& f, const ParamVector& params,
                       const ConfidenceSignal& s, double tau) {
  return soft_robustness_at(f, params, s, 0, tau);
}

std::pair<double, std::vector<double>> soft_robustness_grad(
    const Formula& f, const ParamVector& params, const ConfidenceSignal& s,
    double tau) {
  if (tau <= 0.0) throw ParamError("temperature must be positive");
  if (s.size() == 0) throw EmptyTrace("empty signal");
  ValGrad vg = soft_grad_at(f, params, s, 0, tau);
  return {vg.value, std::move(vg.grad)};
}

}  // namespace stlcal
