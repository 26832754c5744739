#include "stlcal/hyper.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include "stlcal/errors.hpp"
#include "stlcal/exec.hpp"
#include "stlcal/rng.hpp"

namespace stlcal {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

std::vector<double> featurize(const LabeledInstance& instance) {
  std::vector<double> x(kFeatureWidth, 0.0);

  // signed feature hashing over lowercase alphanumeric tokens
  std::size_t n_tokens = 0;
  std::string token;
  auto flush = [&]() {
    if (token.empty()) return;
    const std::uint64_t h = fnv1a(token);
    const std::size_t idx = h % kTextHashWidth;
    const double sign = ((h >> 32) & 1ull) ? 1.0 : -1.0;
    x[idx] += sign;
    ++n_tokens;
    token.clear();
  };
  for (char raw : instance.question) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      token.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  if (n_tokens > 0) {
    double norm = 0.0;
    for (std::size_t i = 0; i < kTextHashWidth; ++i) norm += x[i] * x[i];
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (std::size_t i = 0; i < kTextHashWidth; ++i) x[i] /= norm;
    }
  }

  const auto& v = instance.signal.values;
  const auto n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double s : v) mean += s;
  mean /= n;
  double var = 0.0;
  for (double s : v) var += (s - mean) * (s - mean);
  var /= n;
  double slope = 0.0;
  if (v.size() > 1) {
    const double t_mean = 0.5 * (n - 1.0);
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < v.size(); ++t) {
      const double dt = static_cast<double>(t) - t_mean;
      num += dt * (v[t] - mean);
      den += dt * dt;
    }
    slope = num / den;
  }
  double lo = v[0], hi = v[0];
  for (double s : v) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  x[kTextHashWidth + 0] = mean;
  x[kTextHashWidth + 1] = var;
  x[kTextHashWidth + 2] = slope;
  x[kTextHashWidth + 3] = lo;
  x[kTextHashWidth + 4] = hi;
  x[kTextHashWidth + 5] = v.back();
  x[kTextHashWidth + 6] = 1.0 / n;
  return x;
}

// ---------------------------------------------------------------------------
// Squashings
// ---------------------------------------------------------------------------

namespace {

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double dsig(double z) {
  const double s = sig(z);
  return s * (1.0 - s);
}

struct SingleSquash {
  double scale;
  double offset;
};

SingleSquash single_squash(ParamRole role) {
  switch (role) {
    case ParamRole::ThresholdS: return {1.0, 0.0};
    case ParamRole::ThresholdD: return {1.0, -0.5};
    case ParamRole::ThresholdLifted: return {4.0, -2.0};
    case ParamRole::VarBound: return {0.25, 0.0};
    case ParamRole::WindowFrac: return {0.5, 0.0};
    case ParamRole::Margin: return {0.5, 0.0};
    default: return {1.0, 0.0};
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Model assembly
// ---------------------------------------------------------------------------

HyperModel HyperModel::create(const PatternSet& ps, std::string bound_hash,
                              std::uint64_t seed) {
  if (ps.size() == 0) throw DegenerateData("cannot bind a hypernetwork to an empty set");
  HyperModel m;
  m.seed_ = seed;
  m.bound_hash_ = std::move(bound_hash);

  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  const double s1 = std::sqrt(6.0 / static_cast<double>(kFeatureWidth + kHiddenWidth));
  const double s2 = std::sqrt(6.0 / static_cast<double>(2 * kHiddenWidth));
  m.w1_.resize(kHiddenWidth * kFeatureWidth);
  for (double& w : m.w1_) w = rng.uniform(-s1, s1);
  m.b1_.assign(kHiddenWidth, 0.0);
  m.w2_.resize(kHiddenWidth * kHiddenWidth);
  for (double& w : m.w2_) w = rng.uniform(-s2, s2);
  m.b2_.assign(kHiddenWidth, 0.0);

  for (std::size_t k = 0; k < ps.size(); ++k) {
    const FittedPattern& pat = ps.block(k);
    PatternHead head;
    head.skeleton = canonical_skeleton(pat.formula);
    head.slot_template = pat.theta;
    if (!head.slot_template.contains("alpha")) {
      head.slot_template.set("alpha", 1.0, ParamRole::MapScale);
    }
    if (!head.slot_template.contains("beta")) {
      head.slot_template.set("beta", 0.0, ParamRole::MapBias);
    }

    const ParamStructure st = param_structure(pat.formula);
    std::set<std::string> consumed;
    auto pair_with = [&](const std::string& name, const auto& pairs,
                         std::pair<std::string, std::string>& out) {
      for (const auto& pr : pairs) {
        if (pr.first == name || pr.second == name) {
          out = pr;
          return true;
        }
      }
      return false;
    };

    std::size_t off = 0;
    for (const auto& e : head.slot_template.entries()) {
      if (consumed.count(e.name)) continue;
      HeadUnit unit;
      unit.raw_offset = off;
      std::pair<std::string, std::string> pr;
      if (e.role == ParamRole::MapScale) {
        unit.kind = HeadUnit::Kind::Alpha;
        unit.slots = {e.name};
        unit.raw_count = 1;
      } else if (e.role == ParamRole::MapBias) {
        unit.kind = HeadUnit::Kind::Beta;
        unit.slots = {e.name};
        unit.raw_count = 1;
      } else if (pair_with(e.name, st.ordered_pairs, pr)) {
        unit.kind = HeadUnit::Kind::OrderedPair;
        unit.slots = {pr.first, pr.second};
        unit.raw_count = 3;
        consumed.insert(pr.first);
        consumed.insert(pr.second);
      } else if (pair_with(e.name, st.interval_pairs, pr)) {
        unit.kind = HeadUnit::Kind::IntervalPair;
        unit.slots = {pr.first, pr.second};
        unit.raw_count = 2;
        consumed.insert(pr.first);
        consumed.insert(pr.second);
      } else {
        unit.kind = HeadUnit::Kind::Single;
        unit.role = e.role;
        unit.slots = {e.name};
        unit.raw_count = 1;
      }
      off += unit.raw_count;
      head.units.push_back(std::move(unit));
    }
    head.raw_dim = off;
    head.w.assign(head.raw_dim * kHiddenWidth, 0.0);
    head.b.assign(head.raw_dim, 0.0);
    m.heads_.push_back(std::move(head));
    m.skeletons_.push_back(m.heads_.back().skeleton);
  }

  m.logits_ = ps.weight_logits;
  if (m.logits_.size() != ps.size()) m.logits_.assign(ps.size(), 0.0);
  return m;
}

void HyperModel::forward_trunk(const std::vector<double>& x, std::vector<double>& h1,
                               std::vector<double>& h2) const {
  h1.assign(kHiddenWidth, 0.0);
  for (std::size_t j = 0; j < kHiddenWidth; ++j) {
    double acc = b1_[j];
    const double* row = &w1_[j * kFeatureWidth];
    for (std::size_t i = 0; i < kFeatureWidth; ++i) acc += row[i] * x[i];
    h1[j] = std::tanh(acc);
  }
  h2.assign(kHiddenWidth, 0.0);
  for (std::size_t j = 0; j < kHiddenWidth; ++j) {
    double acc = b2_[j];
    const double* row = &w2_[j * kHiddenWidth];
    for (std::size_t i = 0; i < kHiddenWidth; ++i) acc += row[i] * h1[i];
    h2[j] = std::tanh(acc);
  }
}

ParamVector HyperModel::decode_head(const PatternHead& head,
                                    const std::vector<double>& raw) const {
  ParamVector pv = head.slot_template;
  for (const auto& unit : head.units) {
    const double* r = &raw[unit.raw_offset];
    switch (unit.kind) {
      case HeadUnit::Kind::Single: {
        const auto sq = single_squash(unit.role);
        pv.set_value(unit.slots[0], sq.offset + sq.scale * sig(r[0]));
        break;
      }
      case HeadUnit::Kind::IntervalPair: {
        const double a = sig(r[0]);
        pv.set_value(unit.slots[0], a);
        pv.set_value(unit.slots[1], a + (1.0 - a) * sig(r[1]));
        break;
      }
      case HeadUnit::Kind::OrderedPair: {
        const double mid = sig(r[0]);
        const double g = sig(r[1]);
        const double h = sig(r[2]);
        pv.set_value(unit.slots[0], mid * g);
        pv.set_value(unit.slots[1], mid + (1.0 - mid) * h);
        break;
      }
      case HeadUnit::Kind::Alpha:
        pv.set_value(unit.slots[0], 10.0 * sig(r[0]));
        break;
      case HeadUnit::Kind::Beta:
        pv.set_value(unit.slots[0], 10.0 * std::tanh(r[0]));
        break;
    }
  }
  return pv;
}

std::vector<ParamVector> HyperModel::predict_params(const LabeledInstance& instance) const {
  if (!bound()) throw StateError("hypernetwork is not bound to a pattern set");
  const auto x = featurize(instance);
  std::vector<double> h1, h2;
  forward_trunk(x, h1, h2);

  std::vector<ParamVector> out;
  out.reserve(heads_.size());
  for (const auto& head : heads_) {
    std::vector<double> raw(head.raw_dim, 0.0);
    for (std::size_t r = 0; r < head.raw_dim; ++r) {
      double acc = head.b[r];
      const double* row = &head.w[r * kHiddenWidth];
      for (std::size_t i = 0; i < kHiddenWidth; ++i) acc += row[i] * h2[i];
      raw[r] = acc;
    }
    out.push_back(decode_head(head, raw));
  }
  return out;
}

double HyperModel::predict_confidence(const PatternSet& ps, const LabeledInstance& instance,
                                      const Semantics& semantics) const {
  if (ps.size() != heads_.size()) throw StateError("pattern set does not match the model");
  const auto thetas = predict_params(instance);
  std::vector<BlockOutput> blocks(ps.size());
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const FittedPattern& pat = ps.block(k);
    BlockOutput blk;
    blk.polarity = pat.polarity;
    blk.rho = semantics.soft
                  ? soft_robustness(pat.formula, thetas[k], instance.signal, semantics.tau)
                  : robustness_scalar(pat.formula, thetas[k], instance.signal);
    blk.p = clip_prob(sigmoid(thetas[k].value("alpha") * clip_rho(blk.rho) +
                              thetas[k].value("beta")));
    blocks[k] = blk;
  }
  return aggregate(blocks, logits_);
}

std::vector<double> HyperModel::predict_dataset(const PatternSet& ps, const Dataset& data,
                                                const Semantics& semantics,
                                                ExecMode mode) const {
  std::vector<double> out(data.size());
  for_each_index(data.size(), mode, [&](std::size_t i) {
    out[i] = predict_confidence(ps, data[i], semantics);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Loss and gradients
// ---------------------------------------------------------------------------

std::size_t HyperModel::param_count() const {
  std::size_t n = w1_.size() + b1_.size() + w2_.size() + b2_.size() + logits_.size();
  for (const auto& h : heads_) n += h.w.size() + h.b.size();
  return n;
}

std::vector<double> HyperModel::flat_params() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  auto push = [&](const std::vector<double>& v) { flat.insert(flat.end(), v.begin(), v.end()); };
  push(w1_);
  push(b1_);
  push(w2_);
  push(b2_);
  for (const auto& h : heads_) {
    push(h.w);
    push(h.b);
  }
  push(logits_);
  return flat;
}

void HyperModel::set_flat_params(const std::vector<double>& flat) {
  if (flat.size() != param_count()) throw StateError("flat parameter size mismatch");
  std::size_t at = 0;
  auto pull = [&](std::vector<double>& v) {
    std::copy(flat.begin() + static_cast<long>(at),
              flat.begin() + static_cast<long>(at + v.size()), v.begin());
    at += v.size();
  };
  pull(w1_);
  pull(b1_);
  pull(w2_);
  pull(b2_);
  for (auto& h : heads_) {
    pull(h.w);
    pull(h.b);
  }
  pull(logits_);
}

namespace {

struct InstanceGrad {
  double loss = 0.0;
  std::vector<double> flat;
};

}  // namespace

double HyperModel::loss(const PatternSet& ps, const Dataset& data, double tau) const {
  std::vector<double> losses(data.size());
  for_each_index(data.size(), [&](std::size_t i) {
    const double P = std::clamp(
        predict_confidence(ps, data[i], Semantics::soft_at(tau)), 1e-12, 1.0 - 1e-12);
    losses[i] = data[i].label == 1 ? -std::log(P) : -std::log(1.0 - P);
  });
  double acc = 0.0;
  for (double l : losses) acc += l;
  return acc / static_cast<double>(data.size());
}

std::pair<double, std::vector<double>> HyperModel::loss_and_grad(const PatternSet& ps,
                                                                 const Dataset& data,
                                                                 double tau) const {
  if (ps.size() != heads_.size()) throw StateError("pattern set does not match the model");
  const std::size_t P = param_count();
  const std::size_t K = heads_.size();
  const auto w = softmax_weights(logits_);

  // offsets into the flat layout
  const std::size_t off_w1 = 0;
  const std::size_t off_b1 = off_w1 + w1_.size();
  const std::size_t off_w2 = off_b1 + b1_.size();
  const std::size_t off_b2 = off_w2 + w2_.size();
  std::vector<std::size_t> off_head(K);
  std::size_t at = off_b2 + b2_.size();
  for (std::size_t k = 0; k < K; ++k) {
    off_head[k] = at;
    at += heads_[k].w.size() + heads_[k].b.size();
  }
  const std::size_t off_logits = at;

  auto one = [&](std::size_t i, InstanceGrad& out) {
    const LabeledInstance& inst = data[i];
    const auto x = featurize(inst);
    std::vector<std::size_t> active;  // sparse nonzero feature indices
    for (std::size_t f = 0; f < kFeatureWidth; ++f) {
      if (x[f] != 0.0) active.push_back(f);
    }
    std::vector<double> h1, h2;
    forward_trunk(x, h1, h2);

    struct BlockState {
      std::vector<double> raw;
      ParamVector theta;
      double rho = 0.0, rho_clipped = 0.0;
      double z = 0.0, p = 0.0, c = 0.0;
      std::vector<double> drho;  // aligned with theta entries
    };
    std::vector<BlockState> blocks(K);
    double Pconf = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const auto& head = heads_[k];
      BlockState& blk = blocks[k];
      blk.raw.assign(head.raw_dim, 0.0);
      for (std::size_t r = 0; r < head.raw_dim; ++r) {
        double acc = head.b[r];
        const double* row = &head.w[r * kHiddenWidth];
        for (std::size_t j = 0; j < kHiddenWidth; ++j) acc += row[j] * h2[j];
        blk.raw[r] = acc;
      }
      blk.theta = decode_head(head, blk.raw);
      const FittedPattern& pat = ps.block(k);
      auto [rho, drho] = soft_robustness_grad(pat.formula, blk.theta, inst.signal, tau);
      blk.rho = rho;
      blk.drho = std::move(drho);
      blk.rho_clipped = clip_rho(rho);
      const double alpha = blk.theta.value("alpha");
      const double beta = blk.theta.value("beta");
      blk.z = alpha * blk.rho_clipped + beta;
      blk.p = sig(blk.z);
      const double pc = clip_prob(blk.p);
      blk.c = pat.polarity == Polarity::Positive ? pc : 1.0 - pc;
      Pconf += w[k] * blk.c;
    }
    const double Pc = std::clamp(Pconf, 1e-12, 1.0 - 1e-12);
    const int y = inst.label;
    out.loss += y == 1 ? -std::log(Pc) : -std::log(1.0 - Pc);
    const double dP = y == 1 ? -1.0 / Pc : 1.0 / (1.0 - Pc);

    std::vector<double> dh2(kHiddenWidth, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const auto& head = heads_[k];
      BlockState& blk = blocks[k];
      out.flat[off_logits + k] += dP * w[k] * (blk.c - Pconf);

      const bool saturated = blk.p <= kProbClip || blk.p >= 1.0 - kProbClip;
      const double dc = ps.block(k).polarity == Polarity::Positive ? 1.0 : -1.0;
      const double dz = saturated ? 0.0 : dP * w[k] * dc * blk.p * (1.0 - blk.p);
      const double alpha = blk.theta.value("alpha");
      const double dalpha = dz * blk.rho_clipped;
      const double dbeta = dz;
      const double drho_c = dz * alpha;
      const double drho = std::fabs(blk.rho) < kRhoClip ? drho_c : 0.0;

      // per-slot gradients of the loss
      std::vector<double> draw(head.raw_dim, 0.0);
      auto slot_grad = [&](const std::string& name) {
        return drho * blk.drho[blk.theta.index_of(name)];
      };
      for (const auto& unit : head.units) {
        const double* r = &blk.raw[unit.raw_offset];
        double* dr = &draw[unit.raw_offset];
        switch (unit.kind) {
          case HeadUnit::Kind::Single: {
            const auto sq = single_squash(unit.role);
            dr[0] = slot_grad(unit.slots[0]) * sq.scale * dsig(r[0]);
            break;
          }
          case HeadUnit::Kind::IntervalPair: {
            const double ga = slot_grad(unit.slots[0]);
            const double gb = slot_grad(unit.slots[1]);
            const double sv = sig(r[1]);
            dr[0] = (ga + gb * (1.0 - sv)) * dsig(r[0]);
            dr[1] = gb * (1.0 - sig(r[0])) * dsig(r[1]);
            break;
          }
          case HeadUnit::Kind::OrderedPair: {
            const double glo = slot_grad(unit.slots[0]);
            const double ghi = slot_grad(unit.slots[1]);
            const double g = sig(r[1]);
            const double h = sig(r[2]);
            dr[0] = (glo * g + ghi * (1.0 - h)) * dsig(r[0]);
            dr[1] = glo * sig(r[0]) * dsig(r[1]);
            dr[2] = ghi * (1.0 - sig(r[0])) * dsig(r[2]);
            break;
          }
          case HeadUnit::Kind::Alpha:
            dr[0] = dalpha * 10.0 * dsig(r[0]);
            break;
          case HeadUnit::Kind::Beta: {
            const double th = std::tanh(r[0]);
            dr[0] = dbeta * 10.0 * (1.0 - th * th);
            break;
          }
        }
      }

      double* dW3 = &out.flat[off_head[k]];
      double* db3 = dW3 + head.w.size();
      for (std::size_t r = 0; r < head.raw_dim; ++r) {
        if (draw[r] == 0.0) continue;
        for (std::size_t j = 0; j < kHiddenWidth; ++j) {
          dW3[r * kHiddenWidth + j] += draw[r] * h2[j];
          dh2[j] += head.w[r * kHiddenWidth + j] * draw[r];
        }
        db3[r] += draw[r];
      }
    }

    // trunk backward
    std::vector<double> dh2_pre(kHiddenWidth);
    for (std::size_t j = 0; j < kHiddenWidth; ++j) dh2_pre[j] = dh2[j] * (1.0 - h2[j] * h2[j]);
    std::vector<double> dh1(kHiddenWidth, 0.0);
    for (std::size_t j = 0; j < kHiddenWidth; ++j) {
      if (dh2_pre[j] == 0.0) continue;
      for (std::size_t i2 = 0; i2 < kHiddenWidth; ++i2) {
        out.flat[off_w2 + j * kHiddenWidth + i2] += dh2_pre[j] * h1[i2];
        dh1[i2] += w2_[j * kHiddenWidth + i2] * dh2_pre[j];
      }
      out.flat[off_b2 + j] += dh2_pre[j];
    }
    for (std::size_t j = 0; j < kHiddenWidth; ++j) {
      const double d = dh1[j] * (1.0 - h1[j] * h1[j]);
      if (d == 0.0) continue;
      for (std::size_t i1 : active) {
        out.flat[off_w1 + j * kFeatureWidth + i1] += d * x[i1];
      }
      out.flat[off_b1 + j] += d;
    }
  };

  // Fixed striped slots: slot s accumulates instances s, s+S, s+2S, ... so
  // the final slot-order reduction is independent of the thread count.
  const std::size_t n_slots = std::min<std::size_t>(16, data.size());
  std::vector<InstanceGrad> slot(n_slots);
  for (auto& s : slot) {
    s.loss = 0.0;
    s.flat.assign(P, 0.0);
  }
  for_each_index(n_slots, [&](std::size_t s) {
    for (std::size_t i = s; i < data.size(); i += n_slots) one(i, slot[s]);
  });
  double total_loss = 0.0;
  std::vector<double> grad(P, 0.0);
  for (const auto& s : slot) {
    total_loss += s.loss;
    for (std::size_t p = 0; p < P; ++p) grad[p] += s.flat[p];
  }
  const auto n = static_cast<double>(data.size());
  total_loss /= n;
  for (double& g : grad) g /= n;
  return {total_loss, std::move(grad)};
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

HyperModel train_hyper(const PatternSet& ps, const Dataset& data, const HyperConfig& cfg,
                       std::string bound_hash) {
  if (!has_both_classes(data)) throw DegenerateData("training data needs both classes");
  HyperModel model = HyperModel::create(ps, std::move(bound_hash), cfg.seed);
  if (cfg.epochs <= 0) return model;

  const std::size_t batch = cfg.batch == 0 ? data.size() : std::min(cfg.batch, data.size());
  Rng rng(cfg.seed ^ 0x7f4a7c15ull);

  // Adam with a best-snapshot: the returned model is the lowest full-data
  // loss seen, so extra epochs never hurt the final NLL.
  const std::size_t P = model.param_count();
  std::vector<double> m(P, 0.0), v(P, 0.0);
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::size_t step = 0;

  std::vector<double> flat = model.flat_params();
  const double lambda = cfg.weight_decay;
  auto decay_term = [&](const std::vector<double>& w) {
    double acc = 0.0;
    for (double x : w) acc += x * x;
    return 0.5 * lambda * acc;
  };
  auto adam_step = [&](std::vector<double>& grad, double nll) {
    if (!std::isfinite(nll)) throw OptError("hypernetwork training diverged");
    ++step;
    for (std::size_t p = 0; p < P; ++p) {
      const double g = grad[p] + lambda * flat[p];
      m[p] = beta1 * m[p] + (1.0 - beta1) * g;
      v[p] = beta2 * v[p] + (1.0 - beta2) * g * g;
      const double mh = m[p] / (1.0 - std::pow(beta1, static_cast<double>(step)));
      const double vh = v[p] / (1.0 - std::pow(beta2, static_cast<double>(step)));
      flat[p] -= cfg.lr * mh / (std::sqrt(vh) + adam_eps);
    }
    model.set_flat_params(flat);
  };

  std::vector<double> best_flat = flat;
  double best_objective = model.loss(ps, data, cfg.tau) + decay_term(flat);
  model.epoch_losses_.push_back(best_objective - decay_term(flat));

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_nll = 0.0;
    if (batch == data.size()) {
      auto [nll, grad] = model.loss_and_grad(ps, data, cfg.tau);
      const double objective = nll + decay_term(flat);
      if (objective < best_objective) {
        best_objective = objective;
        best_flat = flat;
      }
      adam_step(grad, nll);
      epoch_nll = nll;  // loss before the step
    } else {
      rng.shuffle(order);
      for (std::size_t base_i = 0; base_i < order.size(); base_i += batch) {
        Dataset mini;
        for (std::size_t j = base_i; j < std::min(base_i + batch, order.size()); ++j) {
          mini.push_back(data[order[j]]);
        }
        auto [nll, grad] = model.loss_and_grad(ps, mini, cfg.tau);
        adam_step(grad, nll);
      }
      epoch_nll = model.loss(ps, data, cfg.tau);
      const double objective = epoch_nll + decay_term(flat);
      if (objective < best_objective) {
        best_objective = objective;
        best_flat = flat;
      }
    }
    model.epoch_losses_.push_back(epoch_nll);
  }

  // final check so the snapshot covers the last step too
  {
    const double nll = model.loss(ps, data, cfg.tau);
    if (nll + decay_term(flat) < best_objective) {
      best_objective = nll + decay_term(flat);
      best_flat = flat;
    }
  }
  model.set_flat_params(best_flat);
  const double final_nll = model.loss(ps, data, cfg.tau);
  model.epoch_losses_.push_back(final_nll);
  if (!std::isfinite(final_nll)) throw OptError("hypernetwork training diverged");
  return model;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

json HyperModel::to_json() const {
  json heads = json::array();
  for (const auto& h : heads_) {
    json units = json::array();
    for (const auto& u : h.units) {
      units.push_back({{"kind", static_cast<int>(u.kind)},
                       {"role", static_cast<int>(u.role)},
                       {"slots", u.slots},
                       {"raw_offset", u.raw_offset},
                       {"raw_count", u.raw_count}});
    }
    json slots = json::array();
    for (const auto& e : h.slot_template.entries()) {
      slots.push_back({{"name", e.name}, {"role", static_cast<int>(e.role)}});
    }
    heads.push_back({{"skeleton", h.skeleton},
                     {"units", units},
                     {"slots", slots},
                     {"raw_dim", h.raw_dim},
                     {"w", h.w},
                     {"b", h.b}});
  }
  return json{{"feature_width", kFeatureWidth},
              {"hidden", kHiddenWidth},
              {"w1", w1_},
              {"b1", b1_},
              {"w2", w2_},
              {"b2", b2_},
              {"heads", heads},
              {"logits", logits_},
              {"epoch_losses", epoch_losses_},
              {"bound_hash", bound_hash_},
              {"seed", seed_}};
}

HyperModel HyperModel::from_json(const json& j) {
  HyperModel m;
  if (j.value("feature_width", std::size_t{0}) != kFeatureWidth ||
      j.value("hidden", std::size_t{0}) != kHiddenWidth) {
    throw StateError("hypernetwork file has incompatible dimensions");
  }
  m.w1_ = j.at("w1").get<std::vector<double>>();
  m.b1_ = j.at("b1").get<std::vector<double>>();
  m.w2_ = j.at("w2").get<std::vector<double>>();
  m.b2_ = j.at("b2").get<std::vector<double>>();
  for (const auto& hj : j.at("heads")) {
    PatternHead h;
    h.skeleton = hj.at("skeleton").get<std::string>();
    h.raw_dim = hj.at("raw_dim").get<std::size_t>();
    for (const auto& sj : hj.at("slots")) {
      h.slot_template.set(sj.at("name").get<std::string>(), 0.0,
                          static_cast<ParamRole>(sj.at("role").get<int>()));
    }
    for (const auto& uj : hj.at("units")) {
      HeadUnit u;
      u.kind = static_cast<HeadUnit::Kind>(uj.at("kind").get<int>());
      u.role = static_cast<ParamRole>(uj.at("role").get<int>());
      u.slots = uj.at("slots").get<std::vector<std::string>>();
      u.raw_offset = uj.at("raw_offset").get<std::size_t>();
      u.raw_count = uj.at("raw_count").get<std::size_t>();
      h.units.push_back(std::move(u));
    }
    h.w = hj.at("w").get<std::vector<double>>();
    h.b = hj.at("b").get<std::vector<double>>();
    m.skeletons_.push_back(h.skeleton);
    m.heads_.push_back(std::move(h));
  }
  m.logits_ = j.at("logits").get<std::vector<double>>();
  if (j.contains("epoch_losses")) {
    m.epoch_losses_ = j["epoch_losses"].get<std::vector<double>>();
  }
  m.bound_hash_ = j.value("bound_hash", "");
  m.seed_ = j.value("seed", std::uint64_t{0});
  return m;
}

void save_hyper(const std::filesystem::path& path, const HyperModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write model file: " + path.string());
  out << model.to_json().dump(2) << "\n";
}

HyperModel load_hyper(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open model file: " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw SchemaError("model file is not valid JSON: " + path.string());
  return HyperModel::from_json(j);
}

}  // namespace stlcal
