#include "stlcal/estimator.hpp"

#include <algorithm>
#include <cmath>

#include "stlcal/errors.hpp"

namespace stlcal {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double clip_rho(double rho) { return std::clamp(rho, -kRhoClip, kRhoClip); }

double clip_prob(double p) { return std::clamp(p, kProbClip, 1.0 - kProbClip); }

BlockOutput block_score(const FittedPattern& pattern, const ConfidenceSignal& s,
                        const Semantics& semantics) {
  BlockOutput out;
  out.polarity = pattern.polarity;
  out.rho = semantics.soft
                ? soft_robustness(pattern.formula, pattern.theta, s, semantics.tau)
                : robustness_scalar(pattern.formula, pattern.theta, s);
  const double alpha = pattern.theta.value("alpha");
  const double beta = pattern.theta.value("beta");
  out.p = clip_prob(sigmoid(alpha * clip_rho(out.rho) + beta));
  return out;
}

std::vector<double> softmax_weights(const std::vector<double>& logits) {
  double m = logits[0];
  for (double l : logits) m = std::max(m, l);
  std::vector<double> w(logits.size());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    w[k] = std::exp(logits[k] - m);
    z += w[k];
  }
  for (double& v : w) v /= z;
  return w;
}

double aggregate(const std::vector<BlockOutput>& blocks,
                 const std::vector<double>& weight_logits) {
  if (blocks.empty()) throw DegenerateData("no blocks to aggregate");
  if (weight_logits.size() != blocks.size()) {
    throw DegenerateData("one weight logit per block required");
  }
  const auto w = softmax_weights(weight_logits);
  double acc = 0.0;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const double c = blocks[k].polarity == Polarity::Positive ? blocks[k].p : 1.0 - blocks[k].p;
    acc += w[k] * c;
  }
  return acc;
}

double predict_confidence(const PatternSet& ps, const ConfidenceSignal& s,
                          const Semantics& semantics) {
  std::vector<BlockOutput> blocks;
  blocks.reserve(ps.size());
  for (std::size_t k = 0; k < ps.size(); ++k) {
    blocks.push_back(block_score(ps.block(k), s, semantics));
  }
  return aggregate(blocks, ps.weight_logits);
}

std::vector<double> predict_dataset(const PatternSet& ps, const Dataset& data,
                                    const Semantics& semantics, ExecMode mode) {
  std::vector<double> out(data.size());
  for_each_index(data.size(), mode, [&](std::size_t i) {
    out[i] = predict_confidence(ps, data[i].signal, semantics);
  });
  return out;
}

double mean_nll(const std::vector<double>& preds, const std::vector<int>& labels) {
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double p = std::clamp(preds[i], 1e-12, 1.0 - 1e-12);
    acc += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
  }
  return acc / static_cast<double>(preds.size());
}

double ave_logit_baseline(const LabeledInstance& instance) {
  const auto& v = instance.signal.values;
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------
// fit_mapping
// ---------------------------------------------------------------------------

namespace {

double inv_sigmoid(double p) { return std::log(p / (1.0 - p)); }

struct MappingState {
  std::vector<double> u;      // alpha = 10 * sigmoid(u), keeps alpha in (0, 10)
  std::vector<double> beta;
  std::vector<double> logits;

  double alpha(std::size_t k) const { return 10.0 * sigmoid(u[k]); }
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> du, dbeta, dlogits;
};

LossGrad evaluate(const MappingState& st, const std::vector<std::vector<double>>& rho,
                  const std::vector<int>& labels, const std::vector<bool>& positive,
                  bool want_grad) {
  const std::size_t K = st.u.size();
  const std::size_t N = labels.size();
  LossGrad out;
  out.du.assign(K, 0.0);
  out.dbeta.assign(K, 0.0);
  out.dlogits.assign(K, 0.0);

  const auto w = softmax_weights(st.logits);
  std::vector<double> alpha(K);
  for (std::size_t k = 0; k < K; ++k) alpha[k] = st.alpha(k);

  std::vector<double> p(K), c(K);
  for (std::size_t i = 0; i < N; ++i) {
    double P = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double z = alpha[k] * rho[k][i] + st.beta[k];
      p[k] = sigmoid(z);
      const double pc = clip_prob(p[k]);
      c[k] = positive[k] ? pc : 1.0 - pc;
      P += w[k] * c[k];
    }
    const double Pc = std::clamp(P, 1e-12, 1.0 - 1e-12);
    const int y = labels[i];
    out.loss += y == 1 ? -std::log(Pc) : -std::log(1.0 - Pc);
    if (!want_grad) continue;

    const double dP = (y == 1 ? -1.0 / Pc : 1.0 / (1.0 - Pc)) / static_cast<double>(N);
    for (std::size_t k = 0; k < K; ++k) {
      // gradient through the probability clip is zero outside the band
      const bool saturated = p[k] <= kProbClip || p[k] >= 1.0 - kProbClip;
      const double dc = positive[k] ? 1.0 : -1.0;
      const double dz = saturated ? 0.0 : p[k] * (1.0 - p[k]);
      const double g = dP * w[k] * dc * dz;
      out.dbeta[k] += g;
      out.du[k] += g * rho[k][i] * 10.0 * sigmoid(st.u[k]) * (1.0 - sigmoid(st.u[k]));
      out.dlogits[k] += dP * w[k] * (c[k] - P);
    }
  }
  out.loss /= static_cast<double>(N);
  return out;
}

}  // namespace

double fit_mapping(PatternSet& ps, const Dataset& data, const FitMappingConfig& cfg) {
  if (ps.size() == 0) throw DegenerateData("empty pattern set");
  if (!has_both_classes(data)) throw DegenerateData("training data needs both classes");

  const std::size_t K = ps.size();
  const std::size_t N = data.size();

  // soft robustness is constant in (alpha, beta, weights); precompute it
  std::vector<std::vector<double>> rho(K, std::vector<double>(N));
  for (std::size_t k = 0; k < K; ++k) {
    const FittedPattern& pat = ps.block(k);
    for_each_index(N, [&](std::size_t i) {
      rho[k][i] = clip_rho(soft_robustness(pat.formula, pat.theta, data[i].signal, cfg.tau));
    });
  }

  std::vector<int> labels(N);
  for (std::size_t i = 0; i < N; ++i) labels[i] = data[i].label;
  std::vector<bool> positive(K);
  for (std::size_t k = 0; k < K; ++k) positive[k] = ps.block(k).polarity == Polarity::Positive;

  // neutral start: alpha = 1, beta = 0, equal weights
  MappingState st;
  st.u.assign(K, inv_sigmoid(0.1));
  st.beta.assign(K, 0.0);
  st.logits.assign(K, 0.0);

  // adaptive step size: grow on accepted steps, halve on rejected ones; the
  // loss trace stays monotone either way
  double lr = cfg.lr;
  LossGrad cur = evaluate(st, rho, labels, positive, true);
  for (int epoch = 0; epoch < cfg.epochs && lr > 1e-12; ++epoch) {
    MappingState trial = st;
    for (std::size_t k = 0; k < K; ++k) {
      trial.u[k] -= lr * cur.du[k];
      trial.beta[k] = std::clamp(trial.beta[k] - lr * cur.dbeta[k], -10.0, 10.0);
      trial.logits[k] -= lr * cur.dlogits[k];
    }
    LossGrad next = evaluate(trial, rho, labels, positive, true);
    if (std::isnan(next.loss) || next.loss > cur.loss) {
      lr *= 0.5;
      continue;
    }
    lr = std::min(lr * 1.2, 1e3);
    st = std::move(trial);
    cur = std::move(next);
  }

  for (std::size_t k = 0; k < K; ++k) {
    FittedPattern& pat = k < ps.pos.size() ? ps.pos[k] : ps.neg[k - ps.pos.size()];
    pat.theta.set("alpha", st.alpha(k), ParamRole::MapScale);
    pat.theta.set("beta", st.beta[k], ParamRole::MapBias);
  }
  ps.weight_logits = st.logits;
  if (!std::isfinite(cur.loss)) throw OptError("mapping fit diverged");
  return cur.loss;
}

}  // namespace stlcal
