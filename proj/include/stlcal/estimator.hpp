#pragma once

#include <cstdint>
#include <vector>

#include "stlcal/exec.hpp"
#include "stlcal/patterns.hpp"
#include "stlcal/trace.hpp"

namespace stlcal {

// Robustness is clipped to [-R, R] before the sigmoid and probabilities away
// from exact 0/1, which keeps the cross-entropy and its gradients finite.
inline constexpr double kRhoClip = 10.0;
inline constexpr double kProbClip = 1e-6;
inline constexpr double kDefaultTau = 20.0;

struct Semantics {
  bool soft = false;
  double tau = kDefaultTau;
  static Semantics hard() { return {false, kDefaultTau}; }
  static Semantics soft_at(double tau) { return {true, tau}; }
};

struct BlockOutput {
  double rho = 0.0;  // raw robustness under the chosen semantics
  double p = 0.0;    // sigmoid(alpha * clip(rho) + beta), clipped
  Polarity polarity = Polarity::Positive;
};

double sigmoid(double z);
double clip_rho(double rho);
double clip_prob(double p);

BlockOutput block_score(const FittedPattern& pattern, const ConfidenceSignal& s,
                        const Semantics& semantics);

// Positive blocks contribute p, negative blocks 1-p; the mix is the
// softmax-weighted convex combination of the contributions.
double aggregate(const std::vector<BlockOutput>& blocks,
                 const std::vector<double>& weight_logits);

std::vector<double> softmax_weights(const std::vector<double>& logits);

double predict_confidence(const PatternSet& ps, const ConfidenceSignal& s,
                          const Semantics& semantics);

// Per-instance confidences for a dataset; parallel over instances.
std::vector<double> predict_dataset(const PatternSet& ps, const Dataset& data,
                                    const Semantics& semantics,
                                    ExecMode mode = default_exec_mode());

struct FitMappingConfig {
  double lr = 0.05;
  int epochs = 500;
  std::uint64_t seed = 0;
  double tau = kDefaultTau;
};

// Joint full-batch fit of every block's (alpha, beta) and the aggregation
// logits against binary NLL. Starts from the neutral mapping (alpha=1,
// beta=0, equal weights), trains on soft robustness, and backtracks on the
// learning rate so the final NLL never exceeds the initial one. Returns the
// final training NLL.
double fit_mapping(PatternSet& ps, const Dataset& data, const FitMappingConfig& cfg);

// Length-normalized token-probability baseline: the mean of the stepwise
// signal.
double ave_logit_baseline(const LabeledInstance& instance);

// Mean binary NLL of predictions against labels.
double mean_nll(const std::vector<double>& preds, const std::vector<int>& labels);

}  // namespace stlcal
