#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "stlcal/estimator.hpp"
#include "stlcal/patterns.hpp"
#include "stlcal/trace.hpp"

namespace stlcal {

inline constexpr std::size_t kTextHashWidth = 256;
inline constexpr std::size_t kSignalStatWidth = 7;
inline constexpr std::size_t kFeatureWidth = kTextHashWidth + kSignalStatWidth;
inline constexpr std::size_t kHiddenWidth = 64;

// Signed hashed bag-of-words of the question concatenated with signal
// statistics (mean, variance, OLS slope, min, max, final value, 1/n).
std::vector<double> featurize(const LabeledInstance& instance);

struct HyperConfig {
  double lr = 0.02;
  int epochs = 400;
  std::size_t batch = 0;  // 0 = full batch
  std::uint64_t seed = 0;
  double tau = kDefaultTau;
  // L2 penalty on the network weights; keeps the text hash from memorizing
  // individual questions when the signal statistics already explain the data
  double weight_decay = 1e-4;
};

// Question-adaptive parameterization: a two-hidden-layer tanh MLP whose
// per-pattern heads emit every continuous parameter of the bound pattern
// structures through range squashings, so predictions satisfy the parameter
// invariants for any weights. Heads start at zero, which places every output
// at its construction midpoint.
class HyperModel {
 public:
  HyperModel() = default;

  static HyperModel create(const PatternSet& ps, std::string bound_hash,
                           std::uint64_t seed);

  bool bound() const { return !heads_.empty(); }
  const std::string& bound_hash() const { return bound_hash_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<std::string>& skeletons() const { return skeletons_; }
  std::vector<double>& weight_logits() { return logits_; }
  const std::vector<double>& weight_logits() const { return logits_; }
  const std::vector<double>& epoch_losses() const { return epoch_losses_; }

  // One ParamVector per bound pattern (pos block order, then neg), including
  // the mapping alpha/beta.
  std::vector<ParamVector> predict_params(const LabeledInstance& instance) const;

  double predict_confidence(const PatternSet& ps, const LabeledInstance& instance,
                            const Semantics& semantics) const;

  std::vector<double> predict_dataset(const PatternSet& ps, const Dataset& data,
                                      const Semantics& semantics,
                                      ExecMode mode = default_exec_mode()) const;

  // Mean NLL over the dataset under soft semantics (the training objective).
  double loss(const PatternSet& ps, const Dataset& data, double tau) const;

  // Loss plus analytic gradient w.r.t. the flattened weights.
  std::pair<double, std::vector<double>> loss_and_grad(const PatternSet& ps,
                                                       const Dataset& data,
                                                       double tau) const;

  std::vector<double> flat_params() const;
  void set_flat_params(const std::vector<double>& flat);
  std::size_t param_count() const;

  nlohmann::json to_json() const;
  static HyperModel from_json(const nlohmann::json& j);

  friend HyperModel train_hyper(const PatternSet& ps, const Dataset& data,
                                const HyperConfig& cfg, std::string bound_hash);

 private:
  struct HeadUnit {
    enum class Kind { Single, IntervalPair, OrderedPair, Alpha, Beta };
    Kind kind = Kind::Single;
    ParamRole role = ParamRole::ThresholdS;  // Single only
    std::vector<std::string> slots;          // 1 (Single/Alpha/Beta) or 2 (pairs)
    std::size_t raw_offset = 0;              // into the pattern's raw output
    std::size_t raw_count = 1;
  };

  struct PatternHead {
    std::string skeleton;
    std::vector<HeadUnit> units;
    std::size_t raw_dim = 0;
    ParamVector slot_template;  // names/roles in canonical order
    std::vector<double> w;      // raw_dim x hidden
    std::vector<double> b;      // raw_dim
  };

  void forward_trunk(const std::vector<double>& x, std::vector<double>& h1,
                     std::vector<double>& h2) const;
  ParamVector decode_head(const PatternHead& head, const std::vector<double>& raw) const;

  std::vector<double> w1_, b1_, w2_, b2_;
  std::vector<PatternHead> heads_;
  std::vector<double> logits_;
  std::vector<double> epoch_losses_;
  std::vector<std::string> skeletons_;
  std::string bound_hash_;
  std::uint64_t seed_ = 0;
};

// Minibatch gradient descent on the discriminative NLL, gradients flowing
// through the soft robustness into the network. Deterministic given the
// seed; full-batch mode backtracks on the learning rate.
HyperModel train_hyper(const PatternSet& ps, const Dataset& data, const HyperConfig& cfg,
                       std::string bound_hash);

void save_hyper(const std::filesystem::path& path, const HyperModel& model);
HyperModel load_hyper(const std::filesystem::path& path);

}  // namespace stlcal
