#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "stlcal/catalog.hpp"
#include "stlcal/stl.hpp"

namespace stlcal {

// A mined formula with fitted continuous parameters, its sigmoid mapping
// (alpha/beta live in theta) and bookkeeping losses.
struct FittedPattern {
  std::string name;
  Formula formula;
  ParamVector theta;
  Polarity polarity = Polarity::Positive;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::string skeleton;

  std::string text() const { return format_formula(formula, theta); }
};

// The trained estimator: selected positive and negative patterns plus the
// aggregation weight logits (pos blocks first, then neg).
struct PatternSet {
  std::vector<FittedPattern> pos;
  std::vector<FittedPattern> neg;
  std::vector<double> weight_logits;
  std::uint64_t seed = 0;
  std::string dataset_id;
  std::string config_hash;
  nlohmann::json config = nlohmann::json::object();
  double val_nll = 0.0;  // ensemble NLL on the mining validation split

  std::size_t size() const { return pos.size() + neg.size(); }
  const FittedPattern& block(std::size_t k) const {
    return k < pos.size() ? pos[k] : neg[k - pos.size()];
  }
};

nlohmann::json pattern_set_to_json(const PatternSet& ps);
PatternSet pattern_set_from_json(const nlohmann::json& j);

void save_pattern_set(const std::filesystem::path& path, const PatternSet& ps);
PatternSet load_pattern_set(const std::filesystem::path& path);

// FNV hash of a file's bytes, as a hex string; binds hypernetwork models to
// the exact pattern-set file they were trained against.
std::string file_content_hash(const std::filesystem::path& path);

std::string json_hash(const nlohmann::json& j);

}  // namespace stlcal
