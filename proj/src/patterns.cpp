#include "stlcal/patterns.hpp"

#include <fstream>
#include <sstream>

#include "stlcal/errors.hpp"
#include "stlcal/rng.hpp"

namespace stlcal {

using nlohmann::json;

namespace {

json pattern_to_json(const FittedPattern& p) {
  json theta = json::object();
  for (const auto& e : p.theta.entries()) theta[e.name] = e.value;
  return json{{"name", p.name},
              {"formula", p.text()},
              {"theta", theta},
              {"train_loss", p.train_loss},
              {"val_loss", p.val_loss},
              {"skeleton", p.skeleton}};
}

FittedPattern pattern_from_json(const json& j, Polarity polarity) {
  FittedPattern p;
  p.polarity = polarity;
  p.name = j.value("name", "");
  auto [f, pv] = parse_formula(j.at("formula").get<std::string>());
  p.formula = std::move(f);
  p.theta = std::move(pv);
  const auto& theta = j.at("theta");
  if (theta.contains("alpha")) {
    p.theta.set("alpha", theta["alpha"].get<double>(), ParamRole::MapScale);
  }
  if (theta.contains("beta")) {
    p.theta.set("beta", theta["beta"].get<double>(), ParamRole::MapBias);
  }
  // slot values come from the formula text; check they agree with the map
  for (const auto& e : p.theta.entries()) {
    if (!theta.contains(e.name)) {
      throw SchemaError("pattern theta missing slot " + e.name);
    }
  }
  p.train_loss = j.value("train_loss", 0.0);
  p.val_loss = j.value("val_loss", 0.0);
  p.skeleton = canonical_skeleton(p.formula);
  return p;
}

}  // namespace

json pattern_set_to_json(const PatternSet& ps) {
  json pos = json::array();
  for (const auto& p : ps.pos) pos.push_back(pattern_to_json(p));
  json neg = json::array();
  for (const auto& p : ps.neg) neg.push_back(pattern_to_json(p));

  json weights = json::object();
  for (std::size_t k = 0; k < ps.weight_logits.size(); ++k) {
    const std::string key = k < ps.pos.size() ? "p" + std::to_string(k)
                                              : "n" + std::to_string(k - ps.pos.size());
    weights[key] = ps.weight_logits[k];
  }

  return json{{"pos", pos},
              {"neg", neg},
              {"weights", weights},
              {"seed", ps.seed},
              {"dataset", ps.dataset_id},
              {"config", ps.config},
              {"config_hash", ps.config_hash},
              {"val_nll", ps.val_nll}};
}

PatternSet pattern_set_from_json(const json& j) {
  PatternSet ps;
  for (const auto& pj : j.at("pos")) ps.pos.push_back(pattern_from_json(pj, Polarity::Positive));
  for (const auto& pj : j.at("neg")) ps.neg.push_back(pattern_from_json(pj, Polarity::Negative));
  ps.weight_logits.assign(ps.size(), 0.0);
  if (j.contains("weights")) {
    for (std::size_t k = 0; k < ps.size(); ++k) {
      const std::string key = k < ps.pos.size() ? "p" + std::to_string(k)
                                                : "n" + std::to_string(k - ps.pos.size());
      if (j["weights"].contains(key)) ps.weight_logits[k] = j["weights"][key].get<double>();
    }
  }
  ps.seed = j.value("seed", std::uint64_t{0});
  ps.dataset_id = j.value("dataset", "");
  ps.config = j.value("config", json::object());
  ps.config_hash = j.value("config_hash", "");
  ps.val_nll = j.value("val_nll", 0.0);
  return ps;
}

void save_pattern_set(const std::filesystem::path& path, const PatternSet& ps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write pattern set: " + path.string());
  out << pattern_set_to_json(ps).dump(2) << "\n";
}

PatternSet load_pattern_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open pattern set: " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw SchemaError("pattern set is not valid JSON: " + path.string());
  return pattern_set_from_json(j);
}

std::string file_content_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open file for hashing: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

std::string json_hash(const nlohmann::json& j) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

}  // namespace stlcal
