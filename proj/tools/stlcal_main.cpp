// stlcal -- mine discriminative STL patterns over stepwise confidence
// signals, calibrate them into correctness-probability estimates, and
// evaluate with ECE/Brier/AUROC.
//
// Subcommands: synth, mine, fit-hyper, predict, evaluate, analyze.
// Exit codes: 0 ok, 2 usage or input/schema problems, 3 data/model problems.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stlcal/errors.hpp"
#include "stlcal/estimator.hpp"
#include "stlcal/exec.hpp"
#include "stlcal/hyper.hpp"
#include "stlcal/metrics.hpp"
#include "stlcal/miner.hpp"
#include "stlcal/patterns.hpp"
#include "stlcal/rng.hpp"
#include "stlcal/synth.hpp"
#include "stlcal/trace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stlcal;

namespace {

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open config file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw SchemaError("config file is not a JSON object: " + path);
  }
  return j;
}

template <typename T>
void cfg_override(const json& cfg, const char* key, T& value) {
  if (cfg.contains(key)) value = cfg[key].get<T>();
}

fs::path with_suffix(const fs::path& base, const std::string& suffix) {
  fs::path p = base;
  if (p.extension() == ".json" || p.extension() == ".jsonl") {
    p.replace_extension();
  }
  return fs::path(p.string() + suffix);
}

std::string dataset_tag(const std::string& path) {
  return fs::path(path).filename().string();
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write file: " + path.string());
  out << j.dump(2) << "\n";
}

struct PredRecord {
  std::string id;
  double p = 0.0;
  int label = 0;
};

std::vector<PredRecord> load_predictions(const fs::path& path, std::uint64_t* seed_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open predictions: " + path.string());
  std::vector<PredRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw SchemaError("line " + std::to_string(line_no) + ": invalid JSON");
    }
    if (seed_out && line_no == 1 && j.contains("seed")) {
      *seed_out = j["seed"].get<std::uint64_t>();
    }
    PredRecord r;
    r.id = j.value("id", std::string{});
    r.p = j.at("p").get<double>();
    r.label = j.at("label").get<int>();
    out.push_back(std::move(r));
  }
  if (out.empty()) throw SchemaError("no predictions in " + path.string());
  return out;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string scenario, out, config;
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

int run_synth(SynthArgs a) {
  const json cfg = load_config_file(a.config);
  cfg_override(cfg, "scenario", a.scenario);
  cfg_override(cfg, "n", a.n);
  cfg_override(cfg, "seed", a.seed);
  cfg_override(cfg, "out", a.out);

  const json effective{{"cmd", "synth"}, {"scenario", a.scenario}, {"n", a.n}, {"seed", a.seed}};
  const auto result = generate(scenario_from_name(a.scenario), a.n, a.seed);
  save_dataset(a.out, result.data);

  json oracle{{"scenario", a.scenario},
              {"seed", a.seed},
              {"config_hash", json_hash(effective)},
              {"formula", result.oracle_formula.empty() ? json(nullptr) : json(result.oracle_formula)},
              {"polarity", result.oracle_formula.empty() ? json(nullptr) : json(result.oracle_polarity)}};
  if (!result.instance_thresholds.empty()) oracle["thetas"] = result.instance_thresholds;
  write_json_file(with_suffix(a.out, ".oracle.json"), oracle);

  std::cout << "wrote " << result.data.size() << " instances to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// mine
// ---------------------------------------------------------------------------

struct MineArgs {
  std::string train, out, config;
  std::size_t n_pos = 5, n_neg = 5, beam = 8, folds = 1;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
};

int run_mine(MineArgs a) {
  const json cfg = load_config_file(a.config);
  cfg_override(cfg, "train", a.train);
  cfg_override(cfg, "out", a.out);
  cfg_override(cfg, "n_pos", a.n_pos);
  cfg_override(cfg, "n_neg", a.n_neg);
  cfg_override(cfg, "K", a.beam);
  cfg_override(cfg, "folds", a.folds);
  cfg_override(cfg, "val_fraction", a.val_fraction);
  cfg_override(cfg, "seed", a.seed);

  if (a.n_pos + a.n_neg == 0) {
    std::cerr << "error: n-pos and n-neg cannot both be zero\n";
    return 2;
  }
  const json effective{{"cmd", "mine"},       {"train", dataset_tag(a.train)},
                       {"n_pos", a.n_pos},    {"n_neg", a.n_neg},
                       {"K", a.beam},         {"folds", a.folds},
                       {"val_fraction", a.val_fraction}, {"seed", a.seed}};
  const std::string config_hash = json_hash(effective);

  const Dataset data = load_dataset(a.train);
  MineConfig mc;
  mc.n_pos = a.n_pos;
  mc.n_neg = a.n_neg;
  mc.beam = a.beam;
  mc.seed = a.seed;
  mc.val_fraction = a.val_fraction;

  if (a.folds <= 1) {
    PatternSet ps = mine(data, mc);
    ps.dataset_id = dataset_tag(a.train);
    ps.config_hash = config_hash;
    save_pattern_set(a.out, ps);
    std::cout << "mined " << ps.size() << " patterns (val NLL " << ps.val_nll << ") -> "
              << a.out << "\n";
    return 0;
  }

  // seeded shuffle, contiguous fold blocks
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(a.seed ^ 0xf01d5u);
  rng.shuffle(idx);

  std::vector<double> fold_nll;
  json files = json::array();
  for (std::size_t f = 0; f < a.folds; ++f) {
    const std::size_t lo = f * data.size() / a.folds;
    const std::size_t hi = (f + 1) * data.size() / a.folds;
    Dataset train_f, held_f;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      (i >= lo && i < hi ? held_f : train_f).push_back(data[idx[i]]);
    }
    MineConfig fold_cfg = mc;
    fold_cfg.seed = a.seed + f;
    PatternSet ps = mine(train_f, fold_cfg);
    ps.dataset_id = dataset_tag(a.train) + "#fold" + std::to_string(f);
    ps.config_hash = config_hash;
    const fs::path fold_path = with_suffix(a.out, ".fold" + std::to_string(f) + ".json");
    save_pattern_set(fold_path, ps);
    files.push_back(fold_path.string());

    std::vector<int> labels(held_f.size());
    for (std::size_t i = 0; i < held_f.size(); ++i) labels[i] = held_f[i].label;
    fold_nll.push_back(mean_nll(predict_dataset(ps, held_f, Semantics::hard()), labels));
  }

  double mean = 0.0;
  for (double v : fold_nll) mean += v;
  mean /= static_cast<double>(fold_nll.size());
  double var = 0.0;
  for (double v : fold_nll) var += (v - mean) * (v - mean);
  const double stdev = std::sqrt(var / static_cast<double>(fold_nll.size()));

  write_json_file(with_suffix(a.out, ".summary.json"),
                  json{{"folds", a.folds},
                       {"val_nll", fold_nll},
                       {"mean", mean},
                       {"std", stdev},
                       {"seed", a.seed},
                       {"config_hash", config_hash},
                       {"files", files}});
  std::cout << "held-out NLL " << mean << " +/- " << stdev << " over " << a.folds
            << " folds\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fit-hyper
// ---------------------------------------------------------------------------

struct FitHyperArgs {
  std::string train, patterns, out, config;
  double lr = 0.02;
  int epochs = 400;
  std::size_t batch = 0;
  std::uint64_t seed = 0;
};

int run_fit_hyper(FitHyperArgs a) {
  const json cfg = load_config_file(a.config);
  cfg_override(cfg, "train", a.train);
  cfg_override(cfg, "patterns", a.patterns);
  cfg_override(cfg, "out", a.out);
  cfg_override(cfg, "lr", a.lr);
  cfg_override(cfg, "epochs", a.epochs);
  cfg_override(cfg, "batch", a.batch);
  cfg_override(cfg, "seed", a.seed);

  const json effective{{"cmd", "fit-hyper"}, {"train", dataset_tag(a.train)},
                       {"patterns", dataset_tag(a.patterns)},
                       {"lr", a.lr},         {"epochs", a.epochs},
                       {"batch", a.batch},   {"seed", a.seed}};

  const Dataset data = load_dataset(a.train);
  const PatternSet ps = load_pattern_set(a.patterns);
  HyperConfig hc;
  hc.lr = a.lr;
  hc.epochs = a.epochs;
  hc.batch = a.batch;
  hc.seed = a.seed;
  HyperModel model = train_hyper(ps, data, hc, file_content_hash(a.patterns));

  json j = model.to_json();
  j["config"] = effective;
  j["config_hash"] = json_hash(effective);
  write_json_file(a.out, j);

  const double final_nll = model.epoch_losses().empty() ? model.loss(ps, data, hc.tau)
                                                        : model.epoch_losses().back();
  std::cout << "final train NLL " << final_nll << " -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string data, patterns, hyper_model, baseline, semantics = "hard", out, config;
  double tau = kDefaultTau;
};

int run_predict(PredictArgs a) {
  const json cfg = load_config_file(a.config);
  cfg_override(cfg, "data", a.data);
  cfg_override(cfg, "patterns", a.patterns);
  cfg_override(cfg, "hyper_model", a.hyper_model);
  cfg_override(cfg, "baseline", a.baseline);
  cfg_override(cfg, "semantics", a.semantics);
  cfg_override(cfg, "tau", a.tau);
  cfg_override(cfg, "out", a.out);

  if (a.semantics != "hard" && a.semantics != "soft") {
    std::cerr << "error: --semantics must be hard or soft\n";
    return 2;
  }
  const Semantics sem = a.semantics == "soft" ? Semantics::soft_at(a.tau) : Semantics::hard();
  const Dataset data = load_dataset(a.data);

  json effective{{"cmd", "predict"},      {"data", dataset_tag(a.data)},
                 {"semantics", a.semantics}, {"tau", a.tau},
                 {"baseline", a.baseline}};
  std::uint64_t seed = 0;

  std::vector<double> preds(data.size());
  std::vector<json> per_block(data.size(), json::array());

  if (a.baseline == "avelogit") {
    for (std::size_t i = 0; i < data.size(); ++i) preds[i] = ave_logit_baseline(data[i]);
  } else if (!a.baseline.empty()) {
    std::cerr << "error: unknown baseline '" << a.baseline << "'\n";
    return 2;
  } else {
    if (a.patterns.empty()) {
      std::cerr << "error: --patterns is required unless --baseline is given\n";
      return 2;
    }
    const PatternSet ps = load_pattern_set(a.patterns);
    effective["patterns"] = dataset_tag(a.patterns);
    seed = ps.seed;

    if (!a.hyper_model.empty()) {
      const HyperModel model = load_hyper(a.hyper_model);
      const std::string want = file_content_hash(a.patterns);
      if (model.bound_hash() != want) {
        throw StateError("hypernetwork was trained against a different pattern set (hash " +
                         model.bound_hash() + " != " + want + ")");
      }
      seed = model.seed();
      effective["hyper_model"] = dataset_tag(a.hyper_model);
      for_each_index(data.size(), [&](std::size_t i) {
        const auto thetas = model.predict_params(data[i]);
        json blocks = json::array();
        std::vector<BlockOutput> outs(ps.size());
        for (std::size_t k = 0; k < ps.size(); ++k) {
          const FittedPattern& pat = ps.block(k);
          BlockOutput blk;
          blk.polarity = pat.polarity;
          blk.rho = sem.soft
                        ? soft_robustness(pat.formula, thetas[k], data[i].signal, sem.tau)
                        : robustness_scalar(pat.formula, thetas[k], data[i].signal);
          blk.p = clip_prob(sigmoid(thetas[k].value("alpha") * clip_rho(blk.rho) +
                                    thetas[k].value("beta")));
          outs[k] = blk;
          blocks.push_back({{"name", pat.name}, {"rho", blk.rho}, {"p", blk.p}});
        }
        preds[i] = aggregate(outs, model.weight_logits());
        per_block[i] = std::move(blocks);
      });
    } else {
      for_each_index(data.size(), [&](std::size_t i) {
        json blocks = json::array();
        std::vector<BlockOutput> outs(ps.size());
        for (std::size_t k = 0; k < ps.size(); ++k) {
          outs[k] = block_score(ps.block(k), data[i].signal, sem);
          blocks.push_back(
              {{"name", ps.block(k).name}, {"rho", outs[k].rho}, {"p", outs[k].p}});
        }
        preds[i] = aggregate(outs, ps.weight_logits);
        per_block[i] = std::move(blocks);
      });
    }
  }

  std::ofstream out(a.out, std::ios::binary);
  if (!out) throw SchemaError("cannot write predictions: " + a.out);
  const std::string config_hash = json_hash(effective);
  for (std::size_t i = 0; i < data.size(); ++i) {
    json rec{{"id", data[i].id},
             {"p", preds[i]},
             {"label", data[i].label},
             {"per_block", per_block[i]}};
    if (i == 0) {
      rec["seed"] = seed;
      rec["config_hash"] = config_hash;
    }
    out << rec.dump() << "\n";
  }
  std::cout << "wrote " << data.size() << " predictions to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string preds, report, csv, config;
  std::size_t bins = 10;
};

int run_evaluate(EvaluateArgs a) {
  const json cfg = load_config_file(a.config);
  cfg_override(cfg, "preds", a.preds);
  cfg_override(cfg, "report", a.report);
  cfg_override(cfg, "csv", a.csv);
  cfg_override(cfg, "B", a.bins);

  std::uint64_t seed = 0;
  const auto records = load_predictions(a.preds, &seed);
  std::vector<double> p(records.size());
  std::vector<int> labels(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    p[i] = records[i].p;
    labels[i] = records[i].label;
  }
  const CalibrationReport rep = calibration_report(p, labels, a.bins);

  std::cout << "ECE " << rep.ece << "  Brier " << rep.brier << "  AUROC ";
  if (rep.auroc) {
    std::cout << *rep.auroc;
  } else {
    std::cout << "undefined";
  }
  std::cout << "  (n=" << rep.n << ", B=" << a.bins << ")\n";

  const json effective{{"cmd", "evaluate"}, {"preds", dataset_tag(a.preds)}, {"B", a.bins}};
  json bins = json::array();
  for (const auto& b : rep.bins) {
    bins.push_back({{"bin_lo", b.lo},
                    {"bin_hi", b.hi},
                    {"count", b.count},
                    {"conf", b.mean_confidence},
                    {"acc", b.accuracy}});
  }
  write_json_file(a.report, json{{"ece", rep.ece},
                                 {"brier", rep.brier},
                                 {"auroc", rep.auroc ? json(*rep.auroc) : json(nullptr)},
                                 {"bins", bins},
                                 {"n", rep.n},
                                 {"seed", seed},
                                 {"config_hash", json_hash(effective)}});
  if (!a.csv.empty()) {
    std::ofstream csv(a.csv, std::ios::binary);
    if (!csv) throw SchemaError("cannot write csv: " + a.csv);
    csv << bins_to_csv(rep.bins);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct JaccardArgs {
  std::string a, b, polarity = "both", out;
};

int run_jaccard(JaccardArgs args) {
  const PatternSet pa = load_pattern_set(args.a);
  const PatternSet pb = load_pattern_set(args.b);
  json result = json::object();
  if (args.polarity == "pos" || args.polarity == "both") {
    result["pos"] = jaccard_similarity(pa, pb, Polarity::Positive);
  }
  if (args.polarity == "neg" || args.polarity == "both") {
    result["neg"] = jaccard_similarity(pa, pb, Polarity::Negative);
  }
  if (result.empty()) {
    std::cerr << "error: --polarity must be pos, neg or both\n";
    return 2;
  }
  for (const auto& [key, value] : result.items()) {
    std::cout << "jaccard " << key << " = " << value.get<double>() << "\n";
  }
  if (!args.out.empty()) {
    const json effective{{"cmd", "analyze-jaccard"},
                         {"a", dataset_tag(args.a)},
                         {"b", dataset_tag(args.b)},
                         {"polarity", args.polarity}};
    result["seed"] = std::max(pa.seed, pb.seed);
    result["config_hash"] = json_hash(effective);
    write_json_file(args.out, result);
  }
  return 0;
}

struct ParamMaeArgs {
  std::vector<std::string> inputs;
  std::string grouping = "threshold", model, data, patterns, out;
};

ParamGroup parse_grouping(const std::string& name) {
  if (name == "time") return ParamGroup::Time;
  if (name == "threshold") return ParamGroup::Threshold;
  if (name == "difference") return ParamGroup::Difference;
  throw SchemaError("grouping must be time, threshold or difference");
}

int run_param_mae(ParamMaeArgs args) {
  const ParamGroup group = parse_grouping(args.grouping);
  double value = 0.0;
  std::uint64_t seed = 0;

  if (!args.model.empty()) {
    // per-question vectors predicted by a hypernetwork
    if (args.data.empty() || args.patterns.empty()) {
      std::cerr << "error: --model needs --data and --patterns\n";
      return 2;
    }
    const HyperModel model = load_hyper(args.model);
    const PatternSet ps = load_pattern_set(args.patterns);
    if (model.bound_hash() != file_content_hash(args.patterns)) {
      throw StateError("hypernetwork was trained against a different pattern set");
    }
    const Dataset data = load_dataset(args.data);
    seed = model.seed();
    double acc = 0.0;
    std::size_t samples = 0;
    for (std::size_t k = 0; k < ps.size(); ++k) {
      std::vector<ParamVector> vectors;
      vectors.reserve(data.size());
      for (const auto& inst : data) vectors.push_back(model.predict_params(inst)[k]);
      // accumulate this pattern's pairwise differences into the global mean
      for (std::size_t p = 0; p < vectors.size(); ++p) {
        for (std::size_t q = p + 1; q < vectors.size(); ++q) {
          for (const auto& e : vectors[p].entries()) {
            if (group_of(e.role) != group) continue;
            acc += std::fabs(e.value - vectors[q].value(e.name));
            ++samples;
          }
        }
      }
    }
    value = samples == 0 ? 0.0 : acc / static_cast<double>(samples);
  } else {
    if (args.inputs.size() < 2) {
      std::cerr << "error: param-mae needs at least two --inputs files (or --model)\n";
      return 2;
    }
    std::vector<PatternSet> sets;
    for (const auto& path : args.inputs) sets.push_back(load_pattern_set(path));
    seed = sets.front().seed;

    // match patterns across files by polarity, skeleton and occurrence index
    auto keyed = [](const PatternSet& ps) {
      std::map<std::string, std::vector<const FittedPattern*>> by_key;
      for (const auto& p : ps.pos) by_key["+" + p.skeleton].push_back(&p);
      for (const auto& p : ps.neg) by_key["-" + p.skeleton].push_back(&p);
      return by_key;
    };
    std::vector<std::map<std::string, std::vector<const FittedPattern*>>> maps;
    for (const auto& s : sets) maps.push_back(keyed(s));

    double acc = 0.0;
    std::size_t samples = 0;
    for (const auto& [key, firsts] : maps.front()) {
      for (std::size_t occ = 0; occ < firsts.size(); ++occ) {
        std::vector<ParamVector> vectors;
        for (const auto& m : maps) {
          auto it = m.find(key);
          if (it != m.end() && occ < it->second.size()) {
            vectors.push_back(it->second[occ]->theta);
          }
        }
        if (vectors.size() < 2) continue;
        for (std::size_t p = 0; p < vectors.size(); ++p) {
          for (std::size_t q = p + 1; q < vectors.size(); ++q) {
            for (const auto& e : vectors[p].entries()) {
              if (group_of(e.role) != group) continue;
              acc += std::fabs(e.value - vectors[q].value(e.name));
              ++samples;
            }
          }
        }
      }
    }
    value = samples == 0 ? 0.0 : acc / static_cast<double>(samples);
  }

  std::cout << "param_mae " << args.grouping << " = " << value << "\n";
  if (!args.out.empty()) {
    const json effective{{"cmd", "analyze-param-mae"}, {"grouping", args.grouping}};
    write_json_file(args.out, json{{"grouping", args.grouping},
                                   {"value", value},
                                   {"seed", seed},
                                   {"config_hash", json_hash(effective)}});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"discriminative STL mining and calibrated confidence estimation"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0 = runtime default, 1 = serial)");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic labeled dataset");
  synth_cmd->add_option("--scenario", synth_args.scenario,
                        "stable_high|sharp_drop|oscillate|gain|instance_threshold")
      ->required();
  synth_cmd->add_option("--n", synth_args.n, "number of instances")->required();
  synth_cmd->add_option("--seed", synth_args.seed, "generator seed")->required();
  synth_cmd->add_option("--out", synth_args.out, "output dataset (JSONL)")->required();
  synth_cmd->add_option("--config", synth_args.config, "JSON config overriding flags");

  MineArgs mine_args;
  auto* mine_cmd = app.add_subcommand("mine", "mine discriminative STL patterns");
  mine_cmd->add_option("--train", mine_args.train, "training dataset (JSONL)")->required();
  mine_cmd->add_option("--out", mine_args.out, "pattern-set output (JSON)")->required();
  mine_cmd->add_option("--n-pos", mine_args.n_pos, "positive patterns to select");
  mine_cmd->add_option("--n-neg", mine_args.n_neg, "negative patterns to select");
  mine_cmd->add_option("-K,--beam", mine_args.beam, "top-K beam into composition");
  mine_cmd->add_option("--folds", mine_args.folds, "cross-validation folds");
  mine_cmd->add_option("--val-fraction", mine_args.val_fraction, "validation fraction");
  mine_cmd->add_option("--seed", mine_args.seed, "mining seed")->required();
  mine_cmd->add_option("--config", mine_args.config, "JSON config overriding flags");

  FitHyperArgs hyper_args;
  auto* hyper_cmd = app.add_subcommand("fit-hyper", "train the parameter hypernetwork");
  hyper_cmd->add_option("--train", hyper_args.train, "training dataset (JSONL)")->required();
  hyper_cmd->add_option("--patterns", hyper_args.patterns, "pattern-set file")->required();
  hyper_cmd->add_option("--out", hyper_args.out, "model output (JSON)")->required();
  hyper_cmd->add_option("--lr", hyper_args.lr, "learning rate");
  hyper_cmd->add_option("--epochs", hyper_args.epochs, "training epochs");
  hyper_cmd->add_option("--batch", hyper_args.batch, "batch size (0 = full batch)");
  hyper_cmd->add_option("--seed", hyper_args.seed, "training seed")->required();
  hyper_cmd->add_option("--config", hyper_args.config, "JSON config overriding flags");

  PredictArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "score a dataset");
  predict_cmd->add_option("--data", predict_args.data, "dataset (JSONL)")->required();
  predict_cmd->add_option("--patterns", predict_args.patterns, "pattern-set file");
  predict_cmd->add_option("--hyper-model", predict_args.hyper_model,
                          "hypernetwork model for instance-adaptive parameters");
  predict_cmd->add_option("--baseline", predict_args.baseline, "avelogit");
  predict_cmd->add_option("--semantics", predict_args.semantics, "hard|soft (default hard)");
  predict_cmd->add_option("--tau", predict_args.tau, "soft semantics temperature");
  predict_cmd->add_option("--out", predict_args.out, "predictions output (JSONL)")->required();
  predict_cmd->add_option("--config", predict_args.config, "JSON config overriding flags");

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "compute calibration metrics");
  eval_cmd->add_option("--preds", eval_args.preds, "predictions (JSONL)")->required();
  eval_cmd->add_option("-B,--bins", eval_args.bins, "reliability bins");
  eval_cmd->add_option("--report", eval_args.report, "report output (JSON)")->required();
  eval_cmd->add_option("--csv", eval_args.csv, "optional reliability-bin CSV");
  eval_cmd->add_option("--config", eval_args.config, "JSON config overriding flags");

  auto* analyze_cmd = app.add_subcommand("analyze", "pattern-set analyses");
  analyze_cmd->require_subcommand(1);
  JaccardArgs jaccard_args;
  auto* jaccard_cmd = analyze_cmd->add_subcommand("jaccard", "skeleton Jaccard similarity");
  jaccard_cmd->add_option("--a", jaccard_args.a, "first pattern set")->required();
  jaccard_cmd->add_option("--b", jaccard_args.b, "second pattern set")->required();
  jaccard_cmd->add_option("--polarity", jaccard_args.polarity, "pos|neg|both");
  jaccard_cmd->add_option("--out", jaccard_args.out, "optional JSON output");

  ParamMaeArgs mae_args;
  auto* mae_cmd = analyze_cmd->add_subcommand("param-mae", "parameter variability (MAE)");
  mae_cmd->add_option("--inputs", mae_args.inputs, "pattern-set files to compare");
  mae_cmd->add_option("--grouping", mae_args.grouping, "time|threshold|difference");
  mae_cmd->add_option("--model", mae_args.model, "hypernetwork for per-question vectors");
  mae_cmd->add_option("--data", mae_args.data, "dataset for per-question vectors");
  mae_cmd->add_option("--patterns", mae_args.patterns, "pattern set bound to --model");
  mae_cmd->add_option("--out", mae_args.out, "optional JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  configure_threads(threads);
  try {
    if (synth_cmd->parsed()) return run_synth(synth_args);
    if (mine_cmd->parsed()) return run_mine(mine_args);
    if (hyper_cmd->parsed()) return run_fit_hyper(hyper_args);
    if (predict_cmd->parsed()) return run_predict(predict_args);
    if (eval_cmd->parsed()) return run_evaluate(eval_args);
    if (analyze_cmd->parsed()) {
      if (jaccard_cmd->parsed()) return run_jaccard(jaccard_args);
      if (mae_cmd->parsed()) return run_param_mae(mae_args);
    }
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const EmptyTrace& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
