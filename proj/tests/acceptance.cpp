// Acceptance suite: one test case per release criterion, each printing a
// single PASS/FAIL line. Pipeline-level criteria drive the actual CLI binary;
// numeric criteria exercise the library directly against independent oracles.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "stlcal/estimator.hpp"
#include "stlcal/hyper.hpp"
#include "stlcal/metrics.hpp"
#include "stlcal/miner.hpp"
#include "stlcal/patterns.hpp"
#include "stlcal/synth.hpp"
#include "stlcal/trace.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stlcal;
using namespace stlcal::testing;
using Clock = std::chrono::steady_clock;

namespace {

const std::string kCli = STLCAL_CLI_PATH;

fs::path work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "stlcal_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  return WEXITSTATUS(std::system(cmd.c_str()));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

void verdict(int criterion, bool ok, const std::string& what) {
  std::printf("[criterion %2d] %s  %s\n", criterion, ok ? "PASS" : "FAIL", what.c_str());
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// shared random corpus for criteria 1 and 2
struct CorpusCase {
  Formula formula;
  ParamVector theta;
  ConfidenceSignal signal;
};

const std::vector<CorpusCase>& corpus() {
  static const std::vector<CorpusCase> cases = [] {
    std::vector<CorpusCase> out;
    Rng rng(1000003);
    GenOptions opt;
    opt.max_depth = 3;
    opt.n_lifted = 2;
    for (int i = 0; i < 1000; ++i) {
      CorpusCase c;
      c.signal = gen_signal(rng, 6, 2);
      auto [f, pv] = gen_formula(rng, opt);
      c.formula = std::move(f);
      c.theta = std::move(pv);
      out.push_back(std::move(c));
    }
    return out;
  }();
  return cases;
}

std::pair<double, double> ece_auroc(const std::string& preds_path,
                                    const std::string& report_path) {
  REQUIRE(run("evaluate --preds " + preds_path + " --report " + report_path) == 0);
  const json rep = load_json(report_path);
  REQUIRE(rep["auroc"].is_number());
  return {rep["ece"].get<double>(), rep["auroc"].get<double>()};
}

void split_jsonl(const std::string& src, const std::string& head_path, std::size_t head_n,
                 const std::string& tail_path) {
  std::ifstream in(src, std::ios::binary);
  std::ofstream head(head_path, std::ios::binary);
  std::ofstream tail(tail_path, std::ios::binary);
  std::string line;
  std::size_t i = 0;
  while (std::getline(in, line)) {
    (i++ < head_n ? head : tail) << line << "\n";
  }
}

void write_pattern_file(const std::string& out, const std::vector<std::string>& pos_formulas,
                        const std::vector<std::string>& neg_formulas) {
  auto block = [](const std::string& text) {
    auto [f, pv] = parse_formula(text);
    json theta = json::object();
    for (const auto& e : pv.entries()) theta[e.name] = e.value;
    theta["alpha"] = 1.0;
    theta["beta"] = 0.0;
    return json{{"name", text},      {"formula", text}, {"theta", theta},
                {"train_loss", 0.0}, {"val_loss", 0.0}, {"skeleton", canonical_skeleton(f)}};
  };
  json pos = json::array(), neg = json::array();
  for (const auto& t : pos_formulas) pos.push_back(block(t));
  for (const auto& t : neg_formulas) neg.push_back(block(t));
  std::ofstream f(out, std::ios::binary);
  f << json{{"pos", pos},  {"neg", neg}, {"weights", json::object()},
            {"seed", 0},   {"config", json::object()}}
           .dump(2)
    << "\n";
}

}  // namespace

TEST_CASE("criterion 1: semantics oracle") {
  const auto t0 = Clock::now();
  std::size_t mismatches = 0;
  std::size_t checks = 0;
  for (const auto& c : corpus()) {
    for (std::size_t t = 0; t < c.signal.size(); ++t) {
      const double impl = robustness_at(c.formula, c.theta, c.signal, t);
      const double oracle = oracle_robustness(c.formula, c.theta, c.signal, t);
      if (std::memcmp(&impl, &oracle, sizeof(double)) != 0) ++mismatches;
      ++checks;
    }
  }
  const double elapsed = seconds_since(t0);
  const bool ok = mismatches == 0 && elapsed < 5.0 && checks >= 1000;
  verdict(1, ok,
          "robustness matches the brute-force oracle bitwise on 1000 random cases (" +
              std::to_string(checks) + " evaluations, " + std::to_string(elapsed) + " s)");
  CHECK(mismatches == 0);
  CHECK(elapsed < 5.0);
}

TEST_CASE("criterion 2: soft convergence at tau = 1000") {
  // pure min/max trees: one temporal window over a predicate, where the
  // log-sum-exp bound log(window)/tau holds unconditionally
  const double bound = std::log(6.0) / 1000.0 + 1e-9;
  std::size_t cases = 0;
  double worst = 0.0;
  for (const auto& c : corpus()) {
    const Formula& f = c.formula;
    const bool single_window =
        (f.kind == Formula::Kind::Always || f.kind == Formula::Kind::Eventually) &&
        f.children[0].kind == Formula::Kind::Pred;
    if (!single_window) continue;
    const double hard = robustness_scalar(f, c.theta, c.signal);
    const double soft = soft_robustness(f, c.theta, c.signal, 1000.0);
    worst = std::max(worst, std::fabs(soft - hard));
    ++cases;
  }
  const bool ok = cases >= 50 && worst <= bound;
  verdict(2, ok,
          "|soft(1000) - hard| <= log(6)/1000 + 1e-9 on " + std::to_string(cases) +
              " pure min/max trees (worst " + std::to_string(worst) + ")");
  CHECK(cases >= 50);
  CHECK(worst <= bound);
}

TEST_CASE("criterion 3: metric oracles") {
  bool ok = true;
  // hand-derived examples, exact
  ok &= ece({1.0, 1.0}, {1, 1}, 10) == 0.0;
  ok &= ece({0.9, 0.9, 0.1, 0.1}, {1, 0, 0, 1}, 10) == 0.4;
  ok &= ece({0.5}, {1}, 1) == 0.5;
  ok &= brier({1.0, 0.0}, {1, 0}) == 0.0;
  ok &= brier({0.5, 0.5}, {1, 0}) == 0.25;
  ok &= brier({0.8}, {0}) == 0.8 * 0.8;
  ok &= *auroc({0.9, 0.1}, {1, 0}) == 1.0;
  ok &= *auroc({0.4, 0.4, 0.4}, {1, 0, 1}) == 0.5;
  ok &= *auroc({0.9, 0.8, 0.7}, {1, 0, 1}) == 0.5;
  CHECK(ok);

  // rank-sum AUROC against the all-pairs oracle on 200 random sets
  Rng rng(808);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.index(100);
    std::vector<double> p(n);
    std::vector<int> c(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<double>(rng.index(16)) / 15.0;
      c[i] = rng.uniform() < 0.5 ? 1 : 0;
    }
    double wins = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (c[i] != 1) continue;
      ++n_pos;
      for (std::size_t j = 0; j < n; ++j) {
        if (c[j] != 0) continue;
        wins += p[i] > p[j] ? 1.0 : (p[i] == p[j] ? 0.5 : 0.0);
      }
    }
    const std::size_t n_neg = n - n_pos;
    const auto fast = auroc(p, c);
    if (n_pos == 0 || n_neg == 0) {
      if (fast.has_value()) ++mismatches;
      continue;
    }
    const double oracle = wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
    if (!fast || *fast != oracle) ++mismatches;
  }
  verdict(3, ok && mismatches == 0,
          "ECE/Brier/AUROC reproduce the hand examples exactly; AUROC matches the "
          "all-pairs oracle on 200 random sets");
  CHECK(mismatches == 0);
}

TEST_CASE("criterion 4: mining recovery on sharp_drop") {
  REQUIRE(run("synth --scenario sharp_drop --n 400 --seed 7 --out " + path("c4.jsonl")) == 0);
  const auto t0 = Clock::now();
  REQUIRE(run("--threads 1 mine --train " + path("c4.jsonl") + " --out " + path("c4.pat.json") +
              " --seed 7") == 0);
  const double mine_seconds = seconds_since(t0);

  REQUIRE(run("synth --scenario sharp_drop --n 200 --seed 8 --out " + path("c4test.jsonl")) == 0);
  REQUIRE(run("predict --data " + path("c4test.jsonl") + " --patterns " + path("c4.pat.json") +
              " --out " + path("c4.preds.jsonl")) == 0);
  const auto [ece_v, auroc_v] = ece_auroc(path("c4.preds.jsonl"), path("c4.rep.json"));
  (void)ece_v;

  const json ps = load_json(path("c4.pat.json"));
  bool has_drop_skeleton = false;
  for (const auto& p : ps["neg"]) {
    if (p["skeleton"] == "(F ? ? (le d ?))") has_drop_skeleton = true;
  }
  const bool ok = auroc_v >= 0.95 && has_drop_skeleton && mine_seconds < 60.0;
  verdict(4, ok,
          "held-out AUROC " + std::to_string(auroc_v) +
              " >= 0.95, selected negatives contain the planted drop skeleton, mining took " +
              std::to_string(mine_seconds) + " s single-threaded");
  CHECK(auroc_v >= 0.95);
  CHECK(has_drop_skeleton);
  CHECK(mine_seconds < 60.0);
}

TEST_CASE("criterion 5: calibration on stable_high") {
  REQUIRE(run("synth --scenario stable_high --n 400 --seed 20 --out " + path("c5.jsonl")) == 0);
  REQUIRE(run("mine --train " + path("c5.jsonl") + " --out " + path("c5.pat.json") +
              " --seed 20") == 0);
  REQUIRE(run("synth --scenario stable_high --n 200 --seed 21 --out " + path("c5test.jsonl")) == 0);
  REQUIRE(run("predict --data " + path("c5test.jsonl") + " --patterns " + path("c5.pat.json") +
              " --out " + path("c5.preds.jsonl")) == 0);
  REQUIRE(run("evaluate --preds " + path("c5.preds.jsonl") + " --report " +
              path("c5.rep.json") + " -B 10") == 0);
  const json rep = load_json(path("c5.rep.json"));
  const double ece_v = rep["ece"].get<double>();
  const double brier_v = rep["brier"].get<double>();
  const bool ok = ece_v <= 0.05 && brier_v <= 0.10;
  verdict(5, ok,
          "test ECE " + std::to_string(ece_v) + " <= 0.05 and Brier " +
              std::to_string(brier_v) + " <= 0.10 after the mapping fit");
  CHECK(ece_v <= 0.05);
  CHECK(brier_v <= 0.10);
}

TEST_CASE("criterion 6: hypernetwork value on instance_threshold") {
  double ece_gap_sum = 0.0, auroc_gap_sum = 0.0;
  const std::vector<std::uint64_t> seeds{41, 42, 43};
  for (const auto seed : seeds) {
    const std::string tag = "c6s" + std::to_string(seed);
    REQUIRE(run("synth --scenario instance_threshold --n 800 --seed " + std::to_string(seed) +
                " --out " + path(tag + ".jsonl")) == 0);
    split_jsonl(path(tag + ".jsonl"), path(tag + ".train.jsonl"), 600,
                path(tag + ".test.jsonl"));

    REQUIRE(run("mine --train " + path(tag + ".train.jsonl") + " --out " +
                path(tag + ".pat.json") + " --seed " + std::to_string(seed)) == 0);
    REQUIRE(run("predict --data " + path(tag + ".test.jsonl") + " --patterns " +
                path(tag + ".pat.json") + " --out " + path(tag + ".fixed.jsonl")) == 0);
    const auto [fixed_ece, fixed_auroc] =
        ece_auroc(path(tag + ".fixed.jsonl"), path(tag + ".fixed.rep.json"));

    REQUIRE(run("fit-hyper --train " + path(tag + ".train.jsonl") + " --patterns " +
                path(tag + ".pat.json") + " --out " + path(tag + ".model.json") + " --seed " +
                std::to_string(seed)) == 0);
    REQUIRE(run("predict --data " + path(tag + ".test.jsonl") + " --patterns " +
                path(tag + ".pat.json") + " --hyper-model " + path(tag + ".model.json") +
                " --out " + path(tag + ".hyper.jsonl")) == 0);
    const auto [hyper_ece, hyper_auroc] =
        ece_auroc(path(tag + ".hyper.jsonl"), path(tag + ".hyper.rep.json"));

    ece_gap_sum += fixed_ece - hyper_ece;
    auroc_gap_sum += hyper_auroc - fixed_auroc;
  }
  const double mean_ece_gap = ece_gap_sum / static_cast<double>(seeds.size());
  const double mean_auroc_gap = auroc_gap_sum / static_cast<double>(seeds.size());
  const bool ok = mean_ece_gap >= 0.03 && mean_auroc_gap >= 0.05;
  verdict(6, ok,
          "fixed-vs-hypernetwork ECE gap " + std::to_string(mean_ece_gap) +
              " >= 0.03 and AUROC gap " + std::to_string(mean_auroc_gap) +
              " >= 0.05 over 3 seeds");
  CHECK(mean_ece_gap >= 0.03);
  CHECK(mean_auroc_gap >= 0.05);
}

TEST_CASE("criterion 7: template-count shape on mixed data") {
  REQUIRE(run("synth --scenario sharp_drop --n 200 --seed 51 --out " + path("c7a.jsonl")) == 0);
  REQUIRE(run("synth --scenario oscillate --n 200 --seed 52 --out " + path("c7b.jsonl")) == 0);
  std::ofstream mixed(path("c7.jsonl"), std::ios::binary);
  mixed << slurp(path("c7a.jsonl")) << slurp(path("c7b.jsonl"));
  mixed.close();

  REQUIRE(run("mine --train " + path("c7.jsonl") + " --out " + path("c7.55.json") +
              " --n-pos 5 --n-neg 5 --seed 53") == 0);
  REQUIRE(run("mine --train " + path("c7.jsonl") + " --out " + path("c7.11.json") +
              " --n-pos 1 --n-neg 1 --seed 53") == 0);
  const double nll55 = load_json(path("c7.55.json"))["val_nll"].get<double>();
  const double nll11 = load_json(path("c7.11.json"))["val_nll"].get<double>();
  const bool ok = nll55 <= nll11;
  verdict(7, ok,
          "5+5 validation NLL " + std::to_string(nll55) + " <= 1+1 validation NLL " +
              std::to_string(nll11));
  CHECK(nll55 <= nll11);
}

TEST_CASE("criterion 8: hypernetwork gradient check") {
  PatternSet ps;
  {
    const auto data = generate(Scenario::SharpDrop, 80, 61).data;
    MineConfig mc;
    mc.n_pos = 2;
    mc.n_neg = 2;
    mc.seed = 61;
    ps = mine(data, mc);
  }
  auto model = HyperModel::create(ps, "grad-check", 62);
  Rng rng(63);
  auto flat = model.flat_params();
  for (auto& w : flat) w += rng.uniform(-0.25, 0.25);
  model.set_flat_params(flat);

  const double tau = 20.0;
  const double h = 1e-4;
  double worst_rel = 0.0;
  std::size_t checked = 0;
  for (int i = 0; i < 20; ++i) {
    Dataset one;
    {
      LabeledInstance inst;
      const std::size_t n = 3 + rng.index(6);
      std::vector<double> v(n);
      for (auto& x : v) x = rng.uniform();
      inst.signal = ConfidenceSignal::from_values(std::move(v));
      inst.question = "probe " + std::to_string(i);
      inst.label = i % 2;
      one.push_back(std::move(inst));
    }
    auto [loss, grad] = model.loss_and_grad(ps, one, tau);
    (void)loss;
    for (int probe = 0; probe < 40; ++probe) {
      const std::size_t p = rng.index(flat.size());
      auto up = flat, down = flat;
      up[p] += h;
      down[p] -= h;
      HyperModel m_up = model, m_down = model;
      m_up.set_flat_params(up);
      m_down.set_flat_params(down);
      const double fd = (m_up.loss(ps, one, tau) - m_down.loss(ps, one, tau)) / (2.0 * h);
      const double scale = std::max(std::fabs(grad[p]), std::fabs(fd));
      if (scale < 1e-8) continue;
      worst_rel = std::max(worst_rel, std::fabs(grad[p] - fd) / scale);
      ++checked;
    }
  }
  const bool ok = checked >= 100 && worst_rel <= 1e-3;
  verdict(8, ok,
          "analytic gradients match central differences within rel. " +
              std::to_string(worst_rel) + " over " + std::to_string(checked) + " coordinates");
  CHECK(checked >= 100);
  CHECK(worst_rel <= 1e-3);
}

TEST_CASE("criterion 9: end-to-end determinism") {
  for (const char* tag : {"deta", "detb"}) {
    const fs::path dir = work_dir() / tag;
    fs::create_directories(dir);
    const auto in = [&](const std::string& name) { return (dir / name).string(); };
    REQUIRE(run("synth --scenario instance_threshold --n 150 --seed 71 --out " +
                in("d.jsonl")) == 0);
    REQUIRE(run("mine --train " + in("d.jsonl") + " --out " + in("pat.json") +
                " --n-pos 3 --n-neg 3 --seed 71") == 0);
    REQUIRE(run("fit-hyper --train " + in("d.jsonl") + " --patterns " + in("pat.json") +
                " --out " + in("model.json") + " --epochs 120 --seed 71") == 0);
    REQUIRE(run("predict --data " + in("d.jsonl") + " --patterns " + in("pat.json") +
                " --out " + in("fixed.jsonl")) == 0);
    REQUIRE(run("predict --data " + in("d.jsonl") + " --patterns " + in("pat.json") +
                " --hyper-model " + in("model.json") + " --out " + in("hyper.jsonl")) == 0);
    REQUIRE(run("evaluate --preds " + in("hyper.jsonl") + " --report " + in("rep.json")) == 0);
  }
  bool identical = true;
  for (const char* name :
       {"d.jsonl", "pat.json", "model.json", "fixed.jsonl", "hyper.jsonl", "rep.json"}) {
    const bool same = slurp(work_dir() / "deta" / name) == slurp(work_dir() / "detb" / name);
    identical = identical && same;
    CHECK(same);
  }
  verdict(9, identical,
          "two identical pipeline runs produce byte-identical pattern, model, prediction "
          "and report files");
}

TEST_CASE("criterion 10: jaccard and parameter-MAE analyses") {
  const std::string g = "(G 0.0 1.0 (ge s 0.5))";
  const std::string fle = "(F 0.0 1.0 (le s 0.3))";
  const std::string var = "(varle 0.01)";

  write_pattern_file(path("jacA.json"), {g, fle}, {});
  write_pattern_file(path("jacB.json"), {g, fle}, {});
  write_pattern_file(path("jacC.json"), {var}, {});
  write_pattern_file(path("jacD.json"), {fle, var}, {});

  auto jaccard_of = [&](const std::string& a, const std::string& b) {
    const std::string out = path("jac.out.json");
    REQUIRE(run("analyze jaccard --a " + a + " --b " + b + " --polarity pos --out " + out) == 0);
    return load_json(out)["pos"].get<double>();
  };
  const double identical = jaccard_of(path("jacA.json"), path("jacB.json"));
  const double disjoint = jaccard_of(path("jacA.json"), path("jacC.json"));
  const double third = jaccard_of(path("jacA.json"), path("jacD.json"));

  write_pattern_file(path("mae1.json"), {"(G 0.0 1.0 (ge s 0.2))"}, {});
  write_pattern_file(path("mae2.json"), {"(G 0.0 1.0 (ge s 0.4))"}, {});
  write_pattern_file(path("mae3.json"), {"(G 0.0 1.0 (ge s 0.1))"}, {});

  auto mae_of = [&](const std::vector<std::string>& files) {
    const std::string out = path("mae.out.json");
    std::string inputs;
    for (const auto& f : files) inputs += " " + f;
    REQUIRE(run("analyze param-mae --inputs" + inputs + " --grouping threshold --out " + out) ==
            0);
    return load_json(out)["value"].get<double>();
  };
  const double mae_same = mae_of({path("mae1.json"), path("mae1.json")});
  const double mae_pair = mae_of({path("mae1.json"), path("mae2.json")});
  const double mae_triple = mae_of({path("mae3.json"), path("mae1.json"), path("mae2.json")});
  const double expected_triple =
      (std::fabs(0.1 - 0.2) + std::fabs(0.1 - 0.4) + std::fabs(0.2 - 0.4)) / 3.0;

  const bool ok = identical == 1.0 && disjoint == 0.0 && third == 1.0 / 3.0 &&
                  mae_same == 0.0 && mae_pair == 0.2 && mae_triple == expected_triple;
  verdict(10, ok, "jaccard 1.0 / 0.0 / 1/3 and parameter MAE 0.0 / 0.2 reproduced exactly");
  CHECK(identical == 1.0);
  CHECK(disjoint == 0.0);
  CHECK(third == 1.0 / 3.0);
  CHECK(mae_same == 0.0);
  CHECK(mae_pair == 0.2);
  CHECK(mae_triple == expected_triple);
}
