#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "stlcal/trace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = STLCAL_CLI_PATH;

fs::path work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "stlcal_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

std::string path(const std::string& name) { return (work_dir() / name).string(); }

}  // namespace

TEST_CASE("synth writes the dataset and its oracle sidecar") {
  REQUIRE(run("synth --scenario sharp_drop --n 60 --seed 7 --out " + path("d.jsonl")) == 0);
  const auto data = stlcal::load_dataset(path("d.jsonl"));
  CHECK(data.size() == 60);

  const json oracle = load_json(path("d.oracle.json"));
  CHECK(oracle["scenario"] == "sharp_drop");
  CHECK(oracle["seed"] == 7);
  CHECK(oracle["formula"].is_string());
  CHECK(oracle.contains("config_hash"));
}

TEST_CASE("usage and IO problems exit with code 2") {
  CHECK(run("") == 2);
  CHECK(run("synth --scenario nope --n 10 --seed 1 --out " + path("x.jsonl")) == 2);
  CHECK(run("synth --scenario gain --n 10 --out " + path("x.jsonl")) == 2);  // missing seed
  CHECK(run("mine --train " + path("missing.jsonl") + " --out " + path("p.json") +
            " --seed 1") == 2);
  CHECK(run("mine --train " + path("d.jsonl") + " --out " + path("p.json") +
            " --seed 1 --n-pos 0 --n-neg 0") == 2);
  CHECK(run("synth --scenario gain --n 10 --seed 1 --out /nonexistent-dir/x.jsonl") == 2);
  CHECK(run("--help") == 0);
}

TEST_CASE("data and model problems exit with code 3") {
  // single-class dataset
  const auto data = stlcal::load_dataset(path("d.jsonl"));
  stlcal::Dataset ones;
  for (const auto& inst : data) {
    if (inst.label == 1) ones.push_back(inst);
  }
  stlcal::save_dataset(path("ones.jsonl"), ones);
  CHECK(run("mine --train " + path("ones.jsonl") + " --out " + path("p.json") +
            " --seed 1") == 3);
}

TEST_CASE("mine then predict then evaluate") {
  REQUIRE(run("synth --scenario stable_high --n 160 --seed 3 --out " + path("tr.jsonl")) == 0);
  REQUIRE(run("synth --scenario stable_high --n 80 --seed 4 --out " + path("te.jsonl")) == 0);
  REQUIRE(run("mine --train " + path("tr.jsonl") + " --out " + path("pat.json") +
              " --n-pos 3 --n-neg 3 --seed 3") == 0);

  const json ps = load_json(path("pat.json"));
  CHECK(ps["pos"].size() == 3);
  CHECK(ps["neg"].size() == 3);
  CHECK(ps["seed"] == 3);
  CHECK(ps.contains("config_hash"));
  CHECK(ps.contains("weights"));
  for (const auto& p : ps["pos"]) {
    CHECK(p.contains("formula"));
    CHECK(p["theta"].contains("alpha"));
    CHECK(p["theta"].contains("beta"));
    CHECK(p.contains("val_loss"));
  }

  REQUIRE(run("predict --data " + path("te.jsonl") + " --patterns " + path("pat.json") +
              " --out " + path("preds.jsonl")) == 0);
  // one line per instance; provenance on the first line only
  std::istringstream lines(slurp(path("preds.jsonl")));
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    const json rec = json::parse(line);
    CHECK(rec.contains("id"));
    CHECK(rec.contains("p"));
    CHECK(rec.contains("label"));
    CHECK(rec.contains("per_block"));
    CHECK(rec["per_block"].size() == 6);
    if (count == 0) {
      CHECK(rec.contains("seed"));
      CHECK(rec.contains("config_hash"));
    }
    ++count;
  }
  CHECK(count == 80);

  REQUIRE(run("evaluate --preds " + path("preds.jsonl") + " --report " + path("rep.json") +
              " --csv " + path("bins.csv")) == 0);
  const json rep = load_json(path("rep.json"));
  CHECK(rep["n"] == 80);
  CHECK(rep["bins"].size() == 10);
  CHECK(rep["ece"].is_number());
  CHECK(rep["auroc"].is_number());
  CHECK(rep.contains("config_hash"));
  const std::string csv = slurp(path("bins.csv"));
  CHECK(csv.rfind("bin_lo,bin_hi,count,conf,acc\n", 0) == 0);
}

TEST_CASE("avelogit baseline predicts the mean signal") {
  REQUIRE(run("predict --data " + path("te.jsonl") + " --baseline avelogit --out " +
              path("base.jsonl")) == 0);
  const auto data = stlcal::load_dataset(path("te.jsonl"));
  std::istringstream lines(slurp(path("base.jsonl")));
  std::string line;
  std::size_t i = 0;
  while (std::getline(lines, line)) {
    const json rec = json::parse(line);
    double mean = 0.0;
    for (double v : data[i].signal.values) mean += v;
    mean /= static_cast<double>(data[i].signal.size());
    CHECK(rec["p"].get<double>() == doctest::Approx(mean).epsilon(1e-12));
    ++i;
  }
  CHECK(i == data.size());
}

TEST_CASE("evaluate on perfect predictions") {
  std::ofstream out(path("perfect.jsonl"), std::ios::binary);
  out << R"({"id":"a","p":1.0,"label":1,"per_block":[]})" << "\n";
  out << R"({"id":"b","p":0.0,"label":0,"per_block":[]})" << "\n";
  out.close();
  REQUIRE(run("evaluate --preds " + path("perfect.jsonl") + " --report " +
              path("perfect.json")) == 0);
  const json rep = load_json(path("perfect.json"));
  CHECK(rep["ece"] == 0.0);
  CHECK(rep["brier"] == 0.0);
  CHECK(rep["auroc"] == 1.0);
}

TEST_CASE("hypernetwork flow with hash checking") {
  REQUIRE(run("fit-hyper --train " + path("tr.jsonl") + " --patterns " + path("pat.json") +
              " --out " + path("model.json") + " --epochs 25 --seed 3") == 0);
  const json model = load_json(path("model.json"));
  CHECK(model.contains("bound_hash"));
  CHECK(model.contains("epoch_losses"));
  CHECK(model.contains("config_hash"));

  REQUIRE(run("predict --data " + path("te.jsonl") + " --patterns " + path("pat.json") +
              " --hyper-model " + path("model.json") + " --out " + path("hp.jsonl")) == 0);

  // re-mining with a different seed invalidates the bound hash
  REQUIRE(run("mine --train " + path("tr.jsonl") + " --out " + path("pat2.json") +
              " --n-pos 3 --n-neg 3 --seed 4") == 0);
  CHECK(run("predict --data " + path("te.jsonl") + " --patterns " + path("pat2.json") +
            " --hyper-model " + path("model.json") + " --out " + path("bad.jsonl")) == 3);
}

TEST_CASE("folded mining writes per-fold files and a summary") {
  REQUIRE(run("mine --train " + path("tr.jsonl") + " --out " + path("cv.json") +
              " --n-pos 2 --n-neg 2 --seed 5 --folds 3") == 0);
  for (int f = 0; f < 3; ++f) {
    CHECK(fs::exists(work_dir() / ("cv.fold" + std::to_string(f) + ".json")));
  }
  const json summary = load_json(path("cv.summary.json"));
  CHECK(summary["folds"] == 3);
  CHECK(summary["val_nll"].size() == 3);
  CHECK(summary.contains("mean"));
  CHECK(summary.contains("std"));
  CHECK(summary.contains("config_hash"));
}

TEST_CASE("analyze jaccard and param-mae") {
  REQUIRE(run("analyze jaccard --a " + path("pat.json") + " --b " + path("pat.json") +
              " --out " + path("jac.json")) == 0);
  const json jac = load_json(path("jac.json"));
  CHECK(jac["pos"] == 1.0);
  CHECK(jac["neg"] == 1.0);

  REQUIRE(run("analyze param-mae --inputs " + path("pat.json") + " " + path("pat.json") +
              " --grouping threshold --out " + path("mae.json")) == 0);
  CHECK(load_json(path("mae.json"))["value"] == 0.0);

  // per-question vectors through the hypernetwork
  REQUIRE(run("analyze param-mae --model " + path("model.json") + " --patterns " +
              path("pat.json") + " --data " + path("te.jsonl") +
              " --grouping threshold --out " + path("mae2.json")) == 0);
  CHECK(load_json(path("mae2.json"))["value"].get<double>() >= 0.0);

  CHECK(run("analyze param-mae --inputs " + path("pat.json") + " --grouping threshold") == 2);
  CHECK(run("analyze param-mae --inputs " + path("pat.json") + " " + path("pat.json") +
            " --grouping bogus") == 2);
}

TEST_CASE("config file overrides flags") {
  std::ofstream cfg(path("cfg.json"), std::ios::binary);
  cfg << R"({"n": 24, "seed": 9})" << "\n";
  cfg.close();
  REQUIRE(run("synth --scenario gain --n 10 --seed 1 --config " + path("cfg.json") +
              " --out " + path("cfgd.jsonl")) == 0);
  CHECK(stlcal::load_dataset(path("cfgd.jsonl")).size() == 24);
  const json oracle = load_json(path("cfgd.oracle.json"));
  CHECK(oracle["seed"] == 9);
}

TEST_CASE("repeated pipeline runs are byte-identical") {
  // identical file names in separate directories: provenance fields embed the
  // dataset name, so the runs must mirror each other exactly
  for (const char* tag : {"runa", "runb"}) {
    const fs::path dir = work_dir() / tag;
    fs::create_directories(dir);
    const auto in = [&](const std::string& name) { return (dir / name).string(); };
    REQUIRE(run("synth --scenario sharp_drop --n 80 --seed 11 --out " + in("d.jsonl")) == 0);
    REQUIRE(run("mine --train " + in("d.jsonl") + " --out " + in("pat.json") +
                " --n-pos 2 --n-neg 2 --seed 11") == 0);
    REQUIRE(run("predict --data " + in("d.jsonl") + " --patterns " + in("pat.json") +
                " --out " + in("preds.jsonl")) == 0);
    REQUIRE(run("evaluate --preds " + in("preds.jsonl") + " --report " + in("rep.json")) == 0);
  }
  for (const char* name : {"d.jsonl", "pat.json", "preds.jsonl", "rep.json"}) {
    CHECK(slurp(work_dir() / "runa" / name) == slurp(work_dir() / "runb" / name));
  }
}
