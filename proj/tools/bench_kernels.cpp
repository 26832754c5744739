// Benchmark of the batch evaluation kernels: OpenMP path vs the serial
// reference, and the sliding-window trace evaluator vs the per-step
// recursion. Verifies bit-identical outputs while timing.

#include <chrono>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stlcal/catalog.hpp"
#include "stlcal/exec.hpp"
#include "stlcal/stl.hpp"
#include "stlcal/synth.hpp"

using namespace stlcal;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Bench {
  std::string name;
  double serial_s = 0.0;
  double parallel_s = 0.0;
  bool identical = true;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stlcal kernel benchmark"};
  std::size_t n = 4000;
  int repeat = 5;
  int threads = 0;
  app.add_option("--n", n, "instances in the benchmark dataset");
  app.add_option("--repeat", repeat, "timing repetitions");
  app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)");
  CLI11_PARSE(app, argc, argv);

  configure_threads(threads);
  std::printf("threads: %d\n", max_threads());

  const Dataset data = generate(Scenario::SharpDrop, n, 42).data;

  // one formula per catalog template, instantiated mid-range
  std::vector<std::pair<Formula, ParamVector>> formulas;
  for (const auto& tmpl : list_templates()) {
    GridContext ctx = make_grid_context(data);
    const auto grid = tmpl.grid(ctx);
    formulas.push_back(tmpl.build(grid[grid.size() / 2]));
  }

  std::vector<Bench> results;

  {
    Bench b{"batch robustness (scalar)"};
    std::vector<double> serial_out(data.size() * formulas.size());
    std::vector<double> parallel_out(serial_out.size());
    auto run = [&](ExecMode mode, std::vector<double>& out) {
      const auto t0 = Clock::now();
      for (int r = 0; r < repeat; ++r) {
        for (std::size_t f = 0; f < formulas.size(); ++f) {
          for_each_index(data.size(), mode, [&](std::size_t i) {
            out[f * data.size() + i] =
                robustness_scalar(formulas[f].first, formulas[f].second, data[i].signal);
          });
        }
      }
      return seconds_since(t0);
    };
    b.serial_s = run(ExecMode::Serial, serial_out);
    b.parallel_s = run(ExecMode::Parallel, parallel_out);
    b.identical = serial_out == parallel_out;
    results.push_back(b);
  }

  {
    Bench b{"robustness trace (reference vs sliding window)"};
    auto [nested, nested_pv] = parse_formula("(F 0.0 1.0 (G 0.0 0.5 (ge s 0.55)))");
    bool ok = true;
    auto t0 = Clock::now();
    std::vector<std::vector<double>> ref(data.size());
    for (int r = 0; r < repeat; ++r) {
      for (std::size_t i = 0; i < data.size(); ++i) {
        ref[i] = robustness_trace(nested, nested_pv, data[i].signal);
      }
    }
    b.serial_s = seconds_since(t0);
    t0 = Clock::now();
    for (int r = 0; r < repeat; ++r) {
      for_each_index(data.size(), ExecMode::Parallel, [&](std::size_t i) {
        const auto fast = robustness_trace_fast(nested, nested_pv, data[i].signal);
        if (fast != ref[i]) ok = false;
      });
    }
    b.parallel_s = seconds_since(t0);
    b.identical = ok;
    results.push_back(b);
  }

  {
    Bench b{"soft robustness batch (tau = 20)"};
    auto [f, pv] = parse_formula("(G 0.0 1.0 (ge s 0.5))");
    std::vector<double> serial_out(data.size());
    std::vector<double> parallel_out(data.size());
    auto run = [&](ExecMode mode, std::vector<double>& out) {
      const auto t0 = Clock::now();
      for (int r = 0; r < repeat; ++r) {
        for_each_index(data.size(), mode, [&](std::size_t i) {
          out[i] = soft_robustness(f, pv, data[i].signal, 20.0);
        });
      }
      return seconds_since(t0);
    };
    b.serial_s = run(ExecMode::Serial, serial_out);
    b.parallel_s = run(ExecMode::Parallel, parallel_out);
    b.identical = serial_out == parallel_out;
    results.push_back(b);
  }

  std::printf("\n%-46s %10s %10s %8s %s\n", "kernel", "serial[s]", "openmp[s]", "speedup",
              "bitwise");
  for (const auto& b : results) {
    std::printf("%-46s %10.4f %10.4f %7.2fx %s\n", b.name.c_str(), b.serial_s, b.parallel_s,
                b.parallel_s > 0 ? b.serial_s / b.parallel_s : 0.0,
                b.identical ? "ok" : "MISMATCH");
  }

  bool all_ok = true;
  for (const auto& b : results) all_ok = all_ok && b.identical;
  return all_ok ? 0 : 1;
}
