#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <ceopt/io.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace ceopt;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int exit_code = 0;
  std::string output;
};

CmdResult run_cli(const std::string& args) {
  const std::string out_file = (fs::temp_directory_path() / "ceopt_cli_out.txt").string();
  const std::string cmd = std::string(CEOPT_CLI_PATH) + " " + args + " > " + out_file + " 2>&1";
  const int status = std::system(cmd.c_str());
  CmdResult result;
  result.exit_code = WEXITSTATUS(status);
  std::ifstream in(out_file);
  result.output.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return result;
}

std::string scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ceopt_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string write_experiment(const std::string& dir, const std::string& body) {
  const std::string path = dir + "/experiment.json";
  std::ofstream out(path);
  out << body;
  return path;
}

const char* kQuickExperiment = R"({
  "benchmark": "mini",
  "config_dir": "%CFG%",
  "methods": ["cbo_true", "cd_cbo"],
  "replicates": 2,
  "seed": 7,
  "iterations": 3,
  "observational": 60,
  "acquisition": {"thompson_draws": 32, "mixture_draws": 64, "fantasies": 2,
                   "grid_points": 6, "quadrature": 128, "do_mc_samples": 150,
                   "prior_grid_1d": 20},
  "oracle_eval_mc": 800
})";

std::string mini_benchmark_dir() {
  static const std::string dir = [] {
    const std::string d = scratch_dir("benchmarks");
    std::ofstream out(d + "/mini.json");
    out << R"({
      "name": "mini",
      "nodes": [{"name": "X", "role": "manipulative"},
                {"name": "Z", "role": "manipulative"},
                {"name": "Y", "role": "target"}],
      "true_graph": ["X->Z", "Z->Y"],
      "hypotheses": [["X->Z", "Z->Y"], ["Z->X", "Z->Y"]],
      "roots": {"X": {"kind": "gaussian", "mean": 0.0, "sd": 1.0}},
      "mechanisms": {
        "Z": {"parents": ["X"], "noise": 0.3, "terms": [{"fn": "lin", "w": [2.0]}]},
        "Y": {"parents": ["Z"], "noise": 0.3, "terms": [{"fn": "lin", "w": [3.0], "b": -1.0}]}
      },
      "domains": {"X": [-1.0, 1.0], "Z": [-3.0, 3.0]},
      "exploration_set": [["X"], ["Z"]],
      "data": {"observational": 60, "initial_interventions": 2},
      "true_optimum": {"y": -10.0, "set": ["Z"], "x": [-3.0], "stderr": 0.01, "mc_samples": 10000}
    })";
    return d;
  }();
  return dir;
}

std::string quick_experiment(const std::string& dir) {
  std::string body = kQuickExperiment;
  const std::string needle = "%CFG%";
  body.replace(body.find(needle), needle.size(), mini_benchmark_dir());
  return write_experiment(dir, body);
}

}  // namespace

TEST_CASE("run writes traces, an aggregate and a manifest") {
  const std::string dir = scratch_dir("run_basic");
  const std::string cfg = quick_experiment(dir);
  const auto result = run_cli("run --config " + cfg + " --out " + dir + "/out -j 2");
  CHECK(result.exit_code == 0);

  // methods x replicates trace files plus one aggregate.
  int traces = 0;
  for (const auto& entry : fs::directory_iterator(dir + "/out"))
    if (entry.path().filename().string().rfind("trace_", 0) == 0) ++traces;
  CHECK(traces == 4);
  CHECK(fs::exists(dir + "/out/aggregate.csv"));
  CHECK(fs::exists(dir + "/out/manifest.json"));
  const auto rows = read_aggregate_csv(dir + "/out/aggregate.csv");
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.replicates == 2);
    CHECK(r.mean_gap >= 0.0);
    CHECK(r.mean_gap <= 1.0);
  }
}

TEST_CASE("identical seeds give byte-identical aggregates") {
  const std::string dir = scratch_dir("run_seeded");
  const std::string cfg = quick_experiment(dir);
  REQUIRE(run_cli("run --config " + cfg + " --seed 7 --out " + dir + "/a -j 2").exit_code == 0);
  REQUIRE(run_cli("run --config " + cfg + " --seed 7 --out " + dir + "/b -j 1").exit_code == 0);
  CHECK(read_text_file(dir + "/a/aggregate.csv") == read_text_file(dir + "/b/aggregate.csv"));
  CHECK(read_text_file(dir + "/a/trace_cbo_true_0.csv") ==
        read_text_file(dir + "/b/trace_cbo_true_0.csv"));

  // The manifest alone reproduces the run.
  REQUIRE(run_cli("run --config " + dir + "/a/manifest.json --out " + dir + "/c").exit_code == 0);
  CHECK(read_text_file(dir + "/a/aggregate.csv") == read_text_file(dir + "/c/aggregate.csv"));
}

TEST_CASE("config errors exit with status two") {
  const std::string dir = scratch_dir("run_errors");

  SUBCASE("unknown benchmark names the valid set") {
    const std::string cfg = write_experiment(dir, R"({
      "benchmark": "nope", "config_dir": ")" + mini_benchmark_dir() + R"(",
      "methods": ["ceo"], "replicates": 1})");
    const auto result = run_cli("run --config " + cfg + " --out " + dir + "/out");
    CHECK(result.exit_code == 2);
    CHECK(result.output.find("mini") != std::string::npos);
  }

  SUBCASE("malformed json is rejected with a message") {
    const std::string cfg = write_experiment(dir, "{ not json");
    const auto result = run_cli("run --config " + cfg + " --out " + dir + "/out");
    CHECK(result.exit_code == 2);
    CHECK(result.output.find("parse error") != std::string::npos);
  }

  SUBCASE("missing config file") {
    const auto result = run_cli("run --config /nonexistent.json --out " + dir + "/out");
    CHECK(result.exit_code == 2);
  }
}

TEST_CASE("oracle records round-trip and converge") {
  const std::string dir = scratch_dir("oracle");
  const auto first = run_cli("oracle --benchmark mini --config-dir " + mini_benchmark_dir() +
                             " --grid 50 --mc 1000 --seed 3 --out " + dir + "/opt1.json");
  CHECK(first.exit_code == 0);
  CHECK(first.output.find("\"y\"") != std::string::npos);
  const std::string text = read_text_file(dir + "/opt1.json");
  CHECK(text.find("\"set\"") != std::string::npos);
  CHECK(text.find("Z") != std::string::npos);

  const auto second = run_cli("oracle --benchmark mini --config-dir " + mini_benchmark_dir() +
                              " --grid 50 --mc 20000 --seed 4 --out " + dir + "/opt2.json");
  CHECK(second.exit_code == 0);
  // Both estimates target E[Y|do(Z=-3)] = -10 with small stderr.
  CHECK(read_text_file(dir + "/opt2.json").find("-10.0") != std::string::npos);
}

TEST_CASE("table pivots aggregates and flags the best method") {
  const std::string dir = scratch_dir("table");
  write_aggregate_csv(dir + "/agg.csv", {{"ceo", "synthetic", 3, 0.75, 0.03, 0.7, 0.04},
                                         {"cbo_true", "synthetic", 3, 0.66, 0.04, 0.6, 0.05}});
  const auto result = run_cli("table --in " + dir + "/agg.csv --out " + dir + "/table.txt");
  CHECK(result.exit_code == 0);
  const std::string table = read_text_file(dir + "/table.txt");
  CHECK(table.find("0.750 +/- 0.030 *") != std::string::npos);
  CHECK(table.find("0.660 +/- 0.040\n") != std::string::npos);

  // stderr formatting checked against hand arithmetic elsewhere; here the
  // 1x1 degenerate table still renders.
  write_aggregate_csv(dir + "/one.csv", {{"ceo", "epi", 1, 0.5, 0.0, 0.5, 0.0}});
  CHECK(run_cli("table --in " + dir + "/one.csv --out " + dir + "/one.txt").exit_code == 0);
  CHECK(read_text_file(dir + "/one.txt").find("0.500 +/- 0.000 *") != std::string::npos);
}

TEST_CASE("trace exports merge into long-format plot data") {
  const std::string dir = scratch_dir("plot");
  const std::string cfg = quick_experiment(dir);
  REQUIRE(run_cli("run --config " + cfg + " --out " + dir + "/out -j 2").exit_code == 0);
  std::string inputs;
  for (const auto& entry : fs::directory_iterator(dir + "/out"))
    if (entry.path().filename().string().rfind("trace_", 0) == 0)
      inputs += " " + entry.path().string();
  const auto result = run_cli("trace-plot-data --in" + inputs + " --out " + dir + "/plot.csv");
  CHECK(result.exit_code == 0);
  const std::string plot = read_text_file(dir + "/plot.csv");
  CHECK(plot.find("method,replicate,iteration,cumulative_cost,best_observed,best_oracle") == 0);
  CHECK(plot.find("cbo_true,") != std::string::npos);
  CHECK(plot.find("cd_cbo,") != std::string::npos);
}
