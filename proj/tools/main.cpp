// Command-line front end: dispatches experiment runs, the brute-force
// optimum search, result tables and plot-ready trace exports.

#include <CLI11.hpp>
#include <atomic>
#include <ceopt/engine.hpp>
#include <ceopt/io.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ceopt;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string sanitize(std::string name) {
  for (auto& c : name)
    if (c == ':') c = '_';
  return name;
}

std::string default_out_dir() {
  if (const char* env = std::getenv("CEOPT_OUT_DIR")) return env;
  return "ceopt-out";
}

struct Experiment {
  std::string benchmark;
  std::string config_dir;
  std::vector<std::string> methods;
  int replicates = 12;
  std::uint64_t seed = 0;
  RunConfig base;  // shared knobs; method/replicate filled per cell
  std::optional<OptimumRecord> optimum_override;
};

AcquisitionParams parse_acquisition(const json& a) {
  AcquisitionParams p;
  p.thompson_draws = a.value("thompson_draws", p.thompson_draws);
  p.mixture_draws = a.value("mixture_draws", p.mixture_draws);
  p.fantasies = a.value("fantasies", p.fantasies);
  p.grid_points = a.value("grid_points", p.grid_points);
  p.quadrature = a.value("quadrature", p.quadrature);
  p.beta = a.value("beta", p.beta);
  p.eps_graph = a.value("eps_graph", p.eps_graph);
  p.bandwidth_floor = a.value("bandwidth_floor", p.bandwidth_floor);
  p.common_random_numbers = a.value("common_random_numbers", p.common_random_numbers);
  p.do_mc_samples = a.value("do_mc_samples", p.do_mc_samples);
  p.prior_grid_1d = a.value("prior_grid_1d", p.prior_grid_1d);
  p.prior_grid_nd = a.value("prior_grid_nd", p.prior_grid_nd);
  p.prior_rebuild_tv = a.value("prior_rebuild_tv", p.prior_rebuild_tv);
  return p;
}

json acquisition_to_json(const AcquisitionParams& p) {
  return json{{"thompson_draws", p.thompson_draws},
              {"mixture_draws", p.mixture_draws},
              {"fantasies", p.fantasies},
              {"grid_points", p.grid_points},
              {"quadrature", p.quadrature},
              {"beta", p.beta},
              {"eps_graph", p.eps_graph},
              {"bandwidth_floor", p.bandwidth_floor},
              {"common_random_numbers", p.common_random_numbers},
              {"do_mc_samples", p.do_mc_samples},
              {"prior_grid_1d", p.prior_grid_1d},
              {"prior_grid_nd", p.prior_grid_nd},
              {"prior_rebuild_tv", p.prior_rebuild_tv}};
}

Experiment parse_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment config '" + path + "'");
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("parse error in '" + path + "': " + e.what());
  }

  Experiment exp;
  exp.benchmark = cfg.at("benchmark").get<std::string>();
  exp.config_dir = cfg.value("config_dir", std::string());
  for (const auto& m : cfg.at("methods")) exp.methods.push_back(m.get<std::string>());
  if (exp.methods.empty()) throw ConfigError("no methods configured");
  exp.replicates = cfg.value("replicates", 12);
  if (exp.replicates < 1) throw ConfigError("replicates must be >= 1");
  exp.seed = cfg.value("seed", 0ULL);

  RunConfig& base = exp.base;
  base.benchmark = exp.benchmark;
  base.config_dir = exp.config_dir;
  base.iterations = cfg.value("iterations", 100);
  base.budget = cfg.value("budget", 0.0);
  base.observational = cfg.value("observational", 0UL);
  base.initial_interventions = cfg.value("initial_interventions", 0UL);
  base.samples_per_intervention = cfg.value("samples_per_intervention", 1);
  base.posterior_uses_observational = cfg.value("posterior_uses_observational", true);
  base.cd_threshold = cfg.value("cd_threshold", 0.9);
  base.cd_stage1_budget = cfg.value("cd_stage1_budget", -1.0);
  base.oracle_eval_mc = cfg.value("oracle_eval_mc", 4000L);
  if (cfg.contains("cost_overrides"))
    for (const auto& [label, c] : cfg["cost_overrides"].items())
      base.cost_overrides[label] = c.get<double>();
  if (cfg.contains("acquisition")) base.acq = parse_acquisition(cfg["acquisition"]);

  if (cfg.contains("true_optimum")) {
    OptimumRecord rec;
    rec.y = cfg["true_optimum"].at("y").get<double>();
    exp.optimum_override = rec;  // only the value matters for the gap
  }
  return exp;
}

json experiment_to_json(const Experiment& exp) {
  json out{{"benchmark", exp.benchmark},
           {"config_dir", exp.config_dir},
           {"methods", exp.methods},
           {"replicates", exp.replicates},
           {"seed", exp.seed},
           {"iterations", exp.base.iterations},
           {"budget", exp.base.budget},
           {"observational", exp.base.observational},
           {"initial_interventions", exp.base.initial_interventions},
           {"samples_per_intervention", exp.base.samples_per_intervention},
           {"posterior_uses_observational", exp.base.posterior_uses_observational},
           {"cd_threshold", exp.base.cd_threshold},
           {"cd_stage1_budget", exp.base.cd_stage1_budget},
           {"oracle_eval_mc", exp.base.oracle_eval_mc},
           {"acquisition", acquisition_to_json(exp.base.acq)},
           {"version", kVersion}};
  if (!exp.base.cost_overrides.empty()) {
    json co;
    for (const auto& [label, c] : exp.base.cost_overrides) co[label] = c;
    out["cost_overrides"] = co;
  }
  if (exp.optimum_override) out["true_optimum"] = json{{"y", exp.optimum_override->y}};
  return out;
}

struct Cell {
  std::string method;
  int replicate = 0;
};

int cmd_run(const std::string& config_path, std::string out_dir, std::int64_t seed_override,
            unsigned parallel, bool keep_going, bool export_data) {
  Experiment exp = parse_experiment(config_path);
  if (seed_override >= 0) exp.seed = static_cast<std::uint64_t>(seed_override);
  exp.base.seed = exp.seed;
  if (out_dir.empty()) out_dir = default_out_dir();
  fs::create_directories(out_dir);

  const BenchmarkDef bench = make_benchmark(exp.benchmark, exp.config_dir);
  double y_star = 0.0;
  if (exp.optimum_override)
    y_star = exp.optimum_override->y;
  else if (bench.true_optimum)
    y_star = bench.true_optimum->y;
  else
    throw ConfigError("benchmark '" + exp.benchmark +
                      "' has no recorded optimum; run the oracle subcommand first");

  std::vector<Cell> cells;
  for (const auto& m : exp.methods)
    for (int r = 0; r < exp.replicates; ++r) cells.push_back({m, r});

  std::vector<RunTrace> traces(cells.size());
  std::vector<std::string> failures(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      RunConfig cfg = exp.base;
      cfg.method = cells[i].method;
      cfg.replicate = cells[i].replicate;
      try {
        traces[i] = run_method(cfg);
        if (traces[i].aborted) failures[i] = traces[i].abort_reason;
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  if (parallel == 0) parallel = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < parallel; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  bool any_failure = false;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!failures[i].empty()) {
      any_failure = true;
      std::cerr << "replicate " << cells[i].replicate << " of " << cells[i].method
                << " aborted: " << failures[i] << "\n";
      if (!keep_going) return 1;
    }
  }

  std::vector<AggregateRow> rows;
  for (const auto& method : exp.methods) {
    std::vector<double> gaps, gaps_observed;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].method != method || !failures[i].empty()) continue;
      const auto& trace = traces[i];
      const std::string stem = sanitize(method) + "_" + std::to_string(cells[i].replicate);
      write_trace_csv(out_dir + "/trace_" + stem + ".csv", trace);
      write_posterior_trace_csv(out_dir + "/posterior_" + stem + ".csv", trace);
      if (export_data)
        write_dataset_csv(out_dir + "/data_" + stem + ".csv", trace.data,
                          bench.true_scm.graph());
      gaps.push_back(gap_from_trace(trace, y_star, true));
      gaps_observed.push_back(gap_from_trace(trace, y_star, false));
    }
    if (gaps.empty()) continue;
    const GapResult oracle_gap = aggregate_gaps(gaps);
    const GapResult observed_gap = aggregate_gaps(gaps_observed);
    rows.push_back({method, exp.benchmark, gaps.size(), oracle_gap.mean, oracle_gap.stderr_mean,
                    observed_gap.mean, observed_gap.stderr_mean});
  }
  write_aggregate_csv(out_dir + "/aggregate.csv", rows);
  write_manifest(out_dir + "/manifest.json", experiment_to_json(exp).dump(2) + "\n");
  return any_failure ? 1 : 0;
}

int cmd_oracle(const std::string& benchmark, const std::string& config_dir,
               const std::string& out_path, std::size_t grid, long mc, std::uint64_t seed) {
  const BenchmarkDef bench = make_benchmark(benchmark, config_dir);
  const OptimumRecord rec = true_optimum_oracle(bench, grid, mc, seed);
  json out{{"benchmark", benchmark},
           {"y", rec.y},
           {"set", rec.set.targets},
           {"x", std::vector<double>(rec.x.data(), rec.x.data() + rec.x.size())},
           {"stderr", rec.stderr_y},
           {"mc_samples", rec.mc_samples},
           {"grid_per_dim", grid}};
  atomic_write_file(out_path, out.dump(2) + "\n");
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_table(const std::vector<std::string>& inputs, const std::string& out_path) {
  std::vector<AggregateRow> rows;
  for (const auto& path : inputs) {
    const auto part = read_aggregate_csv(path);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (rows.empty()) throw ConfigError("no aggregate rows found");

  std::vector<std::string> methods, benchmarks;
  for (const auto& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
      methods.push_back(r.method);
    if (std::find(benchmarks.begin(), benchmarks.end(), r.benchmark) == benchmarks.end())
      benchmarks.push_back(r.benchmark);
  }
  auto find_row = [&](const std::string& m, const std::string& b) -> const AggregateRow* {
    for (const auto& r : rows)
      if (r.method == m && r.benchmark == b) return &r;
    return nullptr;
  };

  std::ostringstream out;
  out << "method";
  for (const auto& b : benchmarks) out << '\t' << b;
  out << '\n';
  for (const auto& m : methods) {
    out << m;
    for (const auto& b : benchmarks) {
      const AggregateRow* r = find_row(m, b);
      if (!r) {
        out << "\t-";
        continue;
      }
      bool best = true;
      for (const auto& m2 : methods) {
        const AggregateRow* r2 = find_row(m2, b);
        if (r2 && r2->mean_gap > r->mean_gap) best = false;
      }
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.3f +/- %.3f%s", r->mean_gap, r->stderr_gap,
                    best ? " *" : "");
      out << '\t' << buf;
    }
    out << '\n';
  }
  atomic_write_file(out_path, out.str());
  std::cout << out.str();
  return 0;
}

int cmd_trace_plot(const std::vector<std::string>& inputs, const std::string& out_path) {
  // Long-format merge of per-replicate traces: one row per iteration with
  // the method read from the trace_<method>_<replicate>.csv name.
  std::ostringstream out;
  out << "method,replicate,iteration,cumulative_cost,best_observed,best_oracle\n";
  for (const auto& path : inputs) {
    std::string method = fs::path(path).stem().string();
    if (method.rfind("trace_", 0) == 0) method = method.substr(6);
    const auto us = method.find_last_of('_');
    if (us != std::string::npos) method = method.substr(0, us);

    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open trace '" + path + "'");
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> fields;
      std::istringstream ss(line);
      std::string f;
      while (std::getline(ss, f, ',')) fields.push_back(f);
      if (fields.size() < 14) throw ConfigError("unexpected trace format in '" + path + "'");
      out << method << ',' << fields[0] << ',' << fields[1] << ',' << fields[5] << ','
          << fields[7] << ',' << fields[9] << '\n';
    }
  }
  atomic_write_file(out_path, out.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal optimization under structure uncertainty"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Execute an experiment config (methods x replicates)");
  std::string run_config, run_out;
  std::int64_t run_seed = -1;
  unsigned run_parallel = 0;
  bool keep_going = false, export_data = false;
  run->add_option("-c,--config", run_config, "experiment config JSON")->required();
  run->add_option("-o,--out", run_out, "output directory (default $CEOPT_OUT_DIR or ceopt-out)");
  run->add_option("--seed", run_seed, "override the config seed");
  run->add_option("-j,--parallel", run_parallel, "replicate-level parallelism (0 = all cores)");
  run->add_flag("--keep-going", keep_going, "continue past aborted replicates");
  run->add_flag("--export-data", export_data, "also write per-replicate dataset CSVs");

  // oracle
  auto* oracle = app.add_subcommand("oracle", "Brute-force search for a benchmark's optimum");
  std::string oracle_benchmark, oracle_dir, oracle_out = "optimum.json";
  std::size_t oracle_grid = 500;
  long oracle_mc = 10000;
  std::uint64_t oracle_seed = 0;
  oracle->add_option("-b,--benchmark", oracle_benchmark, "benchmark name")->required();
  oracle->add_option("--config-dir", oracle_dir, "benchmark definition directory");
  oracle->add_option("-o,--out", oracle_out, "output record path");
  oracle->add_option("--grid", oracle_grid, "grid points per dimension");
  oracle->add_option("--mc", oracle_mc, "Monte Carlo draws per grid point");
  oracle->add_option("--seed", oracle_seed, "rng seed");

  // table
  auto* table = app.add_subcommand("table", "Aggregate CSVs into a method x benchmark table");
  std::vector<std::string> table_in;
  std::string table_out = "table.txt";
  table->add_option("-i,--in", table_in, "aggregate CSV files")->required();
  table->add_option("-o,--out", table_out, "output table path");

  // trace-plot-data
  auto* plot = app.add_subcommand("trace-plot-data", "Merge traces into plot-ready long format");
  std::vector<std::string> plot_in;
  std::string plot_out = "plot.csv";
  plot->add_option("-i,--in", plot_in, "trace CSV files")->required();
  plot->add_option("-o,--out", plot_out, "output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed())
      return cmd_run(run_config, run_out, run_seed, run_parallel, keep_going, export_data);
    if (oracle->parsed())
      return cmd_oracle(oracle_benchmark, oracle_dir, oracle_out, oracle_grid, oracle_mc,
                        oracle_seed);
    if (table->parsed()) return cmd_table(table_in, table_out);
    if (plot->parsed()) return cmd_trace_plot(plot_in, plot_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const UnknownBenchmark& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
