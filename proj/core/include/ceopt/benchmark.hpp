#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ceopt/graph.hpp"
#include "ceopt/scm.hpp"

namespace ceopt {

// Ground-truth optimum of a benchmark, estimated offline by the brute-force
// oracle and cached in the definition file.
struct OptimumRecord {
  double y = 0.0;
  InterventionSet set;
  Eigen::VectorXd x;
  double stderr_y = 0.0;
  long mc_samples = 0;
};

// Everything one experiment needs: the data-generating SCM, the causal
// hypotheses, which interventions are allowed and where the true optimum
// lies.
struct BenchmarkDef {
  std::string name;
  Scm true_scm;
  HypothesisSpace space;
  std::size_t true_graph_index = 0;  // index of the generating graph in `space`
  std::vector<InterventionSet> exploration_set;
  std::size_t default_observational = 200;
  std::size_t default_initial_interventions = 2;
  std::optional<OptimumRecord> true_optimum;

  const InterventionSet& set_by_label(const std::string& label) const;
};

// Loads `<config_dir>/<name>.json`. An empty config_dir falls back to the
// CEOPT_CONFIG_DIR environment variable, then "configs". Unknown names list
// the definitions that were found.
BenchmarkDef make_benchmark(const std::string& name, const std::string& config_dir = "");

BenchmarkDef load_benchmark_file(const std::string& path);

}  // namespace ceopt
