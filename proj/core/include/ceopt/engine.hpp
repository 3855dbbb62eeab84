#pragma once

#include <map>
#include <string>
#include <vector>

#include "ceopt/acquisition.hpp"
#include "ceopt/benchmark.hpp"

namespace ceopt {

// Default intervention cost: the number of intervened variables.
double intervention_cost(const InterventionSet& set, const Eigen::VectorXd& x);

struct RunConfig {
  std::string benchmark;
  std::string config_dir;
  // "ceo", "cbo_true", "cbo_wrong:<hypothesis index>", "cd_cbo".
  std::string method = "ceo";
  int iterations = 100;                   // hard cap on rounds
  double budget = 0.0;                    // stop once cumulative cost reaches this (0: cap only)
  std::uint64_t seed = 0;
  int replicate = 0;
  std::size_t observational = 0;          // 0: benchmark default
  std::size_t initial_interventions = 0;  // 0: benchmark default
  int samples_per_intervention = 1;
  bool posterior_uses_observational = true;
  double cd_threshold = 0.9;
  double cd_stage1_budget = -1.0;         // cost units; negative: threshold only
  std::map<std::string, double> cost_overrides;  // per set label
  long oracle_eval_mc = 4000;             // draws per ground-truth effect evaluation
  AcquisitionParams acq;
};

struct IterationRecord {
  int iteration = 0;
  int set_id = -1;
  Eigen::VectorXd x;
  double y_observed = 0.0;
  double cost = 0.0;
  double cumulative_cost = 0.0;
  double best_observed = 0.0;       // running min of observed target values
  double oracle_value = 0.0;        // ground-truth effect of the chosen intervention
  double best_oracle = 0.0;
  Eigen::VectorXd posterior;
  double posterior_entropy = 0.0;
  double score = 0.0;
  bool graph_known_branch = false;
  bool stage_two = false;           // two-stage method switched to optimization
  double wall_ms = 0.0;
};

struct RunTrace {
  RunConfig config;
  std::vector<std::string> set_labels;
  std::vector<IterationRecord> iterations;
  double y_init_best_observed = 0.0;
  double y_init_best_oracle = 0.0;
  Eigen::VectorXd initial_posterior;
  Dataset data;
  bool aborted = false;
  std::string abort_reason;
};

// Executes one replicate of the configured method on its benchmark.
RunTrace run_method(const RunConfig& config);

// Normalized optimization progress in [0, 1] relative to the initial
// incumbent and the true optimum. `oracle_variant` scores interventions by
// their ground-truth effects rather than the noisy observations.
double gap_from_trace(const RunTrace& trace, double y_star, bool oracle_variant);

struct GapResult {
  std::vector<double> per_replicate;
  double mean = 0.0;
  double stderr_mean = 0.0;
};

GapResult aggregate_gaps(std::vector<double> gaps);

// Brute-force optimum search: dense grid per exploration set, Monte Carlo
// effect estimate per point through the ground-truth SCM.
OptimumRecord true_optimum_oracle(const BenchmarkDef& benchmark, std::size_t grid_per_dim,
                                  long mc_samples, std::uint64_t seed);

// Candidate grid of one intervention set: an equispaced line for singleton
// sets, a Kronecker lattice of `points * dim` sites otherwise.
Eigen::MatrixXd candidate_grid(const InterventionSet& set, int points);

}  // namespace ceopt
