#pragma once

#include <string>
#include <vector>

#include "ceopt/engine.hpp"

namespace ceopt {

// All writers go through a temp-file-and-rename so interrupted runs never
// leave truncated output behind.
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_text_file(const std::string& path);

// One row per iteration; wall time stays in memory so identical runs write
// identical bytes.
void write_trace_csv(const std::string& path, const RunTrace& trace);

// One row per (iteration, graph): the belief evolution behind the run.
void write_posterior_trace_csv(const std::string& path, const RunTrace& trace);

struct AggregateRow {
  std::string method;
  std::string benchmark;
  std::size_t replicates = 0;
  double mean_gap = 0.0;
  double stderr_gap = 0.0;
  double mean_gap_observed = 0.0;
  double stderr_gap_observed = 0.0;
};

void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows);
std::vector<AggregateRow> read_aggregate_csv(const std::string& path);

// Every sample as one row: node columns, a regime tag, and the intervened
// values ("name=value" list, empty for observational rows).
void write_dataset_csv(const std::string& path, const Dataset& dataset, const Dag& graph);

// Grid diagnostics of one surrogate: prior mean/offset and posterior
// mean/variance per grid row.
void write_surrogate_dump(const std::string& path, const CausalSurrogate& surrogate,
                          const Eigen::MatrixXd& grid);

// Config echo with seeds and version; re-running from it reproduces the run.
void write_manifest(const std::string& path, const std::string& config_json);

std::string format_double(double v);

}  // namespace ceopt
