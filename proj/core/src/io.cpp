#include "ceopt/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ceopt {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void atomic_write_file(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.flush()) throw Error("failed flushing '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::string x_field(const Eigen::VectorXd& x) {
  std::string out;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (i) out += ";";
    out += format_double(x[i]);
  }
  return out;
}

}  // namespace

void write_trace_csv(const std::string& path, const RunTrace& trace) {
  std::ostringstream out;
  out << "replicate,iteration,set,x,cost,cumulative_cost,y_observed,best_observed,"
         "oracle_value,best_oracle,posterior_entropy,score,branch,stage\n";
  for (const auto& it : trace.iterations) {
    out << trace.config.replicate << ',' << it.iteration << ','
        << trace.set_labels[static_cast<std::size_t>(it.set_id)] << ',' << x_field(it.x) << ','
        << format_double(it.cost) << ',' << format_double(it.cumulative_cost) << ','
        << format_double(it.y_observed) << ',' << format_double(it.best_observed) << ','
        << format_double(it.oracle_value) << ',' << format_double(it.best_oracle) << ','
        << format_double(it.posterior_entropy) << ',' << format_double(it.score) << ','
        << (it.graph_known_branch ? "target_only" : "joint") << ','
        << (it.stage_two ? "optimize" : "learn") << '\n';
  }
  atomic_write_file(path, out.str());
}

void write_posterior_trace_csv(const std::string& path, const RunTrace& trace) {
  std::ostringstream out;
  out << "replicate,iteration,graph_index,probability\n";
  for (Eigen::Index g = 0; g < trace.initial_posterior.size(); ++g)
    out << trace.config.replicate << ",-1," << g << ','
        << format_double(trace.initial_posterior[g]) << '\n';
  for (const auto& it : trace.iterations)
    for (Eigen::Index g = 0; g < it.posterior.size(); ++g)
      out << trace.config.replicate << ',' << it.iteration << ',' << g << ','
          << format_double(it.posterior[g]) << '\n';
  atomic_write_file(path, out.str());
}

void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows) {
  std::ostringstream out;
  out << "method,benchmark,replicates,mean_gap,stderr_gap,mean_gap_observed,stderr_gap_observed\n";
  for (const auto& r : rows)
    out << r.method << ',' << r.benchmark << ',' << r.replicates << ','
        << format_double(r.mean_gap) << ',' << format_double(r.stderr_gap) << ','
        << format_double(r.mean_gap_observed) << ',' << format_double(r.stderr_gap_observed)
        << '\n';
  atomic_write_file(path, out.str());
}

std::vector<AggregateRow> read_aggregate_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error("'" + path + "' is empty");
  std::vector<AggregateRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    AggregateRow r;
    std::string field;
    std::getline(ss, r.method, ',');
    std::getline(ss, r.benchmark, ',');
    std::getline(ss, field, ',');
    r.replicates = std::stoul(field);
    std::getline(ss, field, ',');
    r.mean_gap = std::stod(field);
    std::getline(ss, field, ',');
    r.stderr_gap = std::stod(field);
    std::getline(ss, field, ',');
    r.mean_gap_observed = std::stod(field);
    std::getline(ss, field, ',');
    r.stderr_gap_observed = std::stod(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_dataset_csv(const std::string& path, const Dataset& dataset, const Dag& graph) {
  std::ostringstream out;
  for (std::size_t i = 0; i < graph.num_nodes(); ++i) out << graph.node(i).name << ',';
  out << "regime,intervention\n";
  auto row = [&](const Sample& s, const std::string& regime, const std::string& iv) {
    for (std::size_t i = 0; i < graph.num_nodes(); ++i) out << format_double(s[i]) << ',';
    out << regime << ',' << iv << '\n';
  };
  for (const auto& s : dataset.observational) row(s, "observational", "");
  for (const auto& rec : dataset.interventional) {
    std::string iv;
    for (std::size_t t = 0; t < rec.set.size(); ++t) {
      if (t) iv += ';';
      iv += rec.set.targets[t] + "=" + format_double(rec.values[static_cast<Eigen::Index>(t)]);
    }
    row(rec.sample, "interventional", iv);
  }
  atomic_write_file(path, out.str());
}

void write_surrogate_dump(const std::string& path, const CausalSurrogate& surrogate,
                          const Eigen::MatrixXd& grid) {
  Eigen::VectorXd mean, var;
  surrogate.posterior_mean_var(grid, mean, var);
  std::ostringstream out;
  out << "x,prior_mean,prior_offset,posterior_mean,posterior_variance\n";
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    const Eigen::VectorXd x = grid.row(i);
    out << x_field(x) << ',' << format_double(surrogate.prior_mean_at(x)) << ','
        << format_double(surrogate.prior_offset_at(x)) << ',' << format_double(mean[i]) << ','
        << format_double(var[i]) << '\n';
  }
  atomic_write_file(path, out.str());
}

void write_manifest(const std::string& path, const std::string& config_json) {
  atomic_write_file(path, config_json);
}

}  // namespace ceopt
