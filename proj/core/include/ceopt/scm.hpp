#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ceopt/gp.hpp"
#include "ceopt/graph.hpp"
#include "ceopt/rng.hpp"

namespace ceopt {

// One joint assignment of values to every node of the generating graph,
// aligned with the graph's node order.
struct Sample {
  Eigen::VectorXd values;

  double operator[](std::size_t i) const { return values[static_cast<Eigen::Index>(i)]; }
  double& operator[](std::size_t i) { return values[static_cast<Eigen::Index>(i)]; }
};

// Values chosen for one perfect intervention, aligned with set.targets.
struct Intervention {
  InterventionSet set;
  Eigen::VectorXd values;
};

struct InterventionalRecord {
  InterventionSet set;
  Eigen::VectorXd values;
  Sample sample;  // intervened nodes hold their clamped values
};

// All collected data: the observational regime plus every interventional
// record, in collection order.
struct Dataset {
  std::vector<Sample> observational;
  std::vector<InterventionalRecord> interventional;
};

struct RootDistribution {
  enum class Kind { uniform, gaussian, point, empirical };
  Kind kind = Kind::point;
  double a = 0.0;  // uniform lo / gaussian mean / point value
  double b = 0.0;  // uniform hi / gaussian sd
  std::vector<double> pool;  // empirical resampling pool

  double sample(Rng& rng) const;
};

// Structural mechanism of one non-root node: either a closed-form function
// of the parents with additive Gaussian noise, or a GP regressed on the
// parents (its predictive draw carries both model and noise variance).
struct Mechanism {
  enum class Kind { closed_form, gp_fitted };
  Kind kind = Kind::closed_form;
  std::function<double(const Eigen::VectorXd&)> fn;
  double noise_scale = 0.0;
  GaussianProcess gp;

  static Mechanism closed(std::function<double(const Eigen::VectorXd&)> f, double noise);
  static Mechanism fitted(GaussianProcess gp);
};

// A structural causal model over a Dag: a root distribution per root node
// and a mechanism per non-root node. Values are immutable; samplers take an
// explicit rng so concurrent callers never share state.
class Scm {
 public:
  Scm(Dag graph, std::vector<std::optional<Mechanism>> mechanisms,
      std::vector<std::optional<RootDistribution>> roots);

  const Dag& graph() const { return graph_; }
  bool is_gp_fitted(std::size_t node) const;
  const Mechanism& mechanism(std::size_t node) const;
  const RootDistribution& root(std::size_t node) const;

  // `n` joint draws under do(intervention), or the observational regime when
  // absent. Nodes are sampled in the mutilated graph's topological order.
  std::vector<Sample> ancestor_sample(const std::optional<Intervention>& intervention,
                                      std::size_t n, Rng& rng) const;

  // One joint draw per row of `values`, clamping the set's targets to that
  // row. Returns a (rows x num_nodes) matrix. With an empty set, `values`
  // only determines the number of rows.
  Eigen::MatrixXd ancestor_sample_matrix(const InterventionSet& set,
                                         const Eigen::MatrixXd& values, Rng& rng) const;

 private:
  Dag graph_;
  std::vector<std::optional<Mechanism>> mechanisms_;
  std::vector<std::optional<RootDistribution>> roots_;
};

struct ScmFitOptions {
  FitOptions gp;
  std::uint64_t seed = 0;
};

// GP-fitted model of each node on its parents under `g`, estimated from
// observational data only. Root nodes get empirical resampling pools.
Scm fit_scm(const std::vector<Sample>& observational, const Dag& g,
            const ScmFitOptions& options = {});

}  // namespace ceopt
