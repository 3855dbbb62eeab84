#include "ceopt/scm.hpp"

#include <cmath>

namespace ceopt {

double RootDistribution::sample(Rng& rng) const {
  switch (kind) {
    case Kind::uniform: return draw_uniform(rng, a, b);
    case Kind::gaussian: return a + b * draw_normal(rng);
    case Kind::point: return a;
    case Kind::empirical:
      if (pool.empty()) throw InvalidData("empirical root has an empty pool");
      return pool[draw_index(rng, pool.size())];
  }
  throw InternalError("unreachable root kind");
}

Mechanism Mechanism::closed(std::function<double(const Eigen::VectorXd&)> f, double noise) {
  if (noise < 0.0) throw InvalidData("noise scale must be >= 0");
  Mechanism m;
  m.kind = Kind::closed_form;
  m.fn = std::move(f);
  m.noise_scale = noise;
  return m;
}

Mechanism Mechanism::fitted(GaussianProcess gp) {
  Mechanism m;
  m.kind = Kind::gp_fitted;
  m.gp = std::move(gp);
  return m;
}

Scm::Scm(Dag graph, std::vector<std::optional<Mechanism>> mechanisms,
         std::vector<std::optional<RootDistribution>> roots)
    : graph_(std::move(graph)), mechanisms_(std::move(mechanisms)), roots_(std::move(roots)) {
  const std::size_t n = graph_.num_nodes();
  if (mechanisms_.size() != n || roots_.size() != n)
    throw InvalidData("mechanism/root lists must cover every node");
  for (std::size_t i = 0; i < n; ++i) {
    const bool root = graph_.is_root(i);
    if (root && (!roots_[i] || mechanisms_[i]))
      throw InvalidData("root node '" + graph_.node(i).name + "' needs exactly a root distribution");
    if (!root) {
      if (!mechanisms_[i] || roots_[i])
        throw InvalidData("node '" + graph_.node(i).name + "' needs exactly a mechanism");
      if (mechanisms_[i]->kind == Mechanism::Kind::gp_fitted &&
          mechanisms_[i]->gp.input_dim() != graph_.parents(i).size())
        throw InvalidData("mechanism arity mismatch at '" + graph_.node(i).name + "'");
    }
  }
}

bool Scm::is_gp_fitted(std::size_t node) const {
  return mechanisms_[node] && mechanisms_[node]->kind == Mechanism::Kind::gp_fitted;
}

const Mechanism& Scm::mechanism(std::size_t node) const {
  if (!mechanisms_[node]) throw InvalidData("node has no mechanism (root)");
  return *mechanisms_[node];
}

const RootDistribution& Scm::root(std::size_t node) const {
  if (!roots_[node]) throw InvalidData("node has no root distribution");
  return *roots_[node];
}

Eigen::MatrixXd Scm::ancestor_sample_matrix(const InterventionSet& set,
                                            const Eigen::MatrixXd& values, Rng& rng) const {
  const Eigen::Index n = values.rows();
  if (n < 1) throw InvalidData("ancestor sampling needs at least one row");
  const std::size_t num_nodes = graph_.num_nodes();

  std::vector<int> clamped(num_nodes, -1);  // column into `values`
  Dag sampling_graph = graph_;
  if (!set.empty()) {
    if (static_cast<std::size_t>(values.cols()) != set.size())
      throw InvalidIntervention("intervention values/targets size mismatch");
    for (std::size_t t = 0; t < set.size(); ++t) {
      for (Eigen::Index i = 0; i < n; ++i)
        if (!set.domains[t].contains(values(i, static_cast<Eigen::Index>(t))))
          throw InvalidIntervention("value " + std::to_string(values(i, static_cast<Eigen::Index>(t))) +
                                    " outside the domain of '" + set.targets[t] + "'");
      clamped[graph_.index_of(set.targets[t])] = static_cast<int>(t);
    }
    sampling_graph = graph_.mutilate(set);
  }

  Eigen::MatrixXd cols(n, num_nodes);
  for (std::size_t node : sampling_graph.topological_order()) {
    const Eigen::Index c = static_cast<Eigen::Index>(node);
    if (clamped[node] >= 0) {
      cols.col(c) = values.col(clamped[node]);
      continue;
    }
    if (graph_.is_root(node)) {
      const auto& dist = *roots_[node];
      for (Eigen::Index i = 0; i < n; ++i) cols(i, c) = dist.sample(rng);
      continue;
    }
    const auto& parents = graph_.parents(node);
    Eigen::MatrixXd pa(n, parents.size());
    for (std::size_t p = 0; p < parents.size(); ++p)
      pa.col(static_cast<Eigen::Index>(p)) = cols.col(static_cast<Eigen::Index>(parents[p]));

    const Mechanism& mech = *mechanisms_[node];
    if (mech.kind == Mechanism::Kind::closed_form) {
      for (Eigen::Index i = 0; i < n; ++i) {
        double v = mech.fn(pa.row(i));
        if (mech.noise_scale > 0.0) v += mech.noise_scale * draw_normal(rng);
        cols(i, c) = v;
      }
    } else {
      // Batched posterior predictive draw: model variance plus noise.
      Eigen::VectorXd mean, var;
      mech.gp.predict_mean_var(pa, mean, var);
      const double noise = mech.gp.noise_variance();
      for (Eigen::Index i = 0; i < n; ++i)
        cols(i, c) = mean[i] + std::sqrt(var[i] + noise) * draw_normal(rng);
    }
  }
  return cols;
}

std::vector<Sample> Scm::ancestor_sample(const std::optional<Intervention>& intervention,
                                         std::size_t n, Rng& rng) const {
  if (n < 1) throw InvalidData("ancestor_sample needs n >= 1");
  InterventionSet set;
  Eigen::MatrixXd values(static_cast<Eigen::Index>(n), 0);
  if (intervention && !intervention->set.empty()) {
    set = intervention->set;
    values.resize(static_cast<Eigen::Index>(n), intervention->values.size());
    values.rowwise() = intervention->values.transpose();
  }
  const Eigen::MatrixXd cols = ancestor_sample_matrix(set, values, rng);
  std::vector<Sample> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i].values = cols.row(static_cast<Eigen::Index>(i));
  return out;
}

Scm fit_scm(const std::vector<Sample>& observational, const Dag& g, const ScmFitOptions& options) {
  if (observational.size() < 2) throw InvalidData("fitting an SCM needs at least 2 samples");
  const std::size_t num_nodes = g.num_nodes();
  const Eigen::Index n = static_cast<Eigen::Index>(observational.size());
  for (const auto& s : observational)
    if (static_cast<std::size_t>(s.values.size()) != num_nodes)
      throw InvalidData("observational sample does not cover every node");

  Eigen::MatrixXd data(n, num_nodes);
  for (Eigen::Index i = 0; i < n; ++i) data.row(i) = observational[static_cast<std::size_t>(i)].values;
  if (!data.allFinite()) throw InvalidData("non-finite observational data");

  std::vector<std::optional<Mechanism>> mechanisms(num_nodes);
  std::vector<std::optional<RootDistribution>> roots(num_nodes);
  for (std::size_t node = 0; node < num_nodes; ++node) {
    const Eigen::Index c = static_cast<Eigen::Index>(node);
    if (g.is_root(node)) {
      RootDistribution dist;
      dist.kind = RootDistribution::Kind::empirical;
      dist.pool.assign(data.col(c).data(), data.col(c).data() + n);
      roots[node] = std::move(dist);
      continue;
    }
    const auto& parents = g.parents(node);
    Eigen::MatrixXd X(n, parents.size());
    for (std::size_t p = 0; p < parents.size(); ++p)
      X.col(static_cast<Eigen::Index>(p)) = data.col(static_cast<Eigen::Index>(parents[p]));
    FitOptions fit = options.gp;
    fit.seed = derive_seed(options.seed, 0x5c3aULL, node);
    mechanisms[node] = Mechanism::fitted(fit_gp(X, data.col(c), fit));
  }
  return Scm(g, std::move(mechanisms), std::move(roots));
}

}  // namespace ceopt
