#include "ceopt/posterior.hpp"

#include <cmath>

namespace ceopt {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double gaussian_log_density(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

}  // namespace

FittedGraphModel fit_graph_model(const std::vector<Sample>& observational, const Dag& g,
                                 const ScmFitOptions& options) {
  if (observational.empty()) throw InvalidData("observational data is empty");
  FittedGraphModel model{fit_scm(observational, g, options), 0.0,
                         Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.num_nodes())),
                         Eigen::VectorXd::Ones(static_cast<Eigen::Index>(g.num_nodes()))};

  const Eigen::Index n = static_cast<Eigen::Index>(observational.size());
  for (std::size_t node = 0; node < g.num_nodes(); ++node) {
    const Eigen::Index c = static_cast<Eigen::Index>(node);
    if (g.is_root(node)) {
      Eigen::VectorXd col(n);
      for (Eigen::Index i = 0; i < n; ++i) col[i] = observational[static_cast<std::size_t>(i)][node];
      const double mean = col.mean();
      const double var = std::max((col.array() - mean).square().sum() / double(n), 1e-12);
      model.root_mean[c] = mean;
      model.root_var[c] = var;
      for (Eigen::Index i = 0; i < n; ++i)
        model.observational_loglik += gaussian_log_density(col[i], mean, var);
    } else {
      model.observational_loglik += model.scm.mechanism(node).gp.log_marginal_likelihood();
    }
  }
  return model;
}

double observational_log_likelihood(const std::vector<Sample>& observational, const Dag& g,
                                    const ScmFitOptions& options) {
  return fit_graph_model(observational, g, options).observational_loglik;
}

Eigen::VectorXd interventional_log_likelihood_batch(const FittedGraphModel& model,
                                                    const InterventionSet& set,
                                                    const Eigen::MatrixXd& samples) {
  const Dag& g = model.scm.graph();
  const Eigen::Index k = samples.rows();
  if (static_cast<std::size_t>(samples.cols()) != g.num_nodes())
    throw InvalidData("record samples must cover every node");

  std::vector<bool> intervened(g.num_nodes(), false);
  for (const auto& name : set.targets) intervened[g.index_of(name)] = true;

  Eigen::VectorXd total = Eigen::VectorXd::Zero(k);
  for (std::size_t node = 0; node < g.num_nodes(); ++node) {
    if (intervened[node]) continue;
    const Eigen::Index c = static_cast<Eigen::Index>(node);
    if (g.is_root(node)) {
      for (Eigen::Index i = 0; i < k; ++i)
        total[i] += gaussian_log_density(samples(i, c), model.root_mean[c], model.root_var[c]);
      continue;
    }
    const Mechanism& mech = model.scm.mechanism(node);
    if (mech.kind != Mechanism::Kind::gp_fitted)
      throw InvalidData("interventional likelihood needs GP-fitted mechanisms");
    const auto& parents = g.parents(node);
    Eigen::MatrixXd pa(k, parents.size());
    for (std::size_t p = 0; p < parents.size(); ++p)
      pa.col(static_cast<Eigen::Index>(p)) = samples.col(static_cast<Eigen::Index>(parents[p]));
    Eigen::VectorXd mean, var;
    mech.gp.predict_mean_var(pa, mean, var);
    const double noise = mech.gp.noise_variance();
    for (Eigen::Index i = 0; i < k; ++i)
      total[i] += gaussian_log_density(samples(i, c), mean[i], var[i] + noise);
  }
  return total;
}

double interventional_log_likelihood(const FittedGraphModel& model,
                                     const InterventionalRecord& record) {
  const std::size_t n = model.scm.graph().num_nodes();
  if (static_cast<std::size_t>(record.sample.values.size()) != n)
    throw InvalidData("record sample does not cover every node");
  if (!record.sample.values.allFinite()) throw InvalidData("record holds non-finite values");
  Eigen::MatrixXd samples(1, n);
  samples.row(0) = record.sample.values;
  return interventional_log_likelihood_batch(model, record.set, samples)[0];
}

GraphPosterior::GraphPosterior(std::shared_ptr<const HypothesisSpace> space,
                               Eigen::VectorXd log_weights)
    : space_(std::move(space)), log_weights_(std::move(log_weights)) {
  if (!space_) throw InvalidData("posterior needs a hypothesis space");
  if (static_cast<std::size_t>(log_weights_.size()) != space_->size())
    throw InvalidData("one log weight per hypothesis graph required");
  // log-sum-exp normalization with max subtraction; stable across long runs.
  const double m = log_weights_.maxCoeff();
  if (!std::isfinite(m)) throw NumericalFailure("posterior log weights are not finite");
  const Eigen::ArrayXd shifted = (log_weights_.array() - m).exp();
  probs_ = (shifted / shifted.sum()).matrix();
}

GraphPosterior GraphPosterior::uniform(std::shared_ptr<const HypothesisSpace> space) {
  const Eigen::Index n = static_cast<Eigen::Index>(space->size());
  return GraphPosterior(std::move(space), Eigen::VectorXd::Zero(n));
}

GraphPosterior GraphPosterior::updated(const Eigen::VectorXd& delta_log_lik) const {
  if (delta_log_lik.size() != log_weights_.size())
    throw InvalidData("per-graph likelihood increment size mismatch");
  return GraphPosterior(space_, log_weights_ + delta_log_lik);
}

double GraphPosterior::entropy() const {
  double h = 0.0;
  for (Eigen::Index i = 0; i < probs_.size(); ++i)
    if (probs_[i] > 0.0) h -= probs_[i] * std::log(probs_[i]);
  return std::max(h, 0.0);
}

std::size_t GraphPosterior::argmax() const {
  Eigen::Index best = 0;
  probs_.maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

double GraphPosterior::total_variation(const GraphPosterior& other) const {
  return 0.5 * (probs_ - other.probs_).cwiseAbs().sum();
}

std::size_t GraphPosterior::sample(Rng& rng) const {
  double u = draw_uniform(rng, 0.0, 1.0);
  for (Eigen::Index i = 0; i < probs_.size(); ++i) {
    u -= probs_[i];
    if (u <= 0.0) return static_cast<std::size_t>(i);
  }
  return static_cast<std::size_t>(probs_.size() - 1);
}

GraphPosterior update(const GraphPosterior& posterior,
                      const std::vector<FittedGraphModel>& models,
                      const std::vector<InterventionalRecord>& records) {
  if (models.size() != posterior.size())
    throw InvalidData("one fitted model per hypothesis graph required");
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(models.size()));
  for (std::size_t g = 0; g < models.size(); ++g)
    for (const auto& record : records)
      delta[static_cast<Eigen::Index>(g)] += interventional_log_likelihood(models[g], record);
  return posterior.updated(delta);
}

double posterior_entropy(const GraphPosterior& posterior) { return posterior.entropy(); }

}  // namespace ceopt
