#pragma once

#include <memory>
#include <vector>

#include "ceopt/scm.hpp"

namespace ceopt {

// One causal hypothesis made quantitative: a GP-fitted SCM under that graph
// plus its observational score (sum of mechanism marginal likelihoods and
// root Gaussian densities).
struct FittedGraphModel {
  Scm scm;
  double observational_loglik = 0.0;
  // Fitted Gaussian marginal of each root node (entries for non-roots are
  // unused). Root sets differ across hypotheses, so these terms keep
  // likelihoods comparable graph to graph.
  Eigen::VectorXd root_mean;
  Eigen::VectorXd root_var;
};

FittedGraphModel fit_graph_model(const std::vector<Sample>& observational, const Dag& g,
                                 const ScmFitOptions& options = {});

// Observational score of a hypothesis: fits the per-node GPs by type-II ML
// and returns the summed log marginal likelihoods plus the fitted-Gaussian
// log density of each root column.
double observational_log_likelihood(const std::vector<Sample>& observational, const Dag& g,
                                    const ScmFitOptions& options = {});

// Predictive log likelihood of one interventional record under a fitted
// model: each non-intervened non-root node contributes
// log N(v_j; m_j(pa), S_j(pa) + noise_j), with intervened parents reading
// their clamped values straight from the record's sample; non-intervened
// roots score under their fitted Gaussian marginal. Intervened nodes
// contribute nothing.
double interventional_log_likelihood(const FittedGraphModel& model,
                                     const InterventionalRecord& record);

// Batched variant for many records sharing one intervention set: row k of
// `samples` is record k's full joint sample. Returns one log likelihood per
// record.
Eigen::VectorXd interventional_log_likelihood_batch(const FittedGraphModel& model,
                                                    const InterventionSet& set,
                                                    const Eigen::MatrixXd& samples);

// Normalized beliefs over an enumerated hypothesis space. Values are
// immutable; updates return a new posterior.
class GraphPosterior {
 public:
  GraphPosterior(std::shared_ptr<const HypothesisSpace> space, Eigen::VectorXd log_weights);

  static GraphPosterior uniform(std::shared_ptr<const HypothesisSpace> space);

  const HypothesisSpace& space() const { return *space_; }
  std::shared_ptr<const HypothesisSpace> space_ptr() const { return space_; }
  std::size_t size() const { return space_->size(); }

  const Eigen::VectorXd& log_weights() const { return log_weights_; }
  const Eigen::VectorXd& probabilities() const { return probs_; }
  double probability(std::size_t g) const { return probs_[static_cast<Eigen::Index>(g)]; }

  // New posterior with per-graph log likelihood increments applied.
  GraphPosterior updated(const Eigen::VectorXd& delta_log_lik) const;

  // Shannon entropy of the weights, in nats; zero iff a point mass.
  double entropy() const;
  std::size_t argmax() const;
  double total_variation(const GraphPosterior& other) const;
  std::size_t sample(Rng& rng) const;

 private:
  std::shared_ptr<const HypothesisSpace> space_;
  Eigen::VectorXd log_weights_;
  Eigen::VectorXd probs_;
};

// Posterior after incorporating a batch of interventional records, scored
// against each hypothesis' fitted model. Order of records does not matter.
GraphPosterior update(const GraphPosterior& posterior,
                      const std::vector<FittedGraphModel>& models,
                      const std::vector<InterventionalRecord>& records);

double posterior_entropy(const GraphPosterior& posterior);

}  // namespace ceopt
