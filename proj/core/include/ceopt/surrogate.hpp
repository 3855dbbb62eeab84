#pragma once

#include <memory>
#include <vector>

#include "ceopt/posterior.hpp"
#include "ceopt/scm.hpp"

namespace ceopt {

// Monte Carlo estimate of the mean and variance of the target under one
// intervention in one hypothesis graph.
struct DoMomentEstimate {
  double mean = 0.0;
  double variance = 0.0;
  long mc_samples = 0;
};

// Mean/variance of Y under do(set = x), estimated by ancestor sampling
// through the fitted SCM's mutilated graph. Draws in chunks until the
// standard error of the mean drops below `sem_tolerance` or the sample cap
// is reached; a tolerance of zero always spends the full cap. Variance is
// zero (and meaningless) below two samples.
DoMomentEstimate estimate_do_moments(const Scm& fitted, const InterventionSet& set,
                                     const Eigen::VectorXd& x, long mc_samples, Rng& rng,
                                     double sem_tolerance = 0.0);

// Row-major product grid over an intervention set's box domain.
struct GridSpec {
  std::vector<Eigen::VectorXd> axes;

  std::size_t dim() const { return axes.size(); }
  std::size_t num_points() const;
  Eigen::VectorXd point(std::size_t flat) const;
  Eigen::MatrixXd all_points() const;

  // Multilinear interpolation of per-grid-point `values` at x (clamped to
  // the grid's bounding box).
  double interpolate(const Eigen::VectorXd& values, const Eigen::VectorXd& x) const;
};

GridSpec make_grid(const InterventionSet& set, std::size_t points_1d = 100,
                   std::size_t points_per_dim_nd = 20);

// Per-graph do-moments tabulated on a grid, computed once per (graph, set)
// since the fitted mechanisms are frozen on the observational data.
struct MomentTable {
  GridSpec grid;
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

MomentTable tabulate_do_moments(const Scm& fitted, const InterventionSet& set,
                                const GridSpec& grid, long mc_samples, Rng& rng);

// Graph-marginalized prior for one intervention set: pointwise posterior
// mixture of the per-graph do-means, and a variance offset combining the
// within-graph do-variances with the between-graph spread of the do-means.
struct PriorTable {
  GridSpec grid;
  Eigen::VectorXd mean;
  Eigen::VectorXd offset;

  double mean_at(const Eigen::VectorXd& x) const { return grid.interpolate(mean, x); }
  double offset_at(const Eigen::VectorXd& x) const {
    return std::max(grid.interpolate(offset, x), 0.0);
  }
};

PriorTable build_prior(const std::vector<MomentTable>& per_graph,
                       const Eigen::VectorXd& graph_probabilities);

struct SurrogateOptions {
  double default_signal_variance = 1.0;
  double default_noise_variance = 1.0;    // observation noise s^2 before any fit
  double lengthscale_fraction = 0.2;      // of the domain width, for defaults
  std::size_t min_pairs_for_fit = 3;
  FitOptions fit;
};

// GP over the causal effect of one intervention set, with the
// graph-marginalized do-calculus prior mean and a heteroscedastic prior
// variance inflation. Conditioning returns a new value.
class CausalSurrogate {
 public:
  CausalSurrogate(InterventionSet set, std::shared_ptr<const PriorTable> prior,
                  RbfKernel base_kernel, double noise_variance);

  // Builds a surrogate from training pairs; kernel hyperparameters and the
  // observation noise are refit by type-II ML once enough pairs exist,
  // otherwise domain-scaled defaults are used.
  static CausalSurrogate build(const InterventionSet& set,
                               std::shared_ptr<const PriorTable> prior,
                               const Eigen::MatrixXd& inputs, const Eigen::VectorXd& outputs,
                               const SurrogateOptions& options, std::uint64_t seed);

  const InterventionSet& set() const { return set_; }
  const std::shared_ptr<const PriorTable>& prior() const { return prior_; }
  const GaussianProcess& gp() const { return gp_; }
  double noise_variance() const { return gp_.noise_variance(); }
  const Eigen::MatrixXd& train_inputs() const { return gp_.train_inputs(); }
  const Eigen::VectorXd& train_outputs() const { return gp_.train_outputs(); }

  double prior_mean_at(const Eigen::VectorXd& x) const { return prior_->mean_at(x); }
  double prior_offset_at(const Eigen::VectorXd& x) const { return prior_->offset_at(x); }

  // Latent posterior over query rows under the injected prior.
  std::vector<PosteriorGaussian> posterior(const Eigen::MatrixXd& queries) const;
  void posterior_mean_var(const Eigen::MatrixXd& queries, Eigen::VectorXd& mean,
                          Eigen::VectorXd& variance) const;

  CausalSurrogate with_pair(const Eigen::VectorXd& x, double y) const;

 private:
  InterventionSet set_;
  std::shared_ptr<const PriorTable> prior_;
  GaussianProcess gp_;
};

}  // namespace ceopt
