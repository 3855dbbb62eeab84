#pragma once

#include <functional>
#include <vector>

#include "ceopt/posterior.hpp"
#include "ceopt/surrogate.hpp"

namespace ceopt {

// Gaussian kernel density over scalar samples, bandwidth by Silverman's
// rule with a floor against collapsed sample sets.
struct Kde {
  Eigen::VectorXd samples;
  double bandwidth = 0.0;

  static Kde fit(Eigen::VectorXd samples, double bandwidth_floor = 1e-3);
  double density(double y) const;
  Eigen::VectorXd density(const Eigen::VectorXd& ys) const;
  double sample_min() const { return samples.minCoeff(); }
  double sample_max() const { return samples.maxCoeff(); }
};

// -Int p log p by composite trapezoid over [lo, hi].
double kde_entropy(const Kde& kde, double lo, double hi, int resolution);
// Default range: sample extent +- 5 bandwidths.
double kde_entropy(const Kde& kde, int resolution = 512);

// Optimum draws of one surrogate over its candidate grid: y[j] is the
// extremum of the j-th joint posterior draw, grid_index[j] its location
// (first index on ties).
struct SetOptima {
  Eigen::VectorXd y;
  std::vector<Eigen::Index> grid_index;
};

SetOptima thompson_optima(const CausalSurrogate& surrogate, int draws,
                          const Eigen::MatrixXd& grid, Rng& rng, bool minimize);

// Softmax belief that each set's optimum is the global one, from the
// extremum of each posterior mean and the posterior sd at that point.
Eigen::VectorXd ucb_weights(const Eigen::VectorXd& mu_star, const Eigen::VectorXd& sigma_star,
                            double beta, bool minimize);

// K draws from the weighted mixture of per-set optimum distributions, each
// tagged with the set and grid location it came from, plus the fitted KDE
// of the drawn y* values.
struct MixtureDraws {
  Eigen::VectorXd y;
  std::vector<int> set_id;
  std::vector<Eigen::Index> grid_index;
  Kde kde;
};

MixtureDraws build_opt_mixture(const std::vector<SetOptima>& per_set,
                               const Eigen::VectorXd& weights, int count, Rng& rng,
                               double bandwidth_floor = 1e-3);

// Maps a tagged optimum draw to the graph posterior obtained by
// incorporating it as a pseudo-observation (fantasizing the non-target
// values). Stubbed in tests.
using GraphUpdateOracle =
    std::function<GraphPosterior(const GraphPosterior& posterior, int set_id,
                                 const Eigen::VectorXd& x_star, double y_star)>;

// Joint entropy of (y*, G): Monte Carlo conditional-entropy term over the
// tagged mixture draws plus the KDE entropy of the y* marginal.
double joint_entropy(const GraphPosterior& posterior, const MixtureDraws& draws,
                     const std::vector<Eigen::MatrixXd>& grids, const GraphUpdateOracle& oracle,
                     int quadrature);

struct AcquisitionScore {
  int set_id = -1;
  Eigen::VectorXd x;
  double score = 0.0;
  bool graph_known_branch = false;
  double entropy_before = 0.0;
  double entropy_after_mean = 0.0;
};

using CostFn = std::function<double(const InterventionSet&, const Eigen::VectorXd&)>;

struct AcquisitionParams {
  int thompson_draws = 200;      // posterior function draws per set
  int mixture_draws = 400;       // draws of the global-optimum mixture
  int fantasies = 5;             // fantasy observations per candidate
  int grid_points = 50;          // candidate grid size (per dim for 1-d sets)
  int quadrature = 512;
  double beta = 0.1;
  double eps_graph = 0.01;       // posterior entropy below this: graph known
  double bandwidth_floor = 1e-3;
  bool common_random_numbers = true;
  long do_mc_samples = 500;
  std::size_t prior_grid_1d = 100;
  std::size_t prior_grid_nd = 20;
  double prior_rebuild_tv = 0.01;
};

// Immutable snapshot of everything a score evaluation may read.
struct AcquisitionState {
  const std::vector<CausalSurrogate>& surrogates;   // one per exploration set
  const std::vector<Eigen::MatrixXd>& grids;        // candidate grid per set
  const GraphPosterior& posterior;
  const std::vector<FittedGraphModel>& models;      // one per hypothesis
  bool minimize = true;
  AcquisitionParams params;
  CostFn cost;
};

// Candidate-independent stage of an acquisition round: Thompson samples,
// set weights, optimum mixture, and the current entropy of the branch in
// force.
struct CesRound {
  std::vector<SetOptima> optima;
  Eigen::VectorXd mu_star, sigma_star;
  Eigen::VectorXd weights;
  MixtureDraws mixture;
  bool graph_known = false;
  double entropy_now = 0.0;
};

CesRound prepare_ces_round(const AcquisitionState& state, Rng& rng);

// Default fantasy oracle: draws a hypothesis from the posterior, ancestor-
// samples the non-target values under the intervention through its fitted
// SCM, and scores the pseudo-record against every hypothesis.
GraphUpdateOracle make_fantasy_oracle(const AcquisitionState& state, std::uint64_t seed);

// Expected joint-entropy reduction per unit cost of intervening at
// (set, x), estimated over `params.fantasies` fantasy outcomes.
AcquisitionScore ces_score(int set_id, const Eigen::VectorXd& x, const AcquisitionState& state,
                           const CesRound& round, Rng& rng);

// Expected improvement per unit cost over the surrogate posterior.
AcquisitionScore cei_score(int set_id, const Eigen::VectorXd& x, const AcquisitionState& state,
                           double incumbent);

// Expected reduction of the graph-posterior entropy per unit cost.
AcquisitionScore structure_mi_score(int set_id, const Eigen::VectorXd& x,
                                    const AcquisitionState& state, Rng& rng);

// Closed-form expected improvement of a Gaussian belief over an incumbent.
double expected_improvement(double mean, double variance, double incumbent, bool minimize);

}  // namespace ceopt
