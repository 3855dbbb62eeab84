#include "ceopt/acquisition.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace ceopt {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

double normal_cdf(double u) { return 0.5 * std::erfc(-u / std::sqrt(2.0)); }
double normal_pdf(double u) { return kInvSqrt2Pi * std::exp(-0.5 * u * u); }

std::uint64_t bits(double x) { return std::bit_cast<std::uint64_t>(x); }

}  // namespace

Kde Kde::fit(Eigen::VectorXd samples, double bandwidth_floor) {
  if (samples.size() < 1) throw InvalidData("KDE needs at least one sample");
  if (!samples.allFinite()) throw InvalidData("KDE samples must be finite");
  const Eigen::Index n = samples.size();
  Kde kde;
  kde.samples = std::move(samples);

  double bw = bandwidth_floor;
  if (n >= 2) {
    const double mean = kde.samples.mean();
    const double sd = std::sqrt((kde.samples.array() - mean).square().sum() / double(n - 1));
    std::vector<double> sorted(kde.samples.data(), kde.samples.data() + n);
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&](double q) {
      const double pos = q * double(n - 1);
      const std::size_t i = static_cast<std::size_t>(pos);
      const double f = pos - double(i);
      return i + 1 < sorted.size() ? (1.0 - f) * sorted[i] + f * sorted[i + 1] : sorted[i];
    };
    const double iqr = quantile(0.75) - quantile(0.25);
    double spread = sd;
    if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
    bw = 0.9 * spread * std::pow(double(n), -0.2);
  }
  kde.bandwidth = std::max(bw, bandwidth_floor);
  return kde;
}

double Kde::density(double y) const {
  const double h = bandwidth;
  const Eigen::ArrayXd z = ((samples.array() - y) / h).square();
  return (-0.5 * z).exp().sum() * kInvSqrt2Pi / (double(samples.size()) * h);
}

Eigen::VectorXd Kde::density(const Eigen::VectorXd& ys) const {
  Eigen::VectorXd out(ys.size());
  for (Eigen::Index i = 0; i < ys.size(); ++i) out[i] = density(ys[i]);
  return out;
}

double kde_entropy(const Kde& kde, double lo, double hi, int resolution) {
  if (resolution < 50) throw InvalidQuery("quadrature resolution must be >= 50");
  if (!(lo < hi)) throw InvalidQuery("quadrature range must be non-empty");
  const double dx = (hi - lo) / double(resolution - 1);
  double total = 0.0;
  for (int i = 0; i < resolution; ++i) {
    const double p = std::max(kde.density(lo + dx * double(i)), 1e-300);
    const double v = -p * std::log(p);
    total += (i == 0 || i == resolution - 1) ? 0.5 * v : v;
  }
  return total * dx;
}

double kde_entropy(const Kde& kde, int resolution) {
  const double pad = 5.0 * kde.bandwidth;
  return kde_entropy(kde, kde.sample_min() - pad, kde.sample_max() + pad, resolution);
}

SetOptima thompson_optima(const CausalSurrogate& surrogate, int draws,
                          const Eigen::MatrixXd& grid, Rng& rng, bool minimize) {
  if (draws < 1) throw InvalidQuery("thompson sampling needs draws >= 1");
  if (grid.rows() < 1) throw InvalidQuery("thompson sampling needs a non-empty grid");
  const Eigen::MatrixXd paths = surrogate.gp().sample_joint(grid, draws, rng);
  SetOptima out;
  out.y.resize(draws);
  out.grid_index.resize(static_cast<std::size_t>(draws));
  for (int j = 0; j < draws; ++j) {
    Eigen::Index idx = 0;
    out.y[j] = minimize ? paths.row(j).minCoeff(&idx) : paths.row(j).maxCoeff(&idx);
    out.grid_index[static_cast<std::size_t>(j)] = idx;
  }
  return out;
}

Eigen::VectorXd ucb_weights(const Eigen::VectorXd& mu_star, const Eigen::VectorXd& sigma_star,
                            double beta, bool minimize) {
  if (mu_star.size() != sigma_star.size()) throw InvalidData("ucb weight input size mismatch");
  if (beta < 0.0) throw InvalidData("beta must be >= 0");
  Eigen::ArrayXd score = mu_star.array() + beta * sigma_star.array();
  if (minimize) score = -mu_star.array() + beta * sigma_star.array();
  score -= score.maxCoeff();
  const Eigen::ArrayXd w = score.exp();
  return (w / w.sum()).matrix();
}

MixtureDraws build_opt_mixture(const std::vector<SetOptima>& per_set,
                               const Eigen::VectorXd& weights, int count, Rng& rng,
                               double bandwidth_floor) {
  if (per_set.empty() || static_cast<std::size_t>(weights.size()) != per_set.size())
    throw InvalidData("mixture needs one weight per component");
  for (const auto& c : per_set)
    if (c.y.size() < 1) throw InvalidData("mixture component has no samples");
  if (count < 1) throw InvalidData("mixture needs count >= 1");

  MixtureDraws out;
  out.y.resize(count);
  out.set_id.resize(static_cast<std::size_t>(count));
  out.grid_index.resize(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    double u = draw_uniform(rng, 0.0, 1.0);
    int set_id = 0;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
      u -= weights[i];
      if (u <= 0.0) {
        set_id = static_cast<int>(i);
        break;
      }
      if (i + 1 == weights.size()) set_id = static_cast<int>(i);
    }
    const auto& comp = per_set[static_cast<std::size_t>(set_id)];
    const std::size_t j = draw_index(rng, static_cast<std::size_t>(comp.y.size()));
    out.y[k] = comp.y[static_cast<Eigen::Index>(j)];
    out.set_id[static_cast<std::size_t>(k)] = set_id;
    out.grid_index[static_cast<std::size_t>(k)] = comp.grid_index[j];
  }
  out.kde = Kde::fit(out.y, bandwidth_floor);
  return out;
}

double joint_entropy(const GraphPosterior& posterior, const MixtureDraws& draws,
                     const std::vector<Eigen::MatrixXd>& grids, const GraphUpdateOracle& oracle,
                     int quadrature) {
  const Eigen::Index k = draws.y.size();
  double conditional = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const int set_id = draws.set_id[static_cast<std::size_t>(i)];
    const Eigen::VectorXd x_star =
        grids[static_cast<std::size_t>(set_id)].row(draws.grid_index[static_cast<std::size_t>(i)]);
    conditional += oracle(posterior, set_id, x_star, draws.y[i]).entropy();
  }
  return conditional / double(k) + kde_entropy(draws.kde, quadrature);
}

namespace {

// Per-graph log likelihood increments of a single fantasy record.
Eigen::VectorXd record_delta(const AcquisitionState& state, const InterventionSet& set,
                             const Eigen::MatrixXd& sample_row) {
  Eigen::VectorXd delta(static_cast<Eigen::Index>(state.models.size()));
  for (std::size_t g = 0; g < state.models.size(); ++g)
    delta[static_cast<Eigen::Index>(g)] =
        interventional_log_likelihood_batch(state.models[g], set, sample_row)[0];
  return delta;
}

// Batched joint entropy used inside score evaluations: fantasizes the
// non-target values of every tagged draw, grouped by (set, sampled graph)
// so GP predictions run on whole batches, then scores all pseudo-records
// against every hypothesis at once.
double joint_entropy_fast(const GraphPosterior& posterior, const MixtureDraws& draws,
                          const AcquisitionState& state, std::uint64_t seed, int quadrature) {
  const std::size_t k = static_cast<std::size_t>(draws.y.size());
  const std::size_t num_graphs = state.models.size();
  const std::size_t num_nodes = state.models[0].scm.graph().num_nodes();
  const std::size_t target = state.models[0].scm.graph().target_index();

  // Draw the fantasy graph of each tagged sample, then partition.
  Rng pick_rng = make_rng(seed, 0x7a11u);
  std::vector<std::vector<std::size_t>> partition(state.surrogates.size() * num_graphs);
  std::vector<std::size_t> fantasy_graph(k);
  for (std::size_t i = 0; i < k; ++i) {
    fantasy_graph[i] = posterior.sample(pick_rng);
    partition[static_cast<std::size_t>(draws.set_id[i]) * num_graphs + fantasy_graph[i]].push_back(i);
  }

  Eigen::MatrixXd samples(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(num_nodes));
  for (std::size_t s = 0; s < state.surrogates.size(); ++s) {
    const InterventionSet& set = state.surrogates[s].set();
    for (std::size_t g = 0; g < num_graphs; ++g) {
      const auto& members = partition[s * num_graphs + g];
      if (members.empty()) continue;
      Eigen::MatrixXd values(static_cast<Eigen::Index>(members.size()),
                             static_cast<Eigen::Index>(set.size()));
      for (std::size_t m = 0; m < members.size(); ++m)
        values.row(static_cast<Eigen::Index>(m)) =
            state.grids[s].row(draws.grid_index[members[m]]);
      Rng rng = make_rng(seed, 0xfa27u, s, g);
      const Eigen::MatrixXd v = state.models[g].scm.ancestor_sample_matrix(set, values, rng);
      for (std::size_t m = 0; m < members.size(); ++m) {
        samples.row(static_cast<Eigen::Index>(members[m])) = v.row(static_cast<Eigen::Index>(m));
        samples(static_cast<Eigen::Index>(members[m]), static_cast<Eigen::Index>(target)) =
            draws.y[static_cast<Eigen::Index>(members[m])];
      }
    }
  }

  // Score every record against every hypothesis, batched per set.
  Eigen::MatrixXd delta(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(num_graphs));
  for (std::size_t s = 0; s < state.surrogates.size(); ++s) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < k; ++i)
      if (static_cast<std::size_t>(draws.set_id[i]) == s) members.push_back(i);
    if (members.empty()) continue;
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(members.size()),
                         static_cast<Eigen::Index>(num_nodes));
    for (std::size_t m = 0; m < members.size(); ++m)
      rows.row(static_cast<Eigen::Index>(m)) = samples.row(static_cast<Eigen::Index>(members[m]));
    for (std::size_t g = 0; g < num_graphs; ++g) {
      const Eigen::VectorXd ll =
          interventional_log_likelihood_batch(state.models[g], state.surrogates[s].set(), rows);
      for (std::size_t m = 0; m < members.size(); ++m)
        delta(static_cast<Eigen::Index>(members[m]), static_cast<Eigen::Index>(g)) = ll[static_cast<Eigen::Index>(m)];
    }
  }

  // Conditional entropy term, one softmax per record.
  const Eigen::VectorXd& logw = posterior.log_weights();
  double conditional = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    Eigen::ArrayXd lw = logw.array() + delta.row(static_cast<Eigen::Index>(i)).transpose().array();
    lw -= lw.maxCoeff();
    Eigen::ArrayXd p = lw.exp();
    p /= p.sum();
    double h = 0.0;
    for (Eigen::Index g = 0; g < p.size(); ++g)
      if (p[g] > 0.0) h -= p[g] * std::log(p[g]);
    conditional += h;
  }
  return conditional / double(k) + kde_entropy(draws.kde, quadrature);
}

void set_mu_sigma(const CausalSurrogate& surrogate, const Eigen::MatrixXd& grid, bool minimize,
                  double& mu_star, double& sigma_star) {
  Eigen::VectorXd mean, var;
  surrogate.posterior_mean_var(grid, mean, var);
  Eigen::Index idx = 0;
  mu_star = minimize ? mean.minCoeff(&idx) : mean.maxCoeff(&idx);
  sigma_star = std::sqrt(std::max(var[idx], 0.0));
}

}  // namespace

GraphUpdateOracle make_fantasy_oracle(const AcquisitionState& state, std::uint64_t seed) {
  const AcquisitionState* st = &state;
  return [st, seed](const GraphPosterior& posterior, int set_id, const Eigen::VectorXd& x_star,
                    double y_star) {
    Rng rng = make_rng(seed, 0x0c13u, static_cast<std::uint64_t>(set_id), bits(y_star),
                       bits(x_star[0]));
    const std::size_t g = posterior.sample(rng);
    const InterventionSet& set = st->surrogates[static_cast<std::size_t>(set_id)].set();
    Eigen::MatrixXd row = st->models[g].scm.ancestor_sample_matrix(set, x_star.transpose(), rng);
    row(0, static_cast<Eigen::Index>(st->models[g].scm.graph().target_index())) = y_star;
    return posterior.updated(record_delta(*st, set, row));
  };
}

CesRound prepare_ces_round(const AcquisitionState& state, Rng& rng) {
  const std::size_t num_sets = state.surrogates.size();
  if (num_sets == 0 || state.grids.size() != num_sets)
    throw InvalidData("acquisition state needs one grid per surrogate");

  CesRound round;
  round.optima.reserve(num_sets);
  round.mu_star.resize(static_cast<Eigen::Index>(num_sets));
  round.sigma_star.resize(static_cast<Eigen::Index>(num_sets));
  for (std::size_t s = 0; s < num_sets; ++s) {
    round.optima.push_back(thompson_optima(state.surrogates[s], state.params.thompson_draws,
                                           state.grids[s], rng, state.minimize));
    set_mu_sigma(state.surrogates[s], state.grids[s], state.minimize,
                 round.mu_star[static_cast<Eigen::Index>(s)],
                 round.sigma_star[static_cast<Eigen::Index>(s)]);
  }
  round.weights = ucb_weights(round.mu_star, round.sigma_star, state.params.beta, state.minimize);
  round.mixture = build_opt_mixture(round.optima, round.weights, state.params.mixture_draws, rng,
                                    state.params.bandwidth_floor);
  round.graph_known = state.posterior.entropy() < state.params.eps_graph;
  if (round.graph_known) {
    round.entropy_now = kde_entropy(round.mixture.kde, state.params.quadrature);
  } else {
    round.entropy_now =
        joint_entropy_fast(state.posterior, round.mixture, state, rng(), state.params.quadrature);
  }
  return round;
}

AcquisitionScore ces_score(int set_id, const Eigen::VectorXd& x, const AcquisitionState& state,
                           const CesRound& round, Rng& rng) {
  const std::size_t s = static_cast<std::size_t>(set_id);
  const InterventionSet& set = state.surrogates[s].set();
  const double cost = state.cost(set, x);
  if (!(cost > 0.0)) throw ScoreFailure("intervention cost must be positive");

  // Fantasy y is a noisy surrogate draw at x.
  Eigen::MatrixXd q(1, x.size());
  q.row(0) = x;
  Eigen::VectorXd mean, var;
  state.surrogates[s].posterior_mean_var(q, mean, var);
  const double y_sd = std::sqrt(std::max(var[0], 0.0) + state.surrogates[s].noise_variance());

  const int L = state.params.fantasies;
  double after_sum = 0.0;
  for (int l = 0; l < L; ++l) {
    // With the graph pinned down, a fantasy only conditions the surrogate;
    // the non-target outcome values matter solely through the belief update.
    GraphPosterior post_l = state.posterior;
    double y_l;
    if (round.graph_known) {
      y_l = mean[0] + y_sd * draw_normal(rng);
    } else {
      const std::size_t g = state.posterior.sample(rng);
      Eigen::MatrixXd row = state.models[g].scm.ancestor_sample_matrix(set, x.transpose(), rng);
      y_l = mean[0] + y_sd * draw_normal(rng);
      row(0, static_cast<Eigen::Index>(state.models[g].scm.graph().target_index())) = y_l;
      post_l = state.posterior.updated(record_delta(state, set, row));
    }
    const CausalSurrogate sur_l = state.surrogates[s].with_pair(x, y_l);

    std::vector<SetOptima> optima = round.optima;
    optima[s] = thompson_optima(sur_l, state.params.thompson_draws, state.grids[s], rng,
                                state.minimize);
    Eigen::VectorXd mu = round.mu_star, sigma = round.sigma_star;
    set_mu_sigma(sur_l, state.grids[s], state.minimize, mu[static_cast<Eigen::Index>(s)],
                 sigma[static_cast<Eigen::Index>(s)]);
    const Eigen::VectorXd weights = ucb_weights(mu, sigma, state.params.beta, state.minimize);
    const MixtureDraws mixture = build_opt_mixture(optima, weights, state.params.mixture_draws,
                                                   rng, state.params.bandwidth_floor);
    if (round.graph_known) {
      after_sum += kde_entropy(mixture.kde, state.params.quadrature);
    } else {
      after_sum += joint_entropy_fast(post_l, mixture, state, rng(), state.params.quadrature);
    }
  }
  const double after_mean = after_sum / double(L);
  const double score = (round.entropy_now - after_mean) / cost;
  if (!std::isfinite(score))
    throw ScoreFailure("non-finite acquisition score at set " + set.label());
  return {set_id, x, score, round.graph_known, round.entropy_now, after_mean};
}

double expected_improvement(double mean, double variance, double incumbent, bool minimize) {
  const double sd = std::sqrt(std::max(variance, 0.0));
  const double gap = minimize ? incumbent - mean : mean - incumbent;
  if (sd < 1e-12) return std::max(gap, 0.0);
  const double u = gap / sd;
  return sd * (u * normal_cdf(u) + normal_pdf(u));
}

AcquisitionScore cei_score(int set_id, const Eigen::VectorXd& x, const AcquisitionState& state,
                           double incumbent) {
  const std::size_t s = static_cast<std::size_t>(set_id);
  const double cost = state.cost(state.surrogates[s].set(), x);
  if (!(cost > 0.0)) throw ScoreFailure("intervention cost must be positive");
  Eigen::MatrixXd q(1, x.size());
  q.row(0) = x;
  Eigen::VectorXd mean, var;
  state.surrogates[s].posterior_mean_var(q, mean, var);
  const double ei = expected_improvement(mean[0], var[0], incumbent, state.minimize);
  return {set_id, x, ei / cost, true, 0.0, 0.0};
}

AcquisitionScore structure_mi_score(int set_id, const Eigen::VectorXd& x,
                                    const AcquisitionState& state, Rng& rng) {
  const std::size_t s = static_cast<std::size_t>(set_id);
  const InterventionSet& set = state.surrogates[s].set();
  const double cost = state.cost(set, x);
  if (!(cost > 0.0)) throw ScoreFailure("intervention cost must be positive");

  const double before = state.posterior.entropy();
  const int L = state.params.fantasies;
  double after = 0.0;
  for (int l = 0; l < L; ++l) {
    const std::size_t g = state.posterior.sample(rng);
    const Eigen::MatrixXd row = state.models[g].scm.ancestor_sample_matrix(set, x.transpose(), rng);
    after += state.posterior.updated(record_delta(state, set, row)).entropy();
  }
  after /= double(L);
  const double score = (before - after) / cost;
  if (!std::isfinite(score)) throw ScoreFailure("non-finite structure score at " + set.label());
  return {set_id, x, score, false, before, after};
}

}  // namespace ceopt
