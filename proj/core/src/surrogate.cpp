#include "ceopt/surrogate.hpp"

#include <cmath>

namespace ceopt {

DoMomentEstimate estimate_do_moments(const Scm& fitted, const InterventionSet& set,
                                     const Eigen::VectorXd& x, long mc_samples, Rng& rng,
                                     double sem_tolerance) {
  if (mc_samples < 1) throw InvalidData("do-moment estimation needs mc_samples >= 1");
  const std::size_t target = fitted.graph().target_index();
  const Intervention intervention{set, x};

  double sum = 0.0, sum_sq = 0.0;
  long count = 0;
  const long chunk = std::min<long>(mc_samples, 256);
  while (count < mc_samples) {
    const long take = std::min<long>(chunk, mc_samples - count);
    const auto samples = fitted.ancestor_sample(
        set.empty() ? std::nullopt : std::optional<Intervention>(intervention),
        static_cast<std::size_t>(take), rng);
    for (const auto& s : samples) {
      const double y = s[target];
      sum += y;
      sum_sq += y * y;
    }
    count += take;
    if (sem_tolerance > 0.0 && count >= 2) {
      const double mean = sum / double(count);
      const double var = std::max(sum_sq / double(count) - mean * mean, 0.0);
      if (std::sqrt(var / double(count)) <= sem_tolerance) break;
    }
  }
  const double mean = sum / double(count);
  const double var = count >= 2 ? std::max(sum_sq / double(count) - mean * mean, 0.0) : 0.0;
  if (!std::isfinite(mean) || !std::isfinite(var))
    throw InternalError("non-finite do-moment estimate");
  return {mean, var, count};
}

std::size_t GridSpec::num_points() const {
  std::size_t n = 1;
  for (const auto& axis : axes) n *= static_cast<std::size_t>(axis.size());
  return n;
}

Eigen::VectorXd GridSpec::point(std::size_t flat) const {
  Eigen::VectorXd x(static_cast<Eigen::Index>(axes.size()));
  // Row-major: the last axis varies fastest.
  for (std::size_t d = axes.size(); d-- > 0;) {
    const std::size_t m = static_cast<std::size_t>(axes[d].size());
    x[static_cast<Eigen::Index>(d)] = axes[d][static_cast<Eigen::Index>(flat % m)];
    flat /= m;
  }
  return x;
}

Eigen::MatrixXd GridSpec::all_points() const {
  const std::size_t n = num_points();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(axes.size()));
  for (std::size_t i = 0; i < n; ++i) out.row(static_cast<Eigen::Index>(i)) = point(i);
  return out;
}

double GridSpec::interpolate(const Eigen::VectorXd& values, const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != axes.size())
    throw InvalidQuery("interpolation point dimension mismatch");
  const std::size_t d = axes.size();
  std::vector<std::size_t> lo(d);
  std::vector<double> frac(d);
  for (std::size_t k = 0; k < d; ++k) {
    const auto& axis = axes[k];
    const Eigen::Index m = axis.size();
    const double v = std::clamp(x[static_cast<Eigen::Index>(k)], axis[0], axis[m - 1]);
    Eigen::Index i = 0;
    while (i + 2 < m && axis[i + 1] <= v) ++i;
    lo[k] = static_cast<std::size_t>(i);
    const double span = axis[i + 1] - axis[i];
    frac[k] = span > 0.0 ? (v - axis[i]) / span : 0.0;
  }
  // Blend the 2^d surrounding corners.
  double total = 0.0;
  for (std::size_t corner = 0; corner < (std::size_t(1) << d); ++corner) {
    double weight = 1.0;
    std::size_t flat = 0;
    for (std::size_t k = 0; k < d; ++k) {
      const bool hi = corner & (std::size_t(1) << k);
      weight *= hi ? frac[k] : 1.0 - frac[k];
      flat = flat * static_cast<std::size_t>(axes[k].size()) + lo[k] + (hi ? 1 : 0);
    }
    if (weight > 0.0) total += weight * values[static_cast<Eigen::Index>(flat)];
  }
  return total;
}

GridSpec make_grid(const InterventionSet& set, std::size_t points_1d,
                   std::size_t points_per_dim_nd) {
  if (set.empty()) throw InvalidIntervention("cannot grid the empty intervention set");
  const std::size_t per_dim = set.size() == 1 ? points_1d : points_per_dim_nd;
  GridSpec grid;
  for (const auto& domain : set.domains) {
    Eigen::VectorXd axis(static_cast<Eigen::Index>(per_dim));
    for (std::size_t i = 0; i < per_dim; ++i)
      axis[static_cast<Eigen::Index>(i)] =
          domain.lo + domain.width() * double(i) / double(per_dim - 1);
    grid.axes.push_back(std::move(axis));
  }
  return grid;
}

MomentTable tabulate_do_moments(const Scm& fitted, const InterventionSet& set,
                                const GridSpec& grid, long mc_samples, Rng& rng) {
  const std::size_t n = grid.num_points();
  MomentTable table{grid, Eigen::VectorXd(static_cast<Eigen::Index>(n)),
                    Eigen::VectorXd(static_cast<Eigen::Index>(n))};
  for (std::size_t i = 0; i < n; ++i) {
    const auto est = estimate_do_moments(fitted, set, grid.point(i), mc_samples, rng);
    table.mean[static_cast<Eigen::Index>(i)] = est.mean;
    table.variance[static_cast<Eigen::Index>(i)] = est.variance;
  }
  return table;
}

PriorTable build_prior(const std::vector<MomentTable>& per_graph,
                       const Eigen::VectorXd& graph_probabilities) {
  if (per_graph.empty()) throw InvalidData("prior mixing needs at least one graph table");
  if (static_cast<std::size_t>(graph_probabilities.size()) != per_graph.size())
    throw InvalidData("one probability per graph table required");
  const Eigen::Index n = per_graph[0].mean.size();
  for (const auto& t : per_graph)
    if (t.mean.size() != n) throw InvalidData("moment tables disagree on the grid");

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd within = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd second_moment = Eigen::VectorXd::Zero(n);
  for (std::size_t g = 0; g < per_graph.size(); ++g) {
    const double p = graph_probabilities[static_cast<Eigen::Index>(g)];
    mean += p * per_graph[g].mean;
    within += p * per_graph[g].variance;
    second_moment += p * per_graph[g].mean.cwiseProduct(per_graph[g].mean);
  }
  // Between-graph spread of the do-means; non-negative up to round-off.
  const Eigen::VectorXd between = (second_moment - mean.cwiseProduct(mean)).cwiseMax(0.0);
  return PriorTable{per_graph[0].grid, std::move(mean), within + between};
}

namespace {

MeanFn prior_mean_fn(std::shared_ptr<const PriorTable> prior) {
  return [prior](const Eigen::VectorXd& x) { return prior->mean_at(x); };
}

VarOffsetFn prior_offset_fn(std::shared_ptr<const PriorTable> prior) {
  return [prior](const Eigen::VectorXd& x) { return prior->offset_at(x); };
}

}  // namespace

CausalSurrogate::CausalSurrogate(InterventionSet set, std::shared_ptr<const PriorTable> prior,
                                 RbfKernel base_kernel, double noise_variance)
    : set_(std::move(set)),
      prior_(std::move(prior)),
      gp_(std::move(base_kernel), noise_variance, prior_mean_fn(prior_), prior_offset_fn(prior_)) {
  if (!prior_) throw InvalidData("surrogate needs a prior table");
}

CausalSurrogate CausalSurrogate::build(const InterventionSet& set,
                                       std::shared_ptr<const PriorTable> prior,
                                       const Eigen::MatrixXd& inputs,
                                       const Eigen::VectorXd& outputs,
                                       const SurrogateOptions& options, std::uint64_t seed) {
  if (!prior) throw InvalidData("surrogate needs a prior table");
  const Eigen::Index d = static_cast<Eigen::Index>(set.size());
  if (inputs.rows() != outputs.size()) throw InvalidData("surrogate pair count mismatch");
  if (inputs.rows() > 0 && inputs.cols() != d) throw InvalidData("surrogate pair dimension mismatch");

  if (static_cast<std::size_t>(outputs.size()) >= options.min_pairs_for_fit) {
    FitOptions fit = options.fit;
    fit.seed = seed;
    // Lengthscales are kept within the domain scale: a collapse to near zero
    // makes the surrogate memorize single observations.
    double min_width = set.domains[0].width();
    double max_width = min_width;
    for (const auto& dom : set.domains) {
      min_width = std::min(min_width, dom.width());
      max_width = std::max(max_width, dom.width());
    }
    fit.lengthscale_min = std::max(fit.lengthscale_min, 0.05 * min_width);
    fit.lengthscale_max = std::min(fit.lengthscale_max, 2.0 * max_width);
    GaussianProcess gp =
        fit_gp_with_prior(inputs, outputs, prior_mean_fn(prior), prior_offset_fn(prior), fit);
    CausalSurrogate out(set, prior, gp.kernel(), gp.noise_variance());
    out.gp_ = out.gp_.conditioned_on(inputs, outputs);
    return out;
  }

  Eigen::VectorXd ls(d);
  for (Eigen::Index k = 0; k < d; ++k)
    ls[k] = std::max(options.lengthscale_fraction * set.domains[static_cast<std::size_t>(k)].width(),
                     1e-3);
  CausalSurrogate out(set, std::move(prior),
                      RbfKernel(ls, options.default_signal_variance),
                      options.default_noise_variance);
  if (outputs.size() > 0) out.gp_ = out.gp_.conditioned_on(inputs, outputs);
  return out;
}

std::vector<PosteriorGaussian> CausalSurrogate::posterior(const Eigen::MatrixXd& queries) const {
  return gp_.predict(queries);
}

void CausalSurrogate::posterior_mean_var(const Eigen::MatrixXd& queries, Eigen::VectorXd& mean,
                                         Eigen::VectorXd& variance) const {
  gp_.predict_mean_var(queries, mean, variance);
}

CausalSurrogate CausalSurrogate::with_pair(const Eigen::VectorXd& x, double y) const {
  CausalSurrogate out(*this);
  out.gp_ = gp_.with_extra_point(x, y);
  return out;
}

}  // namespace ceopt
