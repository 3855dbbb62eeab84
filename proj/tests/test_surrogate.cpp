#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <ceopt/benchmark.hpp>
#include <ceopt/surrogate.hpp>
#include <cmath>

#include "test_util.hpp"

using namespace ceopt;
using doctest::Approx;

namespace {

InterventionSet set1(const std::string& name, double lo, double hi) {
  InterventionSet s;
  s.targets = {name};
  s.domains = {{lo, hi}};
  return s;
}

// Chain X -> Z -> Y with Z = 2X + eps and Y = 3Z - 1 + eps: the effect of
// do(Z = z) is exactly 3z - 1.
Scm linear_chain() {
  Dag g({{"X", Role::manipulative}, {"Z", Role::manipulative}, {"Y", Role::target}},
        {{"X", "Z"}, {"Z", "Y"}});
  std::vector<std::optional<Mechanism>> mech(3);
  std::vector<std::optional<RootDistribution>> roots(3);
  roots[0] = RootDistribution{RootDistribution::Kind::gaussian, 0.0, 1.0, {}};
  mech[1] = Mechanism::closed([](const Eigen::VectorXd& p) { return 2.0 * p[0]; }, 0.3);
  mech[2] = Mechanism::closed([](const Eigen::VectorXd& p) { return 3.0 * p[0] - 1.0; }, 0.3);
  return Scm(std::move(g), std::move(mech), std::move(roots));
}

ScmFitOptions quick_fit(std::uint64_t seed) {
  ScmFitOptions opts;
  opts.seed = seed;
  opts.gp.restarts = 2;
  opts.gp.max_iterations = 60;
  return opts;
}

GridSpec grid1d(double lo, double hi, std::size_t n) {
  GridSpec g;
  Eigen::VectorXd axis(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    axis[static_cast<Eigen::Index>(i)] = lo + (hi - lo) * double(i) / double(n - 1);
  g.axes = {axis};
  return g;
}

MomentTable table_of(const GridSpec& grid, double mean, double var) {
  return MomentTable{grid,
                     Eigen::VectorXd::Constant(static_cast<Eigen::Index>(grid.num_points()), mean),
                     Eigen::VectorXd::Constant(static_cast<Eigen::Index>(grid.num_points()), var)};
}

}  // namespace

TEST_CASE("do-moment estimation") {
  const Scm truth = linear_chain();
  Rng data_rng = make_rng(1);
  const auto obs = truth.ancestor_sample(std::nullopt, 300, data_rng);
  const Scm fitted = fit_scm(obs, truth.graph(), quick_fit(2));
  const auto set_z = set1("Z", -4.0, 4.0);

  SUBCASE("linear chain: close to the closed form across a grid") {
    Rng rng = make_rng(3);
    for (int i = 0; i < 10; ++i) {
      const double z = -4.0 + 8.0 * double(i) / 9.0;
      const auto est =
          estimate_do_moments(fitted, set_z, Eigen::VectorXd::Constant(1, z), 1000, rng);
      CHECK(std::abs(est.mean - (3.0 * z - 1.0)) <= 0.1);
      CHECK(est.mc_samples == 1000);
      CHECK(est.variance >= 0.0);
    }
  }

  SUBCASE("clamping all parents of the target reduces to the mechanism prediction") {
    Rng rng = make_rng(4);
    Eigen::MatrixXd q(1, 1);
    q << 1.7;
    Eigen::VectorXd mean, var;
    fitted.mechanism(2).gp.predict_mean_var(q, mean, var);
    const auto est =
        estimate_do_moments(fitted, set_z, Eigen::VectorXd::Constant(1, 1.7), 2000, rng);
    CHECK(std::abs(est.mean - mean[0]) <= 0.1);
  }

  SUBCASE("a single draw has zero variance") {
    Rng rng = make_rng(5);
    const auto est = estimate_do_moments(fitted, set_z, Eigen::VectorXd::Constant(1, 0.5), 1, rng);
    CHECK(est.variance == 0.0);
    CHECK(est.mc_samples == 1);
  }

  SUBCASE("the tolerance stop spends fewer draws") {
    Rng rng = make_rng(6);
    const auto est = estimate_do_moments(fitted, set_z, Eigen::VectorXd::Constant(1, 0.5), 100000,
                                         rng, 0.2);
    CHECK(est.mc_samples < 100000);
  }
}

TEST_CASE("prior mixing") {
  const GridSpec grid = grid1d(-1.0, 1.0, 11);

  SUBCASE("a point-mass belief passes its table through") {
    const std::vector<MomentTable> tables{table_of(grid, 2.0, 0.5), table_of(grid, -1.0, 0.25)};
    Eigen::VectorXd probs(2);
    probs << 1.0, 0.0;
    const PriorTable prior = build_prior(tables, probs);
    CHECK(prior.mean_at(Eigen::VectorXd::Zero(1)) == Approx(2.0));
    CHECK(prior.offset_at(Eigen::VectorXd::Zero(1)) == Approx(0.5));  // no spread term
  }

  SUBCASE("two equally likely noiseless structures: half-gap squared") {
    const std::vector<MomentTable> tables{table_of(grid, 2.0, 0.0), table_of(grid, -1.0, 0.0)};
    Eigen::VectorXd probs(2);
    probs << 0.5, 0.5;
    const PriorTable prior = build_prior(tables, probs);
    CHECK(prior.mean_at(Eigen::VectorXd::Zero(1)) == Approx(0.5));
    CHECK(prior.offset_at(Eigen::VectorXd::Zero(1)) == Approx(std::pow((2.0 + 1.0) / 2.0, 2)));
  }

  SUBCASE("mixture mean is a convex combination and the split identity holds") {
    Rng rng = make_rng(7);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<MomentTable> tables;
      const int n_graphs = 2 + static_cast<int>(draw_index(rng, 4));
      Eigen::VectorXd w(n_graphs);
      for (int g = 0; g < n_graphs; ++g) {
        MomentTable t{grid, Eigen::VectorXd(11), Eigen::VectorXd(11)};
        for (int i = 0; i < 11; ++i) {
          t.mean[i] = draw_uniform(rng, -3, 3);
          t.variance[i] = draw_uniform(rng, 0, 2);
        }
        tables.push_back(std::move(t));
        w[g] = draw_uniform(rng, 0.01, 1.0);
      }
      w /= w.sum();
      const PriorTable prior = build_prior(tables, w);
      for (int i = 0; i < 11; ++i) {
        double lo = tables[0].mean[i], hi = tables[0].mean[i];
        double direct = 0.0, second = 0.0;
        for (int g = 0; g < n_graphs; ++g) {
          lo = std::min(lo, tables[static_cast<std::size_t>(g)].mean[i]);
          hi = std::max(hi, tables[static_cast<std::size_t>(g)].mean[i]);
          direct += w[g] * (tables[static_cast<std::size_t>(g)].variance[i] +
                            std::pow(tables[static_cast<std::size_t>(g)].mean[i], 2));
          second += w[g] * tables[static_cast<std::size_t>(g)].mean[i];
        }
        CHECK(prior.mean[i] >= lo - 1e-12);
        CHECK(prior.mean[i] <= hi + 1e-12);
        // Split form equals the direct two-pass variance.
        CHECK(prior.offset[i] + second * second ==
              Approx(direct).epsilon(1e-10).scale(1e-10));
        CHECK(prior.offset[i] >= 0.0);
      }
    }
  }
}

TEST_CASE("structures with the same adjustment give the same surrogate prior") {
  // The chain X->Z->Y and the fork Z->{X,Y} both reduce the effect of
  // do(Z = z) to the regression of Y on Z, so their priors must agree up to
  // Monte Carlo error.
  const auto def = make_benchmark("synthetic", CEOPT_CONFIG_PATH);
  Rng data_rng = make_rng(8);
  const auto obs = def.true_scm.ancestor_sample(std::nullopt, 200, data_rng);
  const Dag& chain = def.space.graph(1);
  const Dag& fork = def.space.graph(4);
  const Scm chain_fit = fit_scm(obs, chain, quick_fit(9));
  const Scm fork_fit = fit_scm(obs, fork, quick_fit(9));

  const auto& set_z = def.set_by_label("Z");
  const GridSpec grid = grid1d(set_z.domains[0].lo, set_z.domains[0].hi, 40);
  Rng mc1 = make_rng(10), mc2 = make_rng(11);
  const MomentTable a = tabulate_do_moments(chain_fit, set_z, grid, 3000, mc1);
  const MomentTable b = tabulate_do_moments(fork_fit, set_z, grid, 3000, mc2);
  for (std::size_t i = 0; i < grid.num_points(); ++i)
    CHECK(std::abs(a.mean[static_cast<Eigen::Index>(i)] - b.mean[static_cast<Eigen::Index>(i)]) <=
          0.1);
}

TEST_CASE("surrogate posterior") {
  const GridSpec grid = grid1d(-2.0, 2.0, 21);
  MomentTable table{grid, Eigen::VectorXd(21), Eigen::VectorXd(21)};
  for (int i = 0; i < 21; ++i) {
    const double x = grid.point(static_cast<std::size_t>(i))[0];
    table.mean[i] = std::sin(x);
    table.variance[i] = 0.1 + 0.05 * x * x;
  }
  auto prior = std::make_shared<PriorTable>(
      build_prior({table}, Eigen::VectorXd::Constant(1, 1.0)));
  const auto set = set1("Z", -2.0, 2.0);

  SUBCASE("with no data the posterior is the prior") {
    SurrogateOptions opts;
    opts.default_signal_variance = 0.8;
    const auto sur = CausalSurrogate::build(set, prior, Eigen::MatrixXd(0, 1), Eigen::VectorXd(),
                                            opts, 0);
    Eigen::MatrixXd q(3, 1);
    q << -1.3, 0.0, 1.9;
    const auto post = sur.posterior(q);
    for (int i = 0; i < 3; ++i) {
      const Eigen::VectorXd x = q.row(i);
      CHECK(post[static_cast<std::size_t>(i)].mean == Approx(prior->mean_at(x)));
      CHECK(post[static_cast<std::size_t>(i)].variance ==
            Approx(0.8 + prior->offset_at(x)).epsilon(1e-9));
    }
  }

  SUBCASE("noise-free observations interpolate") {
    SurrogateOptions opts;
    opts.default_noise_variance = 0.0;
    Eigen::MatrixXd X(1, 1);
    X << 0.7;
    Eigen::VectorXd y(1);
    y << 2.5;
    const auto sur = CausalSurrogate::build(set, prior, X, y, opts, 0);
    const auto post = sur.posterior(X);
    CHECK(post[0].mean == Approx(2.5).epsilon(1e-6));
    CHECK(post[0].variance <= 1e-6);
  }

  SUBCASE("agreement with a dense solve that materializes the prior") {
    SurrogateOptions opts;
    opts.default_noise_variance = 0.05;
    opts.min_pairs_for_fit = 100;  // keep the default kernel
    Eigen::MatrixXd X(4, 1);
    X << -1.5, -0.2, 0.4, 1.8;
    Eigen::VectorXd y(4);
    y << 0.2, -0.1, 0.8, -0.5;
    const auto sur = CausalSurrogate::build(set, prior, X, y, opts, 0);

    Eigen::MatrixXd Q(10, 1);
    for (int i = 0; i < 10; ++i) Q(i, 0) = -1.9 + 3.8 * double(i) / 9.0;

    // Dense reference: residuals against the materialized prior mean, an
    // explicit offset on the training diagonal, plain LU solves.
    const RbfKernel kernel = sur.gp().kernel();
    Eigen::MatrixXd K = testutil::dense_kernel(kernel, X, X);
    for (int i = 0; i < 4; ++i)
      K(i, i) += sur.prior_offset_at(X.row(i)) + 0.05 + testutil::base_jitter(kernel);
    const Eigen::MatrixXd Kinv = K.fullPivLu().inverse();
    Eigen::VectorXd r(4);
    for (int i = 0; i < 4; ++i) r[i] = y[i] - sur.prior_mean_at(X.row(i));
    const Eigen::MatrixXd C = testutil::dense_kernel(kernel, X, Q);

    Eigen::VectorXd mean, var;
    sur.posterior_mean_var(Q, mean, var);
    for (int i = 0; i < 10; ++i) {
      const Eigen::VectorXd c = C.col(i);
      const double m = sur.prior_mean_at(Q.row(i)) + c.dot(Kinv * r);
      const double v = kernel.signal_variance + sur.prior_offset_at(Q.row(i)) - c.dot(Kinv * c);
      CHECK(mean[i] == Approx(m).epsilon(1e-8).scale(1e-8));
      CHECK(var[i] == Approx(v).epsilon(1e-8).scale(1e-8));
    }
  }
}

TEST_CASE("collapsed belief with exact estimates recovers the true effect") {
  const Scm truth = linear_chain();
  Rng data_rng = make_rng(12);
  const auto obs = truth.ancestor_sample(std::nullopt, 400, data_rng);
  const Scm fitted = fit_scm(obs, truth.graph(), quick_fit(13));
  const auto set_z = set1("Z", -3.0, 3.0);
  const GridSpec grid = grid1d(-3.0, 3.0, 50);
  Rng mc = make_rng(14);
  const MomentTable table = tabulate_do_moments(fitted, set_z, grid, 1500, mc);
  const PriorTable prior = build_prior({table}, Eigen::VectorXd::Constant(1, 1.0));
  for (double z : {-2.5, -1.0, 0.0, 1.5, 2.9})
    CHECK(std::abs(prior.mean_at(Eigen::VectorXd::Constant(1, z)) - (3.0 * z - 1.0)) <= 0.1);
}
