#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <ceopt/benchmark.hpp>
#include <ceopt/scm.hpp>
#include <cmath>

#include "test_util.hpp"

using namespace ceopt;
using doctest::Approx;

namespace {

double expit(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// Deterministic variant of the viral-load simulator: exogenous inputs and
// noises pinned to zero so sampled values can be checked by hand.
Scm deterministic_epi() {
  Dag g({{"B", Role::non_manipulative},
         {"T", Role::manipulative},
         {"L", Role::non_manipulative},
         {"R", Role::manipulative},
         {"Y", Role::target}},
        {{"B", "L"}, {"B", "Y"}, {"T", "L"}, {"T", "R"}, {"T", "Y"},
         {"L", "R"}, {"L", "Y"}, {"R", "Y"}});
  std::vector<std::optional<Mechanism>> mech(5);
  std::vector<std::optional<RootDistribution>> roots(5);
  roots[0] = RootDistribution{RootDistribution::Kind::point, 0.0, 0.0, {}};
  roots[1] = RootDistribution{RootDistribution::Kind::uniform, 4.0, 8.0, {}};
  // Parents arrive in ascending node order: L <- (B, T); R <- (T, L);
  // Y <- (B, T, L, R).
  mech[2] = Mechanism::closed([](const Eigen::VectorXd& p) { return expit(p[0] + 0.5 * p[1]); }, 0.0);
  mech[3] = Mechanism::closed([](const Eigen::VectorXd& p) { return 4.0 + p[0] * p[1]; }, 0.0);
  mech[4] = Mechanism::closed(
      [](const Eigen::VectorXd& p) {
        return 0.5 + std::cos(4.0 * p[1]) + std::sin(-p[2] + 2.0 * p[3]) + p[0];
      },
      0.0);
  return Scm(std::move(g), std::move(mech), std::move(roots));
}

InterventionSet set1(const std::string& name, double lo, double hi) {
  InterventionSet s;
  s.targets = {name};
  s.domains = {{lo, hi}};
  return s;
}

Scm linear_chain(double x_mean, double x_sd, double b_z, double noise_z, double b_y, double c_y,
                 double noise_y) {
  Dag g({{"X", Role::manipulative}, {"Z", Role::manipulative}, {"Y", Role::target}},
        {{"X", "Z"}, {"Z", "Y"}});
  std::vector<std::optional<Mechanism>> mech(3);
  std::vector<std::optional<RootDistribution>> roots(3);
  roots[0] = RootDistribution{RootDistribution::Kind::gaussian, x_mean, x_sd, {}};
  mech[1] = Mechanism::closed([b_z](const Eigen::VectorXd& p) { return b_z * p[0]; }, noise_z);
  mech[2] =
      Mechanism::closed([b_y, c_y](const Eigen::VectorXd& p) { return b_y * p[0] + c_y; }, noise_y);
  return Scm(std::move(g), std::move(mech), std::move(roots));
}

}  // namespace

TEST_CASE("ancestor sampling composes mechanisms in topological order") {
  const Scm scm = deterministic_epi();
  Rng rng = make_rng(1);
  const auto samples =
      scm.ancestor_sample(Intervention{set1("T", 4, 8), Eigen::VectorXd::Constant(1, 6.0)}, 4, rng);

  const double L = expit(3.0);
  const double R = 4.0 + L * 6.0;
  const double Y = 0.5 + std::cos(24.0) + std::sin(-L + 2.0 * R);
  CHECK(L == Approx(0.95257).epsilon(1e-4));
  CHECK(R == Approx(9.71544).epsilon(1e-4));
  for (const auto& s : samples) {
    CHECK(s[1] == 6.0);  // clamped exactly
    CHECK(s[2] == Approx(L).epsilon(1e-12));
    CHECK(s[3] == Approx(R).epsilon(1e-12));
    CHECK(s[4] == Approx(Y).epsilon(1e-12));
  }
}

TEST_CASE("intervening downstream leaves upstream variables at their natural law") {
  const Scm chain = linear_chain(1.0, 1.0, 2.0, 0.5, 3.0, -1.0, 0.5);
  Rng rng = make_rng(2);
  const auto samples = chain.ancestor_sample(
      Intervention{set1("Z", -50, 50), Eigen::VectorXd::Constant(1, 7.0)}, 4000, rng);
  Eigen::VectorXd xs(4000);
  for (int i = 0; i < 4000; ++i) {
    CHECK(samples[static_cast<std::size_t>(i)][1] == 7.0);
    xs[i] = samples[static_cast<std::size_t>(i)][0];
  }
  const auto ms = testutil::mean_stderr(xs);
  CHECK(std::abs(ms.mean - 1.0) <= 3.0 * ms.stderr_mean);
}

TEST_CASE("observational moments match the closed form") {
  const Scm chain = linear_chain(1.0, 1.0, 2.0, 0.5, 3.0, -1.0, 0.5);
  Rng rng = make_rng(3);
  const auto samples = chain.ancestor_sample(std::nullopt, 10000, rng);
  Eigen::VectorXd ys(10000);
  for (int i = 0; i < 10000; ++i) ys[i] = samples[static_cast<std::size_t>(i)][2];
  // E[Y] = 3 * E[Z] - 1 = 3 * 2 * E[X] - 1.
  const auto ms = testutil::mean_stderr(ys);
  CHECK(std::abs(ms.mean - 5.0) <= 3.0 * ms.stderr_mean);
}

TEST_CASE("observational sampling equals intervening on the empty set") {
  const Scm chain = linear_chain(0.0, 1.0, 1.5, 0.2, -2.0, 0.4, 0.3);
  Rng a = make_rng(77), b = make_rng(77);
  const auto obs = chain.ancestor_sample(std::nullopt, 50, a);
  const auto empty = chain.ancestor_sample(Intervention{InterventionSet{}, Eigen::VectorXd()}, 50, b);
  for (int i = 0; i < 50; ++i)
    CHECK(obs[static_cast<std::size_t>(i)].values == empty[static_cast<std::size_t>(i)].values);
}

TEST_CASE("domain violations are rejected") {
  const Scm chain = linear_chain(0.0, 1.0, 1.0, 0.1, 1.0, 0.0, 0.1);
  Rng rng = make_rng(4);
  CHECK_THROWS_AS(chain.ancestor_sample(
                      Intervention{set1("Z", -1.0, 1.0), Eigen::VectorXd::Constant(1, 2.0)}, 1, rng),
                  InvalidIntervention);
}

TEST_CASE("SCM fitting") {
  // Z = 2X + eps with tiny noise; the fitted mechanism must recover the line.
  const Scm truth = linear_chain(0.0, 1.5, 2.0, 0.01, 1.0, 0.0, 0.01);
  Rng rng = make_rng(5);
  const auto data = truth.ancestor_sample(std::nullopt, 120, rng);

  SUBCASE("fitted mechanisms recover strong linear links") {
    const Scm fitted = fit_scm(data, truth.graph(), {});
    CHECK(fitted.is_gp_fitted(1));
    Eigen::MatrixXd q(5, 1);
    q << -2.0, -1.0, 0.0, 1.0, 2.0;
    Eigen::VectorXd mean, var;
    fitted.mechanism(1).gp.predict_mean_var(q, mean, var);
    for (int i = 0; i < 5; ++i) CHECK(std::abs(mean[i] - 2.0 * q(i, 0)) <= 0.1);
  }

  SUBCASE("roots carry empirical pools, not mechanisms") {
    const Scm fitted = fit_scm(data, truth.graph(), {});
    CHECK_FALSE(fitted.is_gp_fitted(0));
    CHECK_THROWS_AS(fitted.mechanism(0), InvalidData);
    CHECK(fitted.root(0).kind == RootDistribution::Kind::empirical);
    CHECK(fitted.root(0).pool.size() == 120);
  }

  SUBCASE("refits are deterministic under a fixed seed") {
    ScmFitOptions opts;
    opts.seed = 99;
    const Scm a = fit_scm(data, truth.graph(), opts);
    const Scm b = fit_scm(data, truth.graph(), opts);
    Eigen::MatrixXd q(3, 1);
    q << -1.0, 0.2, 1.7;
    Eigen::VectorXd ma, va, mb, vb;
    a.mechanism(2).gp.predict_mean_var(q, ma, va);
    b.mechanism(2).gp.predict_mean_var(q, mb, vb);
    CHECK(ma == mb);
    CHECK(va == vb);
  }

  SUBCASE("too little data is rejected") {
    CHECK_THROWS_AS(fit_scm({data[0]}, truth.graph(), {}), InvalidData);
  }
}

TEST_CASE("benchmark definitions") {
  SUBCASE("hypothesis space sizes") {
    CHECK(make_benchmark("epi", CEOPT_CONFIG_PATH).space.size() == 3);
    CHECK(make_benchmark("synthetic", CEOPT_CONFIG_PATH).space.size() == 6);
    CHECK(make_benchmark("health", CEOPT_CONFIG_PATH).space.size() == 5);
    CHECK(make_benchmark("ext_epi", CEOPT_CONFIG_PATH).space.size() == 3);
  }

  SUBCASE("viral-load outcome noise is standard normal") {
    const auto def = make_benchmark("epi", CEOPT_CONFIG_PATH);
    const auto& scm = def.true_scm;
    CHECK(scm.mechanism(scm.graph().index_of("Y")).noise_scale == 1.0);
  }

  SUBCASE("unknown names list the available definitions") {
    CHECK_THROWS_AS(make_benchmark("nope", CEOPT_CONFIG_PATH), UnknownBenchmark);
    try {
      make_benchmark("nope", CEOPT_CONFIG_PATH);
    } catch (const UnknownBenchmark& e) {
      const std::string msg = e.what();
      CHECK(msg.find("synthetic") != std::string::npos);
      CHECK(msg.find("epi") != std::string::npos);
    }
  }

  SUBCASE("immune response stays in the unit interval") {
    const auto def = make_benchmark("epi", CEOPT_CONFIG_PATH);
    Rng rng = make_rng(6);
    const std::size_t l = def.true_scm.graph().index_of("L");
    for (const auto& s : def.true_scm.ancestor_sample(std::nullopt, 500, rng)) {
      CHECK(s[l] > 0.0);
      CHECK(s[l] < 1.0);
    }
    const auto& tr = def.set_by_label("T,R");
    Eigen::VectorXd x(2);
    x << 5.0, 6.0;
    for (const auto& s : def.true_scm.ancestor_sample(Intervention{tr, x}, 200, rng)) {
      CHECK(s[l] > 0.0);
      CHECK(s[l] < 1.0);
    }
  }
}
