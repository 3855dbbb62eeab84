#include "ceopt/engine.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <mutex>
#include <sstream>

namespace ceopt {

namespace {

// Observational data is shared by every replicate, so the per-hypothesis
// fits and do-moment tables are identical across replicates and methods.
// Computed once per (benchmark, seed, sizes) and shared.
struct SharedModels {
  std::vector<Sample> observational;
  std::vector<FittedGraphModel> models;
  std::vector<std::vector<MomentTable>> moment_tables;  // [set][graph]
};

std::shared_ptr<const SharedModels> shared_models(const BenchmarkDef& bench,
                                                  const std::string& key_benchmark,
                                                  std::uint64_t seed, std::size_t n_obs,
                                                  const AcquisitionParams& acq) {
  static std::mutex mutex;
  static std::map<std::string, std::shared_ptr<const SharedModels>> cache;

  std::ostringstream key;
  key << key_benchmark << '|' << seed << '|' << n_obs << '|' << acq.prior_grid_1d << '|'
      << acq.prior_grid_nd << '|' << acq.do_mc_samples;

  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(key.str());
  if (it != cache.end()) return it->second;

  auto shared = std::make_shared<SharedModels>();
  Rng obs_rng = make_rng(seed, 0xd0ULL);
  shared->observational = bench.true_scm.ancestor_sample(std::nullopt, n_obs, obs_rng);
  for (std::size_t g = 0; g < bench.space.size(); ++g) {
    ScmFitOptions fit;
    fit.seed = derive_seed(seed, 0xf17ULL, g);
    shared->models.push_back(fit_graph_model(shared->observational, bench.space.graph(g), fit));
  }
  shared->moment_tables.resize(bench.exploration_set.size());
  for (std::size_t s = 0; s < bench.exploration_set.size(); ++s) {
    const GridSpec grid = make_grid(bench.exploration_set[s], acq.prior_grid_1d, acq.prior_grid_nd);
    for (std::size_t g = 0; g < bench.space.size(); ++g) {
      Rng rng = make_rng(seed, 0x401ULL, s, g);
      shared->moment_tables[s].push_back(tabulate_do_moments(
          shared->models[g].scm, bench.exploration_set[s], grid, acq.do_mc_samples, rng));
    }
  }
  cache[key.str()] = shared;
  return shared;
}

enum class MethodKind { ceo, cbo, cd_cbo };

struct ParsedMethod {
  MethodKind kind;
  int fixed_graph = -1;  // cbo: hypothesis index, -1 means the true graph
};

ParsedMethod parse_method(const std::string& method, const BenchmarkDef& bench) {
  if (method == "ceo") return {MethodKind::ceo, -1};
  if (method == "cd_cbo") return {MethodKind::cd_cbo, -1};
  if (method == "cbo_true") return {MethodKind::cbo, static_cast<int>(bench.true_graph_index)};
  if (method.rfind("cbo_wrong", 0) == 0) {
    const auto colon = method.find(':');
    if (colon == std::string::npos)
      throw ConfigError("cbo_wrong needs a hypothesis index, e.g. cbo_wrong:2");
    const int idx = std::stoi(method.substr(colon + 1));
    if (idx < 0 || static_cast<std::size_t>(idx) >= bench.space.size())
      throw ConfigError("cbo_wrong index " + std::to_string(idx) + " out of range");
    if (static_cast<std::size_t>(idx) == bench.true_graph_index)
      throw ConfigError("cbo_wrong index " + std::to_string(idx) + " is the true graph");
    return {MethodKind::cbo, idx};
  }
  throw ConfigError("unknown method '" + method + "' (ceo, cbo_true, cbo_wrong:<i>, cd_cbo)");
}

double frac(double x) { return x - std::floor(x); }

std::uint64_t bits(double x) { return std::bit_cast<std::uint64_t>(x); }

// Point-mass log weights used by graph-fixed baselines.
Eigen::VectorXd point_mass_log_weights(std::size_t n, std::size_t at) {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), -1e9);
  w[static_cast<Eigen::Index>(at)] = 0.0;
  return w;
}

class Runner {
 public:
  explicit Runner(const RunConfig& config)
      : cfg_(config),
        bench_(make_benchmark(config.benchmark, config.config_dir)),
        method_(parse_method(config.method, bench_)),
        space_(std::make_shared<HypothesisSpace>(bench_.space)) {}

  RunTrace run();

 private:
  double cost_of(const InterventionSet& set, const Eigen::VectorXd& x) const {
    const auto it = cfg_.cost_overrides.find(set.label());
    if (it != cfg_.cost_overrides.end()) return it->second;
    return intervention_cost(set, x);
  }

  // Ground-truth effect of an intervention, cached per (set, x).
  double oracle_value(int set_id, const Eigen::VectorXd& x) {
    std::uint64_t key = derive_seed(0x0eac1eULL, static_cast<std::uint64_t>(set_id));
    for (Eigen::Index i = 0; i < x.size(); ++i) key = derive_seed(key, bits(x[i]));
    const auto it = oracle_cache_.find(key);
    if (it != oracle_cache_.end()) return it->second;
    Rng rng = make_rng(cfg_.seed, 0x0eacULL, key);
    const auto est = estimate_do_moments(bench_.true_scm,
                                         bench_.exploration_set[static_cast<std::size_t>(set_id)],
                                         x, cfg_.oracle_eval_mc, rng);
    oracle_cache_[key] = est.mean;
    return est.mean;
  }

  void rebuild_surrogates(const GraphPosterior& mix_posterior);
  GraphPosterior initial_posterior() const;
  InterventionalRecord intervene(int set_id, const Eigen::VectorXd& x, Rng& rng);

  RunConfig cfg_;
  BenchmarkDef bench_;
  ParsedMethod method_;
  std::shared_ptr<const HypothesisSpace> space_;

  Dataset data_;
  std::vector<FittedGraphModel> models_;
  std::vector<std::vector<MomentTable>> moment_tables_;  // [set][graph]
  std::vector<CausalSurrogate> surrogates_;
  std::vector<Eigen::MatrixXd> grids_;
  std::vector<Eigen::MatrixXd> pair_inputs_;   // per set
  std::vector<Eigen::VectorXd> pair_outputs_;  // per set
  std::map<std::uint64_t, double> oracle_cache_;
};

void Runner::rebuild_surrogates(const GraphPosterior& mix_posterior) {
  const auto& probs = mix_posterior.probabilities();
  surrogates_.clear();
  for (std::size_t s = 0; s < bench_.exploration_set.size(); ++s) {
    auto prior = std::make_shared<PriorTable>(build_prior(moment_tables_[s], probs));
    SurrogateOptions opts;
    opts.fit.restarts = 3;
    surrogates_.push_back(CausalSurrogate::build(
        bench_.exploration_set[s], std::move(prior), pair_inputs_[s], pair_outputs_[s], opts,
        derive_seed(cfg_.seed, 0x5f17ULL, static_cast<std::uint64_t>(cfg_.replicate), s,
                    static_cast<std::uint64_t>(pair_outputs_[s].size()))));
  }
}

GraphPosterior Runner::initial_posterior() const {
  Eigen::VectorXd logw = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space_->size()));
  if (cfg_.posterior_uses_observational)
    for (std::size_t g = 0; g < models_.size(); ++g)
      logw[static_cast<Eigen::Index>(g)] = models_[g].observational_loglik;
  GraphPosterior posterior(space_, logw);
  return update(posterior, models_, data_.interventional);
}

InterventionalRecord Runner::intervene(int set_id, const Eigen::VectorXd& x, Rng& rng) {
  const auto& set = bench_.exploration_set[static_cast<std::size_t>(set_id)];
  const auto samples = bench_.true_scm.ancestor_sample(Intervention{set, x}, 1, rng);
  return InterventionalRecord{set, x, samples[0]};
}

RunTrace Runner::run() {
  using clock = std::chrono::steady_clock;
  RunTrace trace;
  trace.config = cfg_;
  for (const auto& s : bench_.exploration_set) trace.set_labels.push_back(s.label());

  const std::size_t n_obs =
      cfg_.observational ? cfg_.observational : bench_.default_observational;
  const std::size_t n_init = cfg_.initial_interventions ? cfg_.initial_interventions
                                                        : bench_.default_initial_interventions;
  const std::size_t target = bench_.true_scm.graph().target_index();
  const std::size_t num_sets = bench_.exploration_set.size();

  // Observational data and per-hypothesis fits are shared by every
  // replicate; the initial interventions are what replicates vary.
  const auto shared = shared_models(bench_, cfg_.benchmark + "|" + cfg_.config_dir, cfg_.seed,
                                    n_obs, cfg_.acq);
  data_.observational = shared->observational;
  models_ = shared->models;
  moment_tables_ = shared->moment_tables;

  Rng init_rng = make_rng(cfg_.seed, 0xd1ULL, static_cast<std::uint64_t>(cfg_.replicate));
  for (std::size_t i = 0; i < n_init; ++i) {
    const int set_id = static_cast<int>(draw_index(init_rng, num_sets));
    const auto& set = bench_.exploration_set[static_cast<std::size_t>(set_id)];
    Eigen::VectorXd x(static_cast<Eigen::Index>(set.size()));
    for (std::size_t t = 0; t < set.size(); ++t)
      x[static_cast<Eigen::Index>(t)] = draw_uniform(init_rng, set.domains[t].lo, set.domains[t].hi);
    data_.interventional.push_back(intervene(set_id, x, init_rng));
  }

  grids_.clear();
  for (const auto& set : bench_.exploration_set)
    grids_.push_back(candidate_grid(set, cfg_.acq.grid_points));

  pair_inputs_.assign(num_sets, Eigen::MatrixXd());
  pair_outputs_.assign(num_sets, Eigen::VectorXd());
  for (std::size_t s = 0; s < num_sets; ++s) {
    pair_inputs_[s].resize(0, static_cast<Eigen::Index>(bench_.exploration_set[s].size()));
    pair_outputs_[s].resize(0);
  }
  auto add_pair = [&](int set_id, const Eigen::VectorXd& x, double y) {
    auto& X = pair_inputs_[static_cast<std::size_t>(set_id)];
    auto& Y = pair_outputs_[static_cast<std::size_t>(set_id)];
    X.conservativeResize(X.rows() + 1, Eigen::NoChange);
    X.row(X.rows() - 1) = x.transpose();
    Y.conservativeResize(Y.size() + 1);
    Y[Y.size() - 1] = y;
  };
  for (const auto& rec : data_.interventional) {
    const auto label = rec.set.label();
    for (std::size_t s = 0; s < num_sets; ++s)
      if (bench_.exploration_set[s].label() == label)
        add_pair(static_cast<int>(s), rec.values, rec.sample[target]);
  }

  // Beliefs: CEO and CD-CBO stage one track the data; CBO pins its graph.
  GraphPosterior posterior = initial_posterior();
  bool stage_two = method_.kind == MethodKind::cbo;
  int fixed_graph = method_.fixed_graph;
  if (method_.kind == MethodKind::cd_cbo &&
      posterior.probability(posterior.argmax()) > cfg_.cd_threshold) {
    stage_two = true;  // the posterior already singles out a graph
    fixed_graph = static_cast<int>(posterior.argmax());
  }
  GraphPosterior mix_posterior =
      stage_two ? GraphPosterior(space_, point_mass_log_weights(space_->size(),
                                                                static_cast<std::size_t>(fixed_graph)))
                : posterior;
  rebuild_surrogates(mix_posterior);
  GraphPosterior built_with = mix_posterior;
  trace.initial_posterior = mix_posterior.probabilities();

  // Initial incumbents, observed and through the ground truth.
  double best_observed = std::numeric_limits<double>::infinity();
  double best_oracle = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < data_.interventional.size(); ++i) {
    const auto& rec = data_.interventional[i];
    best_observed = std::min(best_observed, rec.sample[target]);
    for (std::size_t s = 0; s < num_sets; ++s)
      if (bench_.exploration_set[s].label() == rec.set.label())
        best_oracle = std::min(best_oracle, oracle_value(static_cast<int>(s), rec.values));
  }
  trace.y_init_best_observed = best_observed;
  trace.y_init_best_oracle = best_oracle;

  double cumulative = 0.0;
  const CostFn cost_fn = [this](const InterventionSet& set, const Eigen::VectorXd& x) {
    return cost_of(set, x);
  };

  for (int h = 0; h < cfg_.iterations; ++h) {
    if (cfg_.budget > 0.0 && cumulative >= cfg_.budget) break;
    const auto t0 = clock::now();

    const GraphPosterior score_posterior =
        stage_two ? GraphPosterior(space_, point_mass_log_weights(
                                               space_->size(), static_cast<std::size_t>(fixed_graph)))
                  : posterior;
    AcquisitionState state{surrogates_, grids_, score_posterior, models_, true, cfg_.acq, cost_fn};

    Rng round_rng =
        make_rng(cfg_.seed, 0x9aULL, static_cast<std::uint64_t>(cfg_.replicate),
                 static_cast<std::uint64_t>(h));
    std::optional<CesRound> round;
    const bool use_ces = method_.kind == MethodKind::ceo;
    const bool use_mi = method_.kind == MethodKind::cd_cbo && !stage_two;
    if (use_ces) round = prepare_ces_round(state, round_rng);

    AcquisitionScore best_score;
    bool have_best = false;
    double best_cost = 0.0;
    std::size_t candidate_index = 0;
    for (std::size_t s = 0; s < num_sets; ++s) {
      for (Eigen::Index i = 0; i < grids_[s].rows(); ++i, ++candidate_index) {
        const Eigen::VectorXd x = grids_[s].row(i);
        Rng cand_rng = make_rng(cfg_.seed, 0xcaULL, static_cast<std::uint64_t>(cfg_.replicate),
                                static_cast<std::uint64_t>(h),
                                cfg_.acq.common_random_numbers ? 0ULL : candidate_index);
        AcquisitionScore score;
        if (use_ces) {
          score = ces_score(static_cast<int>(s), x, state, *round, cand_rng);
        } else if (use_mi) {
          score = structure_mi_score(static_cast<int>(s), x, state, cand_rng);
        } else {
          score = cei_score(static_cast<int>(s), x, state, best_observed);
        }
        const double c = cost_fn(bench_.exploration_set[s], x);
        // Deterministic merge: higher score, then cheaper, then set order,
        // then grid index.
        if (!have_best || score.score > best_score.score ||
            (score.score == best_score.score && c < best_cost)) {
          best_score = score;
          best_cost = c;
          have_best = true;
        }
      }
    }
    if (!have_best) {
      trace.aborted = true;
      trace.abort_reason = "no candidate produced a score";
      break;
    }

    Rng act_rng = make_rng(cfg_.seed, 0x1fULL, static_cast<std::uint64_t>(cfg_.replicate),
                           static_cast<std::uint64_t>(h));
    IterationRecord rec;
    rec.iteration = h;
    rec.set_id = best_score.set_id;
    rec.x = best_score.x;
    rec.score = best_score.score;
    rec.graph_known_branch = best_score.graph_known_branch;
    rec.cost = best_cost;
    cumulative += best_cost;
    rec.cumulative_cost = cumulative;

    for (int n = 0; n < cfg_.samples_per_intervention; ++n) {
      InterventionalRecord record = intervene(best_score.set_id, best_score.x, act_rng);
      data_.interventional.push_back(record);
      rec.y_observed = record.sample[target];
      best_observed = std::min(best_observed, rec.y_observed);
      add_pair(best_score.set_id, best_score.x, rec.y_observed);
      if (!stage_two)
        posterior = update(posterior, models_, {record});
    }
    rec.oracle_value = oracle_value(best_score.set_id, best_score.x);
    best_oracle = std::min(best_oracle, rec.oracle_value);
    rec.best_observed = best_observed;
    rec.best_oracle = best_oracle;

    if (method_.kind == MethodKind::cd_cbo && !stage_two &&
        (posterior.probability(posterior.argmax()) > cfg_.cd_threshold ||
         (cfg_.cd_stage1_budget >= 0.0 && cumulative >= cfg_.cd_stage1_budget))) {
      stage_two = true;
      fixed_graph = static_cast<int>(posterior.argmax());
    }
    rec.stage_two = stage_two;

    const GraphPosterior target_mix =
        stage_two ? GraphPosterior(space_, point_mass_log_weights(
                                               space_->size(), static_cast<std::size_t>(fixed_graph)))
                  : posterior;
    if (target_mix.total_variation(built_with) > cfg_.acq.prior_rebuild_tv) {
      rebuild_surrogates(target_mix);
      built_with = target_mix;
    } else {
      // Prior unchanged: only recondition the chosen set's surrogate.
      const std::size_t s = static_cast<std::size_t>(best_score.set_id);
      SurrogateOptions opts;
      opts.fit.restarts = 3;
      surrogates_[s] = CausalSurrogate::build(
          bench_.exploration_set[s], surrogates_[s].prior(), pair_inputs_[s], pair_outputs_[s],
          opts,
          derive_seed(cfg_.seed, 0x5f17ULL, static_cast<std::uint64_t>(cfg_.replicate), s,
                      static_cast<std::uint64_t>(pair_outputs_[s].size())));
    }

    rec.posterior = target_mix.probabilities();
    rec.posterior_entropy = target_mix.entropy();
    rec.wall_ms =
        std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    trace.iterations.push_back(std::move(rec));
  }

  trace.data = std::move(data_);
  return trace;
}

}  // namespace

double intervention_cost(const InterventionSet& set, const Eigen::VectorXd&) {
  if (set.empty()) throw InvalidIntervention("cost of the empty intervention is undefined");
  return static_cast<double>(set.size());
}

RunTrace run_method(const RunConfig& config) { return Runner(config).run(); }

double gap_from_trace(const RunTrace& trace, double y_star, bool oracle_variant) {
  if (!std::isfinite(y_star)) throw InvalidData("gap needs a finite optimum");
  const double init = oracle_variant ? trace.y_init_best_oracle : trace.y_init_best_observed;
  // Best value reached by the chosen interventions; the initial incumbent
  // only anchors the normalization.
  double best = std::numeric_limits<double>::infinity();
  for (const auto& it : trace.iterations)
    best = std::min(best, oracle_variant ? it.oracle_value : it.y_observed);
  if (trace.iterations.empty()) best = init;
  const double denom = init - y_star;
  if (denom == 0.0) return best <= y_star ? 1.0 : 0.0;
  return std::clamp((init - best) / denom, 0.0, 1.0);
}

GapResult aggregate_gaps(std::vector<double> gaps) {
  GapResult out;
  out.per_replicate = std::move(gaps);
  if (out.per_replicate.empty()) throw InvalidData("no gaps to aggregate");
  double sum = 0.0;
  for (double g : out.per_replicate) sum += g;
  out.mean = sum / double(out.per_replicate.size());
  if (out.per_replicate.size() > 1) {
    double ss = 0.0;
    for (double g : out.per_replicate) ss += (g - out.mean) * (g - out.mean);
    const double sd = std::sqrt(ss / double(out.per_replicate.size() - 1));
    out.stderr_mean = sd / std::sqrt(double(out.per_replicate.size()));
  }
  return out;
}

OptimumRecord true_optimum_oracle(const BenchmarkDef& benchmark, std::size_t grid_per_dim,
                                  long mc_samples, std::uint64_t seed) {
  if (grid_per_dim < 2) throw InvalidData("oracle grid needs at least 2 points per dim");
  // Taking the raw minimum over hundreds of thousands of noisy estimates
  // selects lucky downward fluctuations (several sigma over a dense grid),
  // so the search re-scores its shortlist on fresh draws and reports a
  // final estimate from yet another stream.
  struct Candidate {
    double estimate;
    std::size_t set_index;
    Eigen::VectorXd x;
  };
  std::vector<Candidate> shortlist;
  const std::size_t keep = 16;

  for (std::size_t s = 0; s < benchmark.exploration_set.size(); ++s) {
    const auto& set = benchmark.exploration_set[s];
    GridSpec grid = make_grid(set, grid_per_dim, grid_per_dim);
    Rng rng = make_rng(seed, 0x04acULL, s);
    for (std::size_t i = 0; i < grid.num_points(); ++i) {
      const Eigen::VectorXd x = grid.point(i);
      const auto est = estimate_do_moments(benchmark.true_scm, set, x, mc_samples, rng);
      if (shortlist.size() < keep) {
        shortlist.push_back({est.mean, s, x});
        std::push_heap(shortlist.begin(), shortlist.end(),
                       [](const Candidate& a, const Candidate& b) { return a.estimate < b.estimate; });
      } else if (est.mean < shortlist.front().estimate) {
        std::pop_heap(shortlist.begin(), shortlist.end(),
                      [](const Candidate& a, const Candidate& b) { return a.estimate < b.estimate; });
        shortlist.back() = {est.mean, s, x};
        std::push_heap(shortlist.begin(), shortlist.end(),
                       [](const Candidate& a, const Candidate& b) { return a.estimate < b.estimate; });
      }
    }
  }

  std::size_t winner = 0;
  double winner_value = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < shortlist.size(); ++c) {
    Rng rng = make_rng(seed, 0x04adULL, c);
    const auto est = estimate_do_moments(
        benchmark.true_scm, benchmark.exploration_set[shortlist[c].set_index], shortlist[c].x,
        std::max(10 * mc_samples, 50000L), rng);
    if (est.mean < winner_value) {
      winner_value = est.mean;
      winner = c;
    }
  }

  Rng rng = make_rng(seed, 0x04aeULL);
  const auto& set = benchmark.exploration_set[shortlist[winner].set_index];
  const auto final_est = estimate_do_moments(benchmark.true_scm, set, shortlist[winner].x,
                                             std::max(20 * mc_samples, 100000L), rng);
  OptimumRecord best;
  best.y = final_est.mean;
  best.set = set;
  best.x = shortlist[winner].x;
  best.stderr_y = std::sqrt(final_est.variance / double(final_est.mc_samples));
  best.mc_samples = final_est.mc_samples;
  return best;
}

Eigen::MatrixXd candidate_grid(const InterventionSet& set, int points) {
  if (set.empty()) throw InvalidIntervention("cannot grid the empty intervention set");
  if (points < 2) throw InvalidData("candidate grids need at least 2 points");
  const std::size_t d = set.size();
  if (d == 1) {
    Eigen::MatrixXd grid(points, 1);
    for (int i = 0; i < points; ++i)
      grid(i, 0) = set.domains[0].lo + set.domains[0].width() * double(i) / double(points - 1);
    return grid;
  }
  // Kronecker (R_d) lattice: phi_d solves x^(d+1) = x + 1.
  double phi = 1.5;
  for (int it = 0; it < 64; ++it) phi = std::pow(1.0 + phi, 1.0 / double(d + 1));
  const int count = points * static_cast<int>(d);
  Eigen::MatrixXd grid(count, static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < d; ++k) {
    const double alpha = std::pow(1.0 / phi, double(k + 1));
    for (int i = 0; i < count; ++i)
      grid(i, static_cast<Eigen::Index>(k)) =
          set.domains[k].lo + set.domains[k].width() * frac(0.5 + alpha * double(i + 1));
  }
  return grid;
}

}  // namespace ceopt
