#include "ceopt/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>

namespace ceopt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double expit(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// One additive term of a closed-form mechanism: a * fn(w . pa + b), except
// `prod` which multiplies the weighted parents with non-zero weight (all
// parents when no weights are given).
struct Term {
  std::string fn;
  double a = 1.0;
  double b = 0.0;
  Eigen::VectorXd w;

  double operator()(const Eigen::VectorXd& pa) const {
    if (fn == "const") return a;
    if (fn == "prod") {
      double p = 1.0;
      bool any = false;
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w[i] != 0.0) {
          p *= w[i] * pa[i];
          any = true;
        }
      }
      if (!any) p = pa.prod();
      return a * p;
    }
    const double t = w.dot(pa) + b;
    if (fn == "lin") return a * t;
    if (fn == "cos") return a * std::cos(t);
    if (fn == "sin") return a * std::sin(t);
    if (fn == "exp") return a * std::exp(t);
    if (fn == "expit") return a * expit(t);
    throw ConfigError("unknown mechanism term '" + fn + "'");
  }
};

std::function<double(const Eigen::VectorXd&)> parse_terms(const json& spec, std::size_t arity,
                                                          const std::string& node) {
  std::vector<Term> terms;
  for (const auto& t : spec) {
    Term term;
    term.fn = t.at("fn").get<std::string>();
    term.a = t.value("a", 1.0);
    term.b = t.value("b", 0.0);
    term.w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arity));
    if (t.contains("w")) {
      const auto w = t["w"].get<std::vector<double>>();
      if (w.size() != arity)
        throw ConfigError("term weight arity mismatch at node '" + node + "'");
      for (std::size_t i = 0; i < arity; ++i) term.w[static_cast<Eigen::Index>(i)] = w[i];
    }
    static const std::vector<std::string> known = {"const", "prod", "lin",
                                                   "cos",   "sin",  "exp", "expit"};
    if (std::find(known.begin(), known.end(), term.fn) == known.end())
      throw ConfigError("unknown mechanism term '" + term.fn + "' at node '" + node + "'");
    terms.push_back(std::move(term));
  }
  if (terms.empty()) throw ConfigError("node '" + node + "' has no mechanism terms");
  return [terms](const Eigen::VectorXd& pa) {
    double v = 0.0;
    for (const auto& t : terms) v += t(pa);
    return v;
  };
}

RootDistribution parse_root(const json& spec, const std::string& node) {
  RootDistribution d;
  const std::string kind = spec.at("kind").get<std::string>();
  if (kind == "uniform") {
    d.kind = RootDistribution::Kind::uniform;
    d.a = spec.at("a").get<double>();
    d.b = spec.at("b").get<double>();
    if (!(d.a < d.b)) throw ConfigError("uniform root '" + node + "' needs a < b");
  } else if (kind == "gaussian") {
    d.kind = RootDistribution::Kind::gaussian;
    d.a = spec.at("mean").get<double>();
    d.b = spec.at("sd").get<double>();
  } else if (kind == "point") {
    d.kind = RootDistribution::Kind::point;
    d.a = spec.at("value").get<double>();
  } else {
    throw ConfigError("unknown root kind '" + kind + "' at node '" + node + "'");
  }
  return d;
}

std::pair<std::string, std::string> parse_edge(const std::string& e) {
  const auto pos = e.find("->");
  if (pos == std::string::npos) throw ConfigError("edge '" + e + "' must be 'A->B'");
  return {e.substr(0, pos), e.substr(pos + 2)};
}

Dag parse_dag(const std::vector<Node>& nodes, const json& edge_list) {
  std::vector<std::pair<std::string, std::string>> edges;
  for (const auto& e : edge_list) edges.push_back(parse_edge(e.get<std::string>()));
  return Dag(nodes, edges);
}

Interval domain_of(const json& domains, const std::string& name) {
  if (!domains.contains(name))
    throw ConfigError("no intervention domain for manipulative node '" + name + "'");
  const auto lohi = domains[name].get<std::vector<double>>();
  if (lohi.size() != 2 || !(lohi[0] < lohi[1]))
    throw ConfigError("domain of '" + name + "' must be [lo, hi] with lo < hi");
  return {lohi[0], lohi[1]};
}

std::vector<InterventionSet> all_nonempty_subsets(const std::vector<std::string>& names,
                                                  const json& domains) {
  std::vector<InterventionSet> out;
  const std::size_t n = names.size();
  for (std::size_t mask = 1; mask < (std::size_t(1) << n); ++mask) {
    InterventionSet s;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::size_t(1) << i)) {
        s.targets.push_back(names[i]);
        s.domains.push_back(domain_of(domains, names[i]));
      }
    }
    out.push_back(std::move(s));
  }
  // Cheapest interventions first, then declaration order inside each size.
  std::stable_sort(out.begin(), out.end(),
                   [](const InterventionSet& a, const InterventionSet& b) {
                     return a.size() < b.size();
                   });
  return out;
}

}  // namespace

const InterventionSet& BenchmarkDef::set_by_label(const std::string& label) const {
  for (const auto& s : exploration_set)
    if (s.label() == label) return s;
  throw InvalidIntervention("no exploration set labelled '" + label + "'");
}

BenchmarkDef load_benchmark_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open benchmark definition '" + path + "'");
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("parse error in '" + path + "': " + e.what());
  }

  std::vector<Node> nodes;
  for (const auto& n : cfg.at("nodes"))
    nodes.push_back({n.at("name").get<std::string>(), role_from_string(n.at("role"))});

  Dag true_graph = parse_dag(nodes, cfg.at("true_graph"));

  std::vector<Dag> hypotheses;
  for (const auto& h : cfg.at("hypotheses")) hypotheses.push_back(parse_dag(nodes, h));
  HypothesisSpace space(std::move(hypotheses));
  const auto true_index = space.find(true_graph);
  if (!true_index) throw ConfigError("the true graph must be one of the hypotheses");

  const json& roots_cfg = cfg.value("roots", json::object());
  const json& mech_cfg = cfg.value("mechanisms", json::object());
  std::vector<std::optional<Mechanism>> mechanisms(nodes.size());
  std::vector<std::optional<RootDistribution>> roots(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string& name = nodes[i].name;
    if (true_graph.is_root(i)) {
      if (!roots_cfg.contains(name)) throw ConfigError("missing root distribution for '" + name + "'");
      roots[i] = parse_root(roots_cfg[name], name);
    } else {
      if (!mech_cfg.contains(name)) throw ConfigError("missing mechanism for '" + name + "'");
      const json& m = mech_cfg[name];
      const auto parents = m.at("parents").get<std::vector<std::string>>();
      // Mechanism parent order must match the graph's (ascending node order);
      // the config lists them explicitly so files stay readable.
      const auto expected = true_graph.parent_names(name);
      if (parents != expected) {
        std::string want;
        for (const auto& p : expected) want += p + " ";
        throw ConfigError("mechanism parents of '" + name + "' must be listed as: " + want);
      }
      mechanisms[i] = Mechanism::closed(parse_terms(m.at("terms"), parents.size(), name),
                                        m.value("noise", 0.0));
    }
  }

  BenchmarkDef def{.name = cfg.at("name").get<std::string>(),
                   .true_scm = Scm(true_graph, std::move(mechanisms), std::move(roots)),
                   .space = std::move(space),
                   .true_graph_index = *true_index,
                   .exploration_set = {},
                   .default_observational = 200,
                   .default_initial_interventions = 2,
                   .true_optimum = std::nullopt};

  const json& domains = cfg.at("domains");
  std::vector<std::string> manipulative;
  for (const auto& n : nodes)
    if (n.role == Role::manipulative) manipulative.push_back(n.name);
  if (cfg.at("exploration_set").is_string()) {
    if (cfg["exploration_set"].get<std::string>() != "all_nonempty_subsets")
      throw ConfigError("exploration_set must be a list or 'all_nonempty_subsets'");
    def.exploration_set = all_nonempty_subsets(manipulative, domains);
  } else {
    for (const auto& entry : cfg["exploration_set"]) {
      InterventionSet s;
      for (const auto& t : entry) {
        s.targets.push_back(t.get<std::string>());
        s.domains.push_back(domain_of(domains, s.targets.back()));
      }
      if (s.empty()) throw ConfigError("exploration sets must be non-empty");
      def.exploration_set.push_back(std::move(s));
    }
  }
  if (def.exploration_set.empty()) throw ConfigError("empty exploration set");

  if (cfg.contains("data")) {
    def.default_observational = cfg["data"].value("observational", 200);
    def.default_initial_interventions = cfg["data"].value("initial_interventions", 2);
  }

  if (cfg.contains("true_optimum")) {
    const json& o = cfg["true_optimum"];
    OptimumRecord rec;
    rec.y = o.at("y").get<double>();
    rec.set = def.set_by_label([&] {
      std::string label;
      for (const auto& t : o.at("set")) label += (label.empty() ? "" : ",") + t.get<std::string>();
      return label;
    }());
    const auto xs = o.at("x").get<std::vector<double>>();
    rec.x = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    rec.stderr_y = o.value("stderr", 0.0);
    rec.mc_samples = o.value("mc_samples", 0L);
    def.true_optimum = std::move(rec);
  }
  return def;
}

BenchmarkDef make_benchmark(const std::string& name, const std::string& config_dir) {
  std::string dir = config_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("CEOPT_CONFIG_DIR")) dir = env;
    else dir = "configs";
  }
  const fs::path path = fs::path(dir) / (name + ".json");
  if (!fs::exists(path)) {
    std::string known;
    if (fs::exists(dir))
      for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".json")
          known += (known.empty() ? "" : ", ") + entry.path().stem().string();
    throw UnknownBenchmark("unknown benchmark '" + name + "' (definitions in " + dir + ": " +
                           (known.empty() ? "none" : known) + ")");
  }
  return load_benchmark_file(path.string());
}

}  // namespace ceopt
