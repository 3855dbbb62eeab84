#include "ceopt/graph.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace ceopt {

std::string to_string(Role role) {
  switch (role) {
    case Role::manipulative: return "manipulative";
    case Role::non_manipulative: return "non_manipulative";
    case Role::target: return "target";
  }
  return "?";
}

Role role_from_string(const std::string& s) {
  if (s == "manipulative") return Role::manipulative;
  if (s == "non_manipulative" || s == "non-manipulative") return Role::non_manipulative;
  if (s == "target") return Role::target;
  throw ConfigError("unknown node role '" + s + "'");
}

std::string InterventionSet::label() const {
  if (targets.empty()) return "{}";
  std::string out;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (i) out += ",";
    out += targets[i];
  }
  return out;
}

Dag::Dag(std::vector<Node> nodes, std::vector<std::pair<std::string, std::string>> edges)
    : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw InvalidGraph("graph has no nodes");
  adj_.assign(nodes_.size(), std::vector<bool>(nodes_.size(), false));

  std::size_t n_targets = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].name.empty()) throw InvalidGraph("empty node name");
    for (std::size_t j = i + 1; j < nodes_.size(); ++j) {
      if (nodes_[i].name == nodes_[j].name)
        throw InvalidGraph("duplicate node name '" + nodes_[i].name + "'");
    }
    if (nodes_[i].role == Role::target) {
      target_ = i;
      ++n_targets;
    }
  }
  if (n_targets != 1) throw InvalidGraph("graph must have exactly one target node");

  for (const auto& [p, c] : edges) {
    const std::size_t pi = index_of(p), ci = index_of(c);
    if (pi == ci) throw InvalidGraph("self-loop on '" + p + "'");
    if (adj_[pi][ci]) throw InvalidGraph("duplicate edge " + p + "->" + c);
    adj_[pi][ci] = true;
  }
  rebuild_derived();
}

void Dag::rebuild_derived() {
  const std::size_t n = nodes_.size();
  parents_.assign(n, {});
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t p = 0; p < n; ++p)
      if (adj_[p][c]) parents_[c].push_back(p);

  for (std::size_t c = 0; c < n; ++c)
    if (adj_[target_][c]) throw InvalidGraph("target '" + nodes_[target_].name + "' must be a sink");

  if (n > 1) {
    for (std::size_t i = 0; i < n; ++i) {
      bool touched = !parents_[i].empty();
      for (std::size_t c = 0; c < n && !touched; ++c) touched = adj_[i][c];
      if (!touched) throw InvalidGraph("isolated node '" + nodes_[i].name + "'");
    }
  }

  // Kahn's algorithm, lowest declaration index first.
  topo_.clear();
  std::vector<std::size_t> indegree(n);
  for (std::size_t c = 0; c < n; ++c) indegree[c] = parents_[c].size();
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.insert(i);
  while (!ready.empty()) {
    const std::size_t i = *ready.begin();
    ready.erase(ready.begin());
    topo_.push_back(i);
    for (std::size_t c = 0; c < n; ++c) {
      if (adj_[i][c] && --indegree[c] == 0) ready.insert(c);
    }
  }
  if (topo_.size() != n) throw InvalidGraph("graph has a cycle");
}

std::size_t Dag::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].name == name) return i;
  throw UnknownNode("unknown node '" + name + "'");
}

bool Dag::contains(const std::string& name) const {
  for (const auto& node : nodes_)
    if (node.name == name) return true;
  return false;
}

bool Dag::has_edge(std::size_t parent, std::size_t child) const {
  return adj_[parent][child];
}

std::vector<std::pair<std::size_t, std::size_t>> Dag::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t p = 0; p < nodes_.size(); ++p)
    for (std::size_t c = 0; c < nodes_.size(); ++c)
      if (adj_[p][c]) out.emplace_back(p, c);
  return out;
}

std::vector<std::string> Dag::parent_names(const std::string& name) const {
  std::vector<std::string> out;
  for (std::size_t p : parents_[index_of(name)]) out.push_back(nodes_[p].name);
  return out;
}

std::vector<std::size_t> Dag::manipulative_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].role == Role::manipulative) out.push_back(i);
  return out;
}

Dag Dag::mutilate(const InterventionSet& set) const {
  Dag out;
  out.nodes_ = nodes_;
  out.adj_ = adj_;
  out.target_ = target_;
  for (const auto& name : set.targets) {
    if (!contains(name)) throw InvalidIntervention("unknown intervention target '" + name + "'");
    const std::size_t t = index_of(name);
    if (nodes_[t].role != Role::manipulative)
      throw InvalidIntervention("node '" + name + "' is not manipulative");
    for (std::size_t p = 0; p < nodes_.size(); ++p) out.adj_[p][t] = false;
  }
  // Mutilation may orphan a node; that is fine for sampling, so derived
  // state is rebuilt without the isolation check.
  const std::size_t n = out.nodes_.size();
  out.parents_.assign(n, {});
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t p = 0; p < n; ++p)
      if (out.adj_[p][c]) out.parents_[c].push_back(p);
  out.topo_.clear();
  std::vector<std::size_t> indegree(n);
  for (std::size_t c = 0; c < n; ++c) indegree[c] = out.parents_[c].size();
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.insert(i);
  while (!ready.empty()) {
    const std::size_t i = *ready.begin();
    ready.erase(ready.begin());
    out.topo_.push_back(i);
    for (std::size_t c = 0; c < n; ++c)
      if (out.adj_[i][c] && --indegree[c] == 0) ready.insert(c);
  }
  if (out.topo_.size() != n) throw InternalError("mutilated graph has a cycle");
  return out;
}

bool Dag::same_edges(const Dag& other) const {
  return same_nodes(other) && adj_ == other.adj_;
}

bool Dag::same_nodes(const Dag& other) const {
  if (nodes_.size() != other.nodes_.size()) return false;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].name != other.nodes_[i].name || nodes_[i].role != other.nodes_[i].role)
      return false;
  return true;
}

std::string Dag::describe() const {
  std::ostringstream out;
  bool first = true;
  for (const auto& [p, c] : edges()) {
    if (!first) out << ";";
    out << nodes_[p].name << "->" << nodes_[c].name;
    first = false;
  }
  return out.str();
}

HypothesisSpace::HypothesisSpace(std::vector<Dag> graphs) : graphs_(std::move(graphs)) {
  if (graphs_.empty()) throw InvalidGraph("hypothesis space is empty");
  for (std::size_t i = 1; i < graphs_.size(); ++i) {
    if (!graphs_[i].same_nodes(graphs_[0]))
      throw InvalidGraph("hypothesis graphs disagree on the node universe");
    for (std::size_t j = 0; j < i; ++j)
      if (graphs_[i].same_edges(graphs_[j]))
        throw InvalidGraph("duplicate hypothesis graph " + graphs_[i].describe());
  }
}

std::optional<std::size_t> HypothesisSpace::find(const Dag& g) const {
  for (std::size_t i = 0; i < graphs_.size(); ++i)
    if (graphs_[i].same_edges(g)) return i;
  return std::nullopt;
}

namespace {

std::vector<Node> three_nodes() {
  return {{"X", Role::manipulative}, {"Z", Role::manipulative}, {"Y", Role::target}};
}

}  // namespace

std::vector<Dag> brute_force_three_node_dags() {
  // Candidate edges: the X-Z pair in either orientation plus X->Y, Z->Y.
  // Y never has outgoing edges (it is the target), so cycles can only come
  // from picking both X->Z and Z->X, which the orientation loop rules out.
  std::vector<Dag> out;
  const std::vector<std::pair<std::string, std::string>> xz_states[3] = {
      {}, {{"X", "Z"}}, {{"Z", "X"}}};
  for (const auto& xz : xz_states) {
    for (int x_to_y = 0; x_to_y < 2; ++x_to_y) {
      for (int z_to_y = 0; z_to_y < 2; ++z_to_y) {
        auto edges = xz;
        if (x_to_y) edges.emplace_back("X", "Y");
        if (z_to_y) edges.emplace_back("Z", "Y");
        try {
          out.emplace_back(three_nodes(), edges);
        } catch (const InvalidGraph&) {
          // isolated node; skipped
        }
      }
    }
  }
  return out;
}

HypothesisSpace enumerate_three_node_space() {
  std::vector<Dag> all = brute_force_three_node_dags();
  const Dag dropped(three_nodes(), {{"Z", "X"}, {"Z", "Y"}, {"X", "Y"}});
  std::vector<Dag> kept;
  for (auto& g : all)
    if (!g.same_edges(dropped)) kept.push_back(std::move(g));
  return HypothesisSpace(std::move(kept));
}

}  // namespace ceopt
