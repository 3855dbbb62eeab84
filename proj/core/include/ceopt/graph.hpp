#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ceopt/errors.hpp"

namespace ceopt {

enum class Role { manipulative, non_manipulative, target };

std::string to_string(Role role);
Role role_from_string(const std::string& s);

struct Node {
  std::string name;
  Role role = Role::non_manipulative;
};

// Closed interval of admissible intervention values for one variable.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

// A set of manipulative variables to intervene on jointly, with the box of
// admissible values. An empty target list denotes the observational regime.
struct InterventionSet {
  std::vector<std::string> targets;
  std::vector<Interval> domains;  // one per target

  bool empty() const { return targets.empty(); }
  std::size_t size() const { return targets.size(); }
  // "X,Z"-style label used in traces and error messages.
  std::string label() const;
  bool operator==(const InterventionSet& other) const {
    return targets == other.targets;
  }
};

// Directed acyclic graph over named, role-labelled nodes. Node order is
// fixed at construction and breaks ties in the topological order, so the
// sampling order of any downstream simulator is deterministic.
//
// Invariants enforced at construction: acyclic, exactly one target node,
// the target is a sink, and no node is isolated. Immutable afterwards.
class Dag {
 public:
  Dag(std::vector<Node> nodes, std::vector<std::pair<std::string, std::string>> edges);

  std::size_t num_nodes() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(std::size_t i) const { return nodes_[i]; }

  // Index of a node by name; throws UnknownNode.
  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t target_index() const { return target_; }
  const std::string& target_name() const { return nodes_[target_].name; }

  bool has_edge(std::size_t parent, std::size_t child) const;
  // Edges as (parent, child) index pairs, in a canonical order.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const;

  // Parent indices of node i, ascending in node order.
  const std::vector<std::size_t>& parents(std::size_t i) const { return parents_[i]; }
  std::vector<std::string> parent_names(const std::string& name) const;

  bool is_root(std::size_t i) const { return parents_[i].empty(); }

  // Every node exactly once, parents before children, declaration order
  // breaking ties.
  const std::vector<std::size_t>& topological_order() const { return topo_; }

  std::vector<std::size_t> manipulative_indices() const;

  // Graph after the perfect intervention on `set`: all edges into the
  // intervened nodes removed, roles and node order unchanged.
  Dag mutilate(const InterventionSet& set) const;

  bool same_edges(const Dag& other) const;
  bool same_nodes(const Dag& other) const;

  std::string describe() const;  // compact "A->B;C->B" edge listing

 private:
  Dag() = default;
  void rebuild_derived();

  std::vector<Node> nodes_;
  std::vector<std::vector<bool>> adj_;             // adj_[p][c]
  std::vector<std::vector<std::size_t>> parents_;  // per child, ascending
  std::vector<std::size_t> topo_;
  std::size_t target_ = 0;
};

// A finite set of alternative causal hypotheses over one node universe.
// All graphs share the node list (names, order, roles) and have pairwise
// distinct edge sets.
class HypothesisSpace {
 public:
  explicit HypothesisSpace(std::vector<Dag> graphs);

  std::size_t size() const { return graphs_.size(); }
  const Dag& graph(std::size_t i) const { return graphs_[i]; }
  const std::vector<Dag>& graphs() const { return graphs_; }

  // Index of the graph with the same edge set, if present.
  std::optional<std::size_t> find(const Dag& g) const;

 private:
  std::vector<Dag> graphs_;
};

// All DAGs over nodes {X, Z, Y} (X, Z manipulative, Y target) that are
// useful causal-optimization hypotheses: Y is a sink, no node is isolated,
// and of the two edge-dense super-DAGs only the one extending the X->Z
// orientation is kept. Returns six graphs; the chain X->Z->Y is among them.
HypothesisSpace enumerate_three_node_space();

// Every DAG over the given nodes with Y-as-sink and no-isolated-node
// filters only. Exposed so tests can reconcile the curated space above
// against an exhaustive enumeration.
std::vector<Dag> brute_force_three_node_dags();

}  // namespace ceopt
