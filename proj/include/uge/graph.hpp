#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "uge/matrix.hpp"

namespace uge {

// Undirected simple graph. Edges are stored once per pair; adjacency and
// degrees treat them symmetrically. Node labels (categorical) and node
// features (real-valued rows) are both optional.
struct Graph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;
  std::optional<std::vector<int>> node_labels;
  std::optional<Matrix> features;

  Graph() = default;
  Graph(int num_nodes, std::vector<std::pair<int, int>> edge_list);

  int num_edges() const { return static_cast<int>(edges.size()); }
  bool has_edge(int a, int b) const;

  std::vector<int> degrees() const;
  Matrix adjacency() const;

  // Node ids of each connected component, and the component id per node.
  std::vector<int> component_ids() const;
  int num_components() const;

  // Throws std::invalid_argument on self-loops, duplicate edges, out-of-range
  // endpoints, or label/feature sizes that do not match n.
  void validate() const;
};

// Relabeled copy: node i of g becomes node perm[i]. perm must be a
// permutation of 0..n-1. Adjacency satisfies A' = P A P^T.
Graph permute(const Graph& g, const std::vector<int>& perm);

Graph make_cycle(int n);
Graph make_complete(int n);
Graph make_path(int n);
// Nodes of b are shifted past the nodes of a; labels/features are carried
// over only when both inputs have them.
Graph disjoint_union(const Graph& a, const Graph& b);

}  // namespace uge
