#include "uge/graph.hpp"

#include <algorithm>
#include <set>
#include <string>

namespace uge {

Graph::Graph(int num_nodes, std::vector<std::pair<int, int>> edge_list)
    : n(num_nodes), edges(std::move(edge_list)) {
  validate();
}

bool Graph::has_edge(int a, int b) const {
  for (const auto& [u, v] : edges)
    if ((u == a && v == b) || (u == b && v == a)) return true;
  return false;
}

std::vector<int> Graph::degrees() const {
  std::vector<int> deg(n, 0);
  for (const auto& [u, v] : edges) {
    ++deg[u];
    ++deg[v];
  }
  return deg;
}

Matrix Graph::adjacency() const {
  Matrix a(n, n);
  for (const auto& [u, v] : edges) {
    a(u, v) = 1.0;
    a(v, u) = 1.0;
  }
  return a;
}

std::vector<int> Graph::component_ids() const {
  std::vector<std::vector<int>> adj(n);
  for (const auto& [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::vector<int> comp(n, -1);
  int next = 0;
  std::vector<int> stack;
  for (int s = 0; s < n; ++s) {
    if (comp[s] != -1) continue;
    comp[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int v : adj[u]) {
        if (comp[v] == -1) {
          comp[v] = next;
          stack.push_back(v);
        }
      }
    }
    ++next;
  }
  return comp;
}

int Graph::num_components() const {
  const auto comp = component_ids();
  int m = 0;
  for (int c : comp) m = std::max(m, c + 1);
  return m;
}

void Graph::validate() const {
  if (n < 0) throw std::invalid_argument("Graph: negative node count");
  std::set<std::pair<int, int>> seen;
  for (const auto& [u, v] : edges) {
    if (u < 0 || u >= n || v < 0 || v >= n)
      throw std::invalid_argument("Graph: edge (" + std::to_string(u) + "," + std::to_string(v) +
                                  ") has endpoint outside 0.." + std::to_string(n - 1));
    if (u == v)
      throw std::invalid_argument("Graph: self-loop at node " + std::to_string(u));
    const auto key = std::minmax(u, v);
    if (!seen.insert(key).second)
      throw std::invalid_argument("Graph: duplicate edge (" + std::to_string(key.first) + "," +
                                  std::to_string(key.second) + ")");
  }
  if (node_labels && static_cast<int>(node_labels->size()) != n)
    throw std::invalid_argument("Graph: node_labels size " +
                                std::to_string(node_labels->size()) + " does not match n=" +
                                std::to_string(n));
  if (features && features->rows() != n)
    throw std::invalid_argument("Graph: feature rows " + std::to_string(features->rows()) +
                                " do not match n=" + std::to_string(n));
}

Graph permute(const Graph& g, const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != g.n)
    throw std::invalid_argument("permute: perm size does not match node count");
  std::vector<bool> hit(g.n, false);
  for (int p : perm) {
    if (p < 0 || p >= g.n || hit[p])
      throw std::invalid_argument("permute: not a permutation of 0.." + std::to_string(g.n - 1));
    hit[p] = true;
  }
  Graph out;
  out.n = g.n;
  out.edges.reserve(g.edges.size());
  for (const auto& [u, v] : g.edges) out.edges.emplace_back(perm[u], perm[v]);
  if (g.node_labels) {
    std::vector<int> labels(g.n);
    for (int i = 0; i < g.n; ++i) labels[perm[i]] = (*g.node_labels)[i];
    out.node_labels = std::move(labels);
  }
  if (g.features) {
    Matrix f(g.n, g.features->cols());
    for (int i = 0; i < g.n; ++i)
      for (int j = 0; j < f.cols(); ++j) f(perm[i], j) = (*g.features)(i, j);
    out.features = std::move(f);
  }
  out.validate();
  return out;
}

Graph make_cycle(int n) {
  if (n < 3) throw std::invalid_argument("make_cycle: need at least 3 nodes");
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n);
  return Graph(n, std::move(e));
}

Graph make_complete(int n) {
  if (n < 1) throw std::invalid_argument("make_complete: need at least 1 node");
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) e.emplace_back(i, j);
  return Graph(n, std::move(e));
}

Graph make_path(int n) {
  if (n < 1) throw std::invalid_argument("make_path: need at least 1 node");
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return Graph(n, std::move(e));
}

Graph disjoint_union(const Graph& a, const Graph& b) {
  Graph out;
  out.n = a.n + b.n;
  out.edges = a.edges;
  for (const auto& [u, v] : b.edges) out.edges.emplace_back(u + a.n, v + a.n);
  if (a.node_labels && b.node_labels) {
    std::vector<int> labels = *a.node_labels;
    labels.insert(labels.end(), b.node_labels->begin(), b.node_labels->end());
    out.node_labels = std::move(labels);
  }
  if (a.features && b.features && a.features->cols() == b.features->cols()) {
    Matrix f(out.n, a.features->cols());
    for (int i = 0; i < a.n; ++i)
      for (int j = 0; j < f.cols(); ++j) f(i, j) = (*a.features)(i, j);
    for (int i = 0; i < b.n; ++i)
      for (int j = 0; j < f.cols(); ++j) f(a.n + i, j) = (*b.features)(i, j);
    out.features = std::move(f);
  }
  out.validate();
  return out;
}

}  // namespace uge
