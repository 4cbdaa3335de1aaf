#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "testutil.hpp"
#include "uge/graph.hpp"
#include "uge/matrix.hpp"
#include "uge/rng.hpp"

using namespace uge;

TEST_CASE("construction validates edges") {
  CHECK_NOTHROW(Graph(3, {{0, 1}, {1, 2}}));
  CHECK_THROWS_WITH_AS(Graph(3, {{0, 0}}), doctest::Contains("self-loop"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(Graph(3, {{0, 1}, {1, 0}}), doctest::Contains("duplicate"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(Graph(3, {{0, 3}}), doctest::Contains("outside"),
                       std::invalid_argument);
  CHECK_THROWS_AS(Graph(2, {{-1, 0}}), std::invalid_argument);
}

TEST_CASE("validate rejects mismatched annotations") {
  Graph g = make_path(3);
  g.node_labels = std::vector<int>{1, 2};
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g.node_labels = std::vector<int>{1, 2, 3};
  CHECK_NOTHROW(g.validate());
  g.features = Matrix(2, 4);
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g.features = Matrix(3, 4);
  CHECK_NOTHROW(g.validate());
}

TEST_CASE("degrees, adjacency, has_edge") {
  const Graph p3 = make_path(3);
  CHECK(p3.degrees() == std::vector<int>{1, 2, 1});
  CHECK(p3.has_edge(0, 1));
  CHECK(p3.has_edge(1, 0));
  CHECK_FALSE(p3.has_edge(0, 2));

  const Graph k4 = make_complete(4);
  CHECK(k4.num_edges() == 6);
  for (int d : k4.degrees()) CHECK(d == 3);

  const Matrix a = p3.adjacency();
  CHECK(a.rows() == 3);
  CHECK(a(0, 1) == 1.0);
  CHECK(a(1, 0) == 1.0);
  CHECK(a(0, 2) == 0.0);
  CHECK(a(0, 0) == 0.0);
  CHECK(is_symmetric(a, 0.0));
}

TEST_CASE("generators") {
  const Graph c5 = make_cycle(5);
  CHECK(c5.num_edges() == 5);
  for (int d : c5.degrees()) CHECK(d == 2);
  CHECK_THROWS_AS(make_cycle(2), std::invalid_argument);

  CHECK(make_path(1).num_edges() == 0);
  CHECK(make_complete(1).num_edges() == 0);
  CHECK_THROWS_AS(make_path(0), std::invalid_argument);
  CHECK_THROWS_AS(make_complete(0), std::invalid_argument);
}

TEST_CASE("components") {
  const Graph tri2 = disjoint_union(make_cycle(3), make_cycle(3));
  CHECK(tri2.n == 6);
  CHECK(tri2.num_edges() == 6);
  CHECK(tri2.num_components() == 2);
  const auto comp = tri2.component_ids();
  CHECK(comp[0] == comp[1]);
  CHECK(comp[0] == comp[2]);
  CHECK(comp[3] == comp[4]);
  CHECK(comp[0] != comp[3]);
  CHECK(make_cycle(6).num_components() == 1);
}

TEST_CASE("disjoint_union carries annotations only when both sides have them") {
  Graph a = make_path(2);
  Graph b = make_path(3);
  CHECK_FALSE(disjoint_union(a, b).node_labels.has_value());
  a.node_labels = std::vector<int>{5, 6};
  CHECK_FALSE(disjoint_union(a, b).node_labels.has_value());
  b.node_labels = std::vector<int>{7, 8, 9};
  const Graph u = disjoint_union(a, b);
  REQUIRE(u.node_labels.has_value());
  CHECK(*u.node_labels == std::vector<int>{5, 6, 7, 8, 9});

  a.features = Matrix(2, 2, 1.0);
  b.features = Matrix(3, 2, 2.0);
  const Graph uf = disjoint_union(a, b);
  REQUIRE(uf.features.has_value());
  CHECK((*uf.features)(0, 0) == 1.0);
  CHECK((*uf.features)(4, 1) == 2.0);
}

TEST_CASE("permute satisfies A' = P A P^T and relocates annotations") {
  CounterRng rng(3, 0);
  for (int trial = 0; trial < 10; ++trial) {
    Graph g = testutil::random_graph(7, 0.4, rng);
    g.node_labels = std::vector<int>(7);
    for (int i = 0; i < 7; ++i) (*g.node_labels)[i] = i * 10;
    g.features = testutil::random_matrix(7, 3, rng);
    const auto perm = testutil::random_permutation(7, rng);
    const Graph h = permute(g, perm);

    Matrix p(7, 7);
    for (int i = 0; i < 7; ++i) p(perm[i], i) = 1.0;
    const Matrix expected = matmul(matmul(p, g.adjacency()), transpose(p));
    CHECK(max_abs_diff(h.adjacency(), expected) == 0.0);

    for (int i = 0; i < 7; ++i) {
      CHECK((*h.node_labels)[perm[i]] == (*g.node_labels)[i]);
      for (int j = 0; j < 3; ++j) CHECK((*h.features)(perm[i], j) == (*g.features)(i, j));
    }
    CHECK(h.num_edges() == g.num_edges());
  }
}

TEST_CASE("permute rejects malformed permutations") {
  const Graph g = make_path(3);
  CHECK_THROWS_AS(permute(g, {0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(permute(g, {0, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(permute(g, {0, 1, 3}), std::invalid_argument);
}
