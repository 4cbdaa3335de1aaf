#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "testutil.hpp"
#include "uge/batch.hpp"
#include "uge/encoder.hpp"
#include "uge/spectral.hpp"

using namespace uge;

namespace {

// Overwrites an MLP with exact identity maps (square levels only).
void set_identity_mlp(ModelParams& params, const std::string& prefix, int depth) {
  for (int j = 0; j < depth; ++j) {
    Matrix& w = params.param(prefix + ".fc" + std::to_string(j) + ".w").value();
    REQUIRE(w.rows() == w.cols());
    for (double& v : w.values()) v = 0.0;
    for (int i = 0; i < w.rows(); ++i) w(i, i) = 1.0;
    Matrix& b = params.param(prefix + ".fc" + std::to_string(j) + ".b").value();
    for (double& v : b.values()) v = 0.0;
  }
}

Batch single_graph_batch(const Graph& g, Matrix features, const Matrix& fl) {
  Batch b;
  b.indices = {0};
  b.n_max = g.n;
  b.offsets = {0};
  b.sizes = {g.n};
  b.features = Tensor(std::move(features));
  b.mask.assign(size_t(g.n), 1.0);
  b.fl_blocks = {fl};
  b.conv_blocks = {conv_filter(g)};
  b.adj = {g.adjacency()};
  b.labels = {-1};
  return b;
}

Dataset with_provided_features(std::vector<Graph> graphs, int dim, uint64_t seed,
                               const std::string& name) {
  CounterRng rng(seed, 0xF00D);
  Dataset ds;
  ds.name = name;
  for (auto& g : graphs) {
    Matrix x(g.n, dim);
    for (double& v : x.values()) v = 0.1 + 0.9 * rng.next_uniform();
    g.features = std::move(x);
    ds.labels.push_back(static_cast<int>(ds.graphs.size()) % 2);
    ds.original_labels.push_back(ds.labels.back() + 1);
    ds.graphs.push_back(std::move(g));
  }
  ds.num_classes = 2;
  return ds;
}

}  // namespace

TEST_CASE("config validation") {
  EncoderConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.hidden = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.layers = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.moments = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.mlp_depth = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.dropout_rate = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.dropout_rate = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("parameter inventory and shapes") {
  EncoderConfig cfg;
  cfg.hidden = 4;
  cfg.layers = 3;
  cfg.moments = 2;
  cfg.mlp_depth = 2;

  ModelParams params;
  ensure_encoder_params(params, cfg, 1);
  ensure_transformer_params(params, "foo", 5, cfg, 1);

  for (int t = 1; t <= 3; ++t) {
    const std::string l = "enc.l" + std::to_string(t);
    for (int p = 1; p <= 2; ++p) {
      const Matrix& w0 = params.param(l + ".p" + std::to_string(p) + ".fc0.w").value();
      CHECK(w0.rows() == 4 * t);  // consumes the running concatenation
      CHECK(w0.cols() == 4);
      const Matrix& w1 = params.param(l + ".p" + std::to_string(p) + ".fc1.w").value();
      CHECK(w1.rows() == 4);
      CHECK(w1.cols() == 4);
    }
    CHECK(params.param(l + ".out.fc0.w").value().rows() == 4);
    CHECK(params.has_bn(l + ".bn"));
  }
  CHECK(params.param("ds.foo.input.fc0.w").value().rows() == 5);
  CHECK(params.param("ds.foo.input.fc0.w").value().cols() == 4);
  CHECK(params.has_bn("ds.foo.input.bn"));

  // idempotent: a second ensure leaves everything in place
  const size_t count = params.scalar_count();
  const double probe = params.param("enc.l1.p1.fc0.w").value()(0, 0);
  ensure_encoder_params(params, cfg, 99);
  ensure_transformer_params(params, "foo", 5, cfg, 99);
  CHECK(params.scalar_count() == count);
  CHECK(params.param("enc.l1.p1.fc0.w").value()(0, 0) == probe);

  CHECK_THROWS_AS(ensure_transformer_params(params, "bar", 0, cfg, 1),
                  std::invalid_argument);
}

TEST_CASE("moment layer with identity maps on an edge graph") {
  EncoderConfig cfg;
  cfg.hidden = 3;
  cfg.layers = 1;
  cfg.moments = 2;
  cfg.mlp_depth = 2;
  cfg.dropout_rate = 0.5;  // inert in eval mode

  ModelParams params;
  ensure_encoder_params(params, cfg, 7);
  set_identity_mlp(params, "enc.l1.p1", 2);
  set_identity_mlp(params, "enc.l1.p2", 2);
  set_identity_mlp(params, "enc.l1.out", 2);

  const Graph k2 = make_path(2);
  Batch b = single_graph_batch(k2, Matrix(2, 3, 1.0), normalized_laplacian(k2));

  Tape tape;
  ParamContext ctx(tape, params, /*train=*/false);
  const Tensor y = capsule_layer_batch(ctx, 1, Tensor(Matrix(2, 3, 1.0)), b, cfg);
  // both moment powers of all-ones stay all-ones; the filter doubles them;
  // the two branches add: 4 everywhere
  for (double v : y.value().values()) CHECK(std::fabs(v - 4.0) < 1e-6);
}

TEST_CASE("single-moment identity layer reduces to the propagation filter") {
  EncoderConfig cfg;
  cfg.hidden = 4;
  cfg.layers = 1;
  cfg.moments = 1;
  cfg.mlp_depth = 2;
  cfg.dropout_rate = 0.0;

  ModelParams params;
  ensure_encoder_params(params, cfg, 7);
  set_identity_mlp(params, "enc.l1.p1", 2);
  set_identity_mlp(params, "enc.l1.out", 2);

  CounterRng rng(31, 0);
  const Graph g = testutil::random_graph(5, 0.6, rng);
  Matrix x(5, 4);
  for (double& v : x.values()) v = 0.1 + 0.9 * rng.next_uniform();
  Batch b = single_graph_batch(g, x, normalized_laplacian(g));

  Tape tape;
  ParamContext ctx(tape, params, /*train=*/false);
  const Tensor y = capsule_layer_batch(ctx, 1, Tensor(x), b, cfg);
  const Matrix expected = matmul(conv_filter(g), x);
  CHECK(max_abs_diff(y.value(), expected) < 1e-6);
}

TEST_CASE("input transform with identity maps applies the chosen filter") {
  ModelParams params;
  CounterRng rng(37, 0);
  const Graph g = testutil::random_graph(5, 0.6, rng);
  Matrix x(5, 4);
  for (double& v : x.values()) v = 0.1 + 0.9 * rng.next_uniform();

  // depth 1: a single linear level, so even sign-changing filters pass through
  EncoderConfig cfg;
  cfg.hidden = 4;
  cfg.mlp_depth = 1;
  cfg.dropout_rate = 0.0;
  ensure_transformer_params(params, "idfix", 4, cfg, 7);
  set_identity_mlp(params, "ds.idfix.input", 1);

  {
    Batch b = single_graph_batch(g, x, Matrix::identity(5));
    Tape tape;
    ParamContext ctx(tape, params, /*train=*/false);
    const Tensor out = input_transform_batch(ctx, "idfix", b, cfg);
    CHECK(max_abs_diff(out.value(), x) < 1e-6);
  }
  {
    const Matrix l = laplacian(g);
    Batch b = single_graph_batch(g, x, l);
    Tape tape;
    ParamContext ctx(tape, params, /*train=*/false);
    const Tensor out = input_transform_batch(ctx, "idfix", b, cfg);
    CHECK(max_abs_diff(out.value(), matmul(l, x)) < 1e-6);
  }
}

TEST_CASE("graph embeddings are invariant to node relabeling") {
  EncoderConfig cfg;
  cfg.hidden = 8;
  cfg.layers = 3;
  cfg.moments = 3;
  cfg.mlp_depth = 2;
  cfg.dropout_rate = 0.5;  // eval mode

  ModelParams params;
  ensure_encoder_params(params, cfg, 11);
  ensure_transformer_params(params, "permfix", 5, cfg, 11);

  CounterRng rng(41, 0);
  FeaturePolicy policy;  // auto -> provided
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 4 + static_cast<int>(rng.next_below(6));
    Graph g = testutil::random_graph(n, 0.5, rng);
    g.features = testutil::random_matrix(n, 5, rng);

    Dataset ds;
    ds.name = "permfix";
    ds.graphs.push_back(g);
    std::vector<std::vector<int>> perms;
    for (int p = 0; p < 5; ++p) {
      perms.push_back(testutil::random_permutation(n, rng));
      ds.graphs.push_back(permute(g, perms.back()));
    }
    ds.labels.assign(ds.graphs.size(), 0);
    ds.original_labels = ds.labels;
    ds.num_classes = 2;

    const PreparedDataset prep = prepare_dataset(ds, policy, InputFilter::NormalizedLaplacian, 3);

    Tape tape;
    ParamContext ctx(tape, params, /*train=*/false);
    const EncodeOut base = encode_graph(ctx, "permfix", prep.graphs[0], cfg);
    for (int p = 0; p < 5; ++p) {
      const EncodeOut other = encode_graph(ctx, "permfix", prep.graphs[p + 1], cfg);
      CHECK(max_abs_diff(base.z.value(), other.z.value()) < 1e-6);
      // node outputs are permutation-equivariant
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < cfg.hidden; ++c)
          CHECK(std::fabs(base.y.value()(i, c) - other.y.value()(perms[p][i], c)) < 1e-6);
    }
  }
}

TEST_CASE("pooled embedding is the sum of each graph's real rows") {
  EncoderConfig cfg;
  cfg.hidden = 6;
  cfg.layers = 2;
  cfg.moments = 2;
  cfg.mlp_depth = 2;

  Dataset ds = with_provided_features({make_path(3), make_cycle(5), make_complete(4)}, 4,
                                      51, "poolfix");
  FeaturePolicy policy;
  const PreparedDataset prep = prepare_dataset(ds, policy, InputFilter::NormalizedLaplacian, 3);

  ModelParams params;
  ensure_encoder_params(params, cfg, 13);
  ensure_transformer_params(params, "poolfix", 4, cfg, 13);

  const Batch b = make_batch(prep, {0, 1, 2});
  Tape tape;
  ParamContext ctx(tape, params, /*train=*/false);
  const EncodeOut out = encode_batch(ctx, "poolfix", b, cfg);

  REQUIRE(out.z.rows() == 3);
  REQUIRE(out.y.rows() == 3 * b.n_max);
  for (int gi = 0; gi < 3; ++gi)
    for (int c = 0; c < cfg.hidden; ++c) {
      double s = 0.0;
      for (int r = 0; r < b.sizes[gi]; ++r) s += out.y.value()(b.offsets[gi] + r, c);
      CHECK(std::fabs(out.z.value()(gi, c) - s) < 1e-8);
    }
}

TEST_CASE("batched and single-graph encoding agree in eval mode") {
  EncoderConfig cfg;
  cfg.hidden = 5;
  cfg.layers = 2;
  cfg.moments = 2;
  cfg.mlp_depth = 2;

  Dataset ds = with_provided_features({make_path(4), make_cycle(6), make_complete(3)}, 3,
                                      61, "evalfix");
  FeaturePolicy policy;
  const PreparedDataset prep = prepare_dataset(ds, policy, InputFilter::NormalizedLaplacian, 3);

  ModelParams params;
  ensure_encoder_params(params, cfg, 17);
  ensure_transformer_params(params, "evalfix", 3, cfg, 17);

  Tape tape;
  ParamContext ctx(tape, params, /*train=*/false);
  const EncodeOut batched = encode_batch(ctx, "evalfix", make_batch(prep, {0, 1, 2}), cfg);
  for (int gi = 0; gi < 3; ++gi) {
    const EncodeOut single = encode_graph(ctx, "evalfix", prep.graphs[gi], cfg);
    for (int c = 0; c < cfg.hidden; ++c)
      CHECK(std::fabs(batched.z.value()(gi, c) - single.z.value()(0, c)) < 1e-9);
  }
}

TEST_CASE("feature policies") {
  FeaturePolicy policy;  // auto

  SUBCASE("provided features pass through, one-hot labels appended when present") {
    Dataset ds = with_provided_features({make_path(3), make_path(4)}, 3, 71, "polyfix");
    PreparedDataset prep = prepare_dataset(ds, policy, InputFilter::NormalizedLaplacian, 3);
    CHECK(prep.feature_dim == 3);
    CHECK(max_abs_diff(prep.graphs[0].features, *ds.graphs[0].features) == 0.0);

    ds.graphs[0].node_labels = std::vector<int>{0, 2, 1};
    ds.graphs[1].node_labels = std::vector<int>{1, 1, 0, 2};
    prep = prepare_dataset(ds, policy, InputFilter::NormalizedLaplacian, 3);
    CHECK(prep.feature_dim == 6);  // 3 attributes + labels 0..2
    CHECK(prep.graphs[0].features(1, 3 + 2) == 1.0);
    CHECK(prep.graphs[0].features(1, 3 + 0) == 0.0);
    CHECK(prep.graphs[0].features(0, 0) == (*ds.graphs[0].features)(0, 0));
  }

  SUBCASE("label-only datasets become one-hot") {
    Dataset ds;
    ds.name = "hotfix";
    Graph a = make_path(2);
    a.node_labels = std::vector<int>{0, 3};
    Graph b = make_path(3);
    b.node_labels = std::vector<int>{1, 1, 3};
    ds.graphs = {a, b};
    ds.labels = {0, 1};
    ds.num_classes = 2;
    const PreparedDataset prep = prepare_dataset(ds, policy, InputFilter::NormalizedLaplacian, 3);
    CHECK(prep.feature_dim == 4);  // labels up to 3
    CHECK(prep.graphs[0].features(1, 3) == 1.0);
    CHECK(prep.graphs[1].features(0, 1) == 1.0);
    CHECK(prep.graphs[1].features(0, 0) == 0.0);
  }

  SUBCASE("featureless datasets get padded spectral embeddings") {
    Dataset ds;
    ds.name = "specfix";
    ds.graphs = {make_path(5), make_cycle(4)};
    ds.labels = {0, 1};
    ds.num_classes = 2;
    const PreparedDataset prep = prepare_dataset(ds, policy, InputFilter::NormalizedLaplacian, 3);
    CHECK(prep.feature_dim == 8);  // policy default
    const Matrix expected = spectral_node_features(ds.graphs[0], 4);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 4; ++j) CHECK(prep.graphs[0].features(i, j) == expected(i, j));
      for (int j = 4; j < 8; ++j) CHECK(prep.graphs[0].features(i, j) == 0.0);
    }
  }

  SUBCASE("gaussian features are deterministic per dataset and graph") {
    Dataset ds;
    ds.name = "gaussfix";
    ds.graphs = {make_path(6), make_path(6)};
    ds.labels = {0, 1};
    ds.num_classes = 2;
    FeaturePolicy gp;
    gp.kind = FeatureKind::Gaussian;
    gp.dim = 4;
    const PreparedDataset a = prepare_dataset(ds, gp, InputFilter::NormalizedLaplacian, 3);
    const PreparedDataset b = prepare_dataset(ds, gp, InputFilter::NormalizedLaplacian, 3);
    CHECK(max_abs_diff(a.graphs[0].features, b.graphs[0].features) == 0.0);
    // identical structure, different graph index -> different draws
    CHECK(max_abs_diff(a.graphs[0].features, a.graphs[1].features) > 0.0);
    // the dataset name salts the stream
    Dataset ds2 = ds;
    ds2.name = "gaussfix2";
    const PreparedDataset c = prepare_dataset(ds2, gp, InputFilter::NormalizedLaplacian, 3);
    CHECK(max_abs_diff(a.graphs[0].features, c.graphs[0].features) > 0.0);
    // explicit sigma scales the same underlying draws linearly
    FeaturePolicy g1 = gp;
    g1.sigma = 1.0;
    FeaturePolicy g2 = gp;
    g2.sigma = 2.0;
    const PreparedDataset s1 = prepare_dataset(ds, g1, InputFilter::NormalizedLaplacian, 3);
    const PreparedDataset s2 = prepare_dataset(ds, g2, InputFilter::NormalizedLaplacian, 3);
    CHECK(max_abs_diff(scale(s1.graphs[0].features, 2.0), s2.graphs[0].features) < 1e-15);
  }

  SUBCASE("filter choice controls the input transform matrix") {
    Dataset ds = with_provided_features({make_cycle(5)}, 2, 81, "filtfix");
    const PreparedDataset nl =
        prepare_dataset(ds, policy, InputFilter::NormalizedLaplacian, 3);
    const PreparedDataset l = prepare_dataset(ds, policy, InputFilter::Laplacian, 3);
    CHECK(max_abs_diff(nl.graphs[0].fl, normalized_laplacian(ds.graphs[0])) == 0.0);
    CHECK(max_abs_diff(l.graphs[0].fl, laplacian(ds.graphs[0])) == 0.0);
    CHECK(max_abs_diff(nl.graphs[0].conv, conv_filter(ds.graphs[0])) == 0.0);
    CHECK(max_abs_diff(nl.graphs[0].adj, ds.graphs[0].adjacency()) == 0.0);
  }

  SUBCASE("policy errors name the offending graph") {
    Dataset ds;
    ds.name = "errfix";
    ds.graphs = {make_path(3), make_path(3)};
    ds.labels = {0, 1};
    ds.num_classes = 2;
    FeaturePolicy provided;
    provided.kind = FeatureKind::Provided;
    CHECK_THROWS_WITH_AS(prepare_dataset(ds, provided, InputFilter::NormalizedLaplacian, 3),
                         doctest::Contains("graph 0"), std::invalid_argument);
    ds.graphs[0].features = Matrix(3, 2);
    CHECK_THROWS_WITH_AS(prepare_dataset(ds, provided, InputFilter::NormalizedLaplacian, 3),
                         doctest::Contains("graph 1"), std::invalid_argument);
    ds.graphs[1].features = Matrix(3, 5);
    CHECK_THROWS_WITH_AS(prepare_dataset(ds, provided, InputFilter::NormalizedLaplacian, 3),
                         doctest::Contains("inconsistent"), std::invalid_argument);

    FeaturePolicy onehot;
    onehot.kind = FeatureKind::OneHot;
    CHECK_THROWS_WITH_AS(prepare_dataset(ds, onehot, InputFilter::NormalizedLaplacian, 3),
                         doctest::Contains("no node labels"), std::invalid_argument);

    FeaturePolicy bad;
    bad.kind = FeatureKind::Gaussian;
    bad.dim = 0;
    CHECK_THROWS_AS(prepare_dataset(ds, bad, InputFilter::NormalizedLaplacian, 3),
                    std::invalid_argument);

    Dataset empty;
    empty.name = "empty";
    CHECK_THROWS_AS(prepare_dataset(empty, policy, InputFilter::NormalizedLaplacian, 3),
                    std::invalid_argument);
  }

  SUBCASE("name round trips") {
    CHECK(feature_kind_from_name("auto") == FeatureKind::Auto);
    CHECK(std::string(feature_kind_name(FeatureKind::Spectral)) == "spectral");
    CHECK_THROWS_AS(feature_kind_from_name("bogus"), std::invalid_argument);
    CHECK(input_filter_from_name("laplacian") == InputFilter::Laplacian);
    CHECK(std::string(input_filter_name(InputFilter::NormalizedLaplacian)) ==
          "normalized_laplacian");
    CHECK_THROWS_AS(input_filter_from_name("bogus"), std::invalid_argument);
  }
}

TEST_CASE("batch assembly layout") {
  Dataset ds = with_provided_features({make_path(3), make_cycle(5), make_complete(4)}, 2,
                                      91, "layoutfix");
  FeaturePolicy policy;
  const PreparedDataset prep = prepare_dataset(ds, policy, InputFilter::NormalizedLaplacian, 3);

  const Batch b = make_batch(prep, {0, 2});
  CHECK(b.size() == 2);
  CHECK(b.n_max == 4);
  CHECK(b.offsets == std::vector<int>{0, 4});
  CHECK(b.sizes == std::vector<int>{3, 4});
  CHECK(b.labels == std::vector<int>{prep.labels[0], prep.labels[2]});
  REQUIRE(b.mask.size() == 8);
  CHECK(b.mask[2] == 1.0);
  CHECK(b.mask[3] == 0.0);  // padding row of the 3-node graph
  CHECK(b.mask[7] == 1.0);
  CHECK(b.features.rows() == 8);
  CHECK(b.features.value()(1, 1) == prep.graphs[0].features(1, 1));
  CHECK(b.features.value()(3, 0) == 0.0);
  CHECK(b.features.value()(4, 0) == prep.graphs[2].features(0, 0));
  CHECK(b.fl_blocks.size() == 2);
  CHECK(b.adj[1].rows() == 4);

  // repeats are allowed
  const Batch twice = make_batch(prep, {1, 1});
  CHECK(twice.sizes == std::vector<int>{5, 5});

  CHECK_THROWS_AS(make_batch(prep, {}), std::invalid_argument);
  CHECK_THROWS_AS(make_batch(prep, {3}), std::out_of_range);
  CHECK_THROWS_AS(make_batch(prep, {-1}), std::out_of_range);
}
