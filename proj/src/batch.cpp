#include "uge/batch.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "uge/rng.hpp"

namespace uge {

FeatureKind feature_kind_from_name(const std::string& name) {
  if (name == "provided") return FeatureKind::Provided;
  if (name == "gaussian") return FeatureKind::Gaussian;
  if (name == "spectral") return FeatureKind::Spectral;
  if (name == "onehot") return FeatureKind::OneHot;
  if (name == "auto") return FeatureKind::Auto;
  throw std::invalid_argument("unknown feature kind '" + name + "'");
}

std::string feature_kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::Provided: return "provided";
    case FeatureKind::Gaussian: return "gaussian";
    case FeatureKind::Spectral: return "spectral";
    case FeatureKind::OneHot: return "onehot";
    case FeatureKind::Auto: return "auto";
  }
  throw std::logic_error("unreachable feature kind");
}

InputFilter input_filter_from_name(const std::string& name) {
  if (name == "normalized_laplacian") return InputFilter::NormalizedLaplacian;
  if (name == "laplacian") return InputFilter::Laplacian;
  throw std::invalid_argument("unknown input filter '" + name + "'");
}

std::string input_filter_name(InputFilter f) {
  return f == InputFilter::NormalizedLaplacian ? "normalized_laplacian" : "laplacian";
}

namespace {

Matrix onehot_features(const Graph& g, int vocab) {
  Matrix x(g.n, vocab);
  for (int i = 0; i < g.n; ++i) {
    const int lab = (*g.node_labels)[i];
    if (lab < 0 || lab >= vocab)
      throw std::invalid_argument("one-hot features: node label " + std::to_string(lab) +
                                  " outside vocabulary of size " + std::to_string(vocab));
    x(i, lab) = 1.0;
  }
  return x;
}

Matrix padded_spectral(const Graph& g, int dim) {
  Matrix x(g.n, dim);
  const int k = std::min(dim, g.n - 1);
  if (k < 1) return x;  // single node: all zeros
  const Matrix embed = spectral_node_features(g, k);
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < k; ++j) x(i, j) = embed(i, j);
  return x;
}

}  // namespace

PreparedDataset prepare_dataset(const Dataset& ds, const FeaturePolicy& policy,
                                InputFilter filter, uint64_t seed) {
  if (ds.graphs.empty()) throw std::invalid_argument("prepare_dataset: empty dataset");
  FeatureKind kind = policy.kind;
  bool append_onehot = false;  // auto mode concatenates one-hot labels to provided features
  if (kind == FeatureKind::Auto) {
    const bool all_features = std::all_of(ds.graphs.begin(), ds.graphs.end(),
                                          [](const Graph& g) { return g.features.has_value(); });
    const bool all_labels = std::all_of(ds.graphs.begin(), ds.graphs.end(),
                                        [](const Graph& g) { return g.node_labels.has_value(); });
    // Featureless graphs get deterministic spectral embeddings: they depend on
    // the whole graph structure, which one-hot labels and random probes miss
    // on regular graphs. Gaussian probing stays available via the config.
    kind = all_features ? FeatureKind::Provided
                        : (all_labels ? FeatureKind::OneHot : FeatureKind::Spectral);
    append_onehot = all_features && all_labels;
  }

  const auto label_vocab = [&ds]() {
    int vocab = 0;
    for (int i = 0; i < ds.size(); ++i) {
      if (!ds.graphs[i].node_labels)
        throw std::invalid_argument("prepare_dataset: graph " + std::to_string(i) + " of '" +
                                    ds.name + "' has no node labels");
      for (int lab : *ds.graphs[i].node_labels) vocab = std::max(vocab, lab + 1);
    }
    return vocab;
  };

  int dim = 0;
  int vocab = 0;
  switch (kind) {
    case FeatureKind::Provided:
      for (int i = 0; i < ds.size(); ++i) {
        if (!ds.graphs[i].features)
          throw std::invalid_argument("prepare_dataset: graph " + std::to_string(i) +
                                      " of '" + ds.name + "' has no features");
        if (i == 0)
          dim = ds.graphs[i].features->cols();
        else if (ds.graphs[i].features->cols() != dim)
          throw std::invalid_argument("prepare_dataset: inconsistent feature widths in '" +
                                      ds.name + "'");
      }
      if (append_onehot) {
        vocab = label_vocab();
        dim += vocab;
      }
      break;
    case FeatureKind::OneHot:
      dim = vocab = label_vocab();
      break;
    case FeatureKind::Gaussian:
    case FeatureKind::Spectral:
      if (policy.dim < 1)
        throw std::invalid_argument("prepare_dataset: feature dim must be >= 1");
      dim = policy.dim;
      break;
    case FeatureKind::Auto:
      throw std::logic_error("unreachable");
  }

  const double sigma = policy.sigma > 0 ? policy.sigma : 1.0 / std::sqrt(double(dim));
  CounterRng root = CounterRng(seed, CounterRng::fnv1a(ds.name)).split("features");

  PreparedDataset out;
  out.name = ds.name;
  out.labels = ds.labels;
  out.num_classes = ds.num_classes;
  out.feature_dim = dim;
  out.graphs.reserve(ds.graphs.size());
  for (int i = 0; i < ds.size(); ++i) {
    const Graph& g = ds.graphs[i];
    PreparedGraph pg;
    switch (kind) {
      case FeatureKind::Provided:
        if (append_onehot) {
          const Matrix hot = onehot_features(g, vocab);
          Matrix x(g.n, dim);
          for (int r = 0; r < g.n; ++r) {
            for (int c = 0; c < g.features->cols(); ++c) x(r, c) = (*g.features)(r, c);
            for (int c = 0; c < vocab; ++c) x(r, g.features->cols() + c) = hot(r, c);
          }
          pg.features = std::move(x);
        } else {
          pg.features = *g.features;
        }
        break;
      case FeatureKind::Gaussian:
        pg.features = gaussian_features(g.n, dim, sigma, root.split(uint64_t(i)).next_u64());
        break;
      case FeatureKind::Spectral: pg.features = padded_spectral(g, dim); break;
      case FeatureKind::OneHot: pg.features = onehot_features(g, dim); break;
      case FeatureKind::Auto: throw std::logic_error("unreachable");
    }
    pg.adj = g.adjacency();
    pg.fl = filter == InputFilter::NormalizedLaplacian ? normalized_laplacian(g)
                                                       : laplacian(g);
    pg.conv = conv_filter(g);
    out.graphs.push_back(std::move(pg));
  }
  return out;
}

Batch make_batch(const PreparedDataset& ds, const std::vector<int>& indices) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty index list");
  Batch b;
  b.indices = indices;
  for (int idx : indices) {
    if (idx < 0 || idx >= ds.size())
      throw std::out_of_range("make_batch: graph index " + std::to_string(idx) +
                              " outside dataset of size " + std::to_string(ds.size()));
    b.n_max = std::max(b.n_max, ds.graphs[idx].n());
  }
  const int B = b.size();
  const int d = ds.feature_dim;
  Matrix feats(B * b.n_max, d);
  b.mask.assign(size_t(B) * b.n_max, 0.0);
  for (int i = 0; i < B; ++i) {
    const PreparedGraph& pg = ds.graphs[indices[i]];
    const int off = i * b.n_max;
    b.offsets.push_back(off);
    b.sizes.push_back(pg.n());
    for (int r = 0; r < pg.n(); ++r) {
      b.mask[size_t(off) + r] = 1.0;
      for (int c = 0; c < d; ++c) feats(off + r, c) = pg.features(r, c);
    }
    b.fl_blocks.push_back(pg.fl);
    b.conv_blocks.push_back(pg.conv);
    b.adj.push_back(pg.adj);
    b.labels.push_back(ds.labels[indices[i]]);
  }
  b.features = Tensor(std::move(feats));
  return b;
}

}  // namespace uge
