#pragma once

#include <string>
#include <vector>

#include "uge/dataio.hpp"
#include "uge/graph.hpp"
#include "uge/spectral.hpp"
#include "uge/tensor.hpp"

namespace uge {

// How per-node input features X are obtained before the input transformer.
//   provided  - use the features carried by the graphs (error when absent)
//   gaussian  - X ~ N(0, sigma^2), sigma defaulting to 1/sqrt(dim)
//   spectral  - Laplacian eigenmap coordinates, zero-padded to dim columns
//   onehot    - one-hot of the categorical node label (width = label vocab)
//   auto_kind - provided when every graph has features (with one-hot labels
//   concatenated when those are present too), one-hot when every graph
//   carries node labels only, spectral otherwise
enum class FeatureKind { Provided, Gaussian, Spectral, OneHot, Auto };

struct FeaturePolicy {
  FeatureKind kind = FeatureKind::Auto;
  int dim = 8;         // width for gaussian / spectral
  double sigma = 0.0;  // gaussian scale; 0 means 1/sqrt(dim)
};

FeatureKind feature_kind_from_name(const std::string& name);
std::string feature_kind_name(FeatureKind k);

// Filter applied to the input features before the per-dataset MLP.
enum class InputFilter { NormalizedLaplacian, Laplacian };

InputFilter input_filter_from_name(const std::string& name);
std::string input_filter_name(InputFilter f);

// Everything encoder forward passes need per graph, precomputed once:
// features X (n x d), the input filter matrix f(L), the propagation filter
// g(L) = D^{-1/2} A D^{-1/2} + I, and the adjacency target.
struct PreparedGraph {
  Matrix features;
  Matrix fl;
  Matrix conv;
  Matrix adj;
  int n() const { return conv.rows(); }
};

struct PreparedDataset {
  std::string name;
  std::vector<PreparedGraph> graphs;
  std::vector<int> labels;
  int num_classes = 0;
  int feature_dim = 0;

  int size() const { return static_cast<int>(graphs.size()); }
};

// Resolves the feature policy against the dataset (every graph ends up with
// exactly feature_dim columns) and precomputes the per-graph matrices.
// Gaussian draws are deterministic in (seed, dataset name, graph index).
PreparedDataset prepare_dataset(const Dataset& ds, const FeaturePolicy& policy,
                                InputFilter filter, uint64_t seed);

// A batch stacks its graphs into one padded (B * n_max) x d feature block:
// graph i occupies rows [i * n_max, i * n_max + n_i), the tail rows of each
// slot are zero and masked out. Filter matrices stay true-size and are
// applied block-diagonally, so padded rows never feed any propagation.
struct Batch {
  std::vector<int> indices;  // positions within the source dataset
  int n_max = 0;
  std::vector<int> offsets;  // i * n_max
  std::vector<int> sizes;    // n_i
  Tensor features;           // (B * n_max) x d constant
  std::vector<double> mask;  // 1.0 on real rows, 0.0 on padding
  std::vector<Matrix> fl_blocks;
  std::vector<Matrix> conv_blocks;
  std::vector<Matrix> adj;  // true-size targets
  std::vector<int> labels;

  int size() const { return static_cast<int>(indices.size()); }
};

Batch make_batch(const PreparedDataset& ds, const std::vector<int>& indices);

}  // namespace uge
