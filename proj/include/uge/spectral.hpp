#pragma once

#include <functional>
#include <vector>

#include "uge/graph.hpp"
#include "uge/matrix.hpp"

namespace uge {

// Eigendecomposition of a symmetric matrix: eigenvalues ascending,
// eigenvectors as matching columns of an orthonormal matrix.
struct SpectralDecomposition {
  std::vector<double> eigenvalues;
  Matrix eigenvectors;
};

// Combinatorial Laplacian L = D - A.
Matrix laplacian(const Graph& g);

// D^{-1/2} A D^{-1/2}; isolated nodes contribute zero rows/columns (the 0/0
// normalization is defined as 0).
Matrix normalized_adjacency(const Graph& g);

// Propagation filter D^{-1/2} A D^{-1/2} + I. An isolated node's row reduces
// to the identity row, so its features pass through unchanged.
Matrix conv_filter(const Graph& g);

// I - D^{-1/2} A D^{-1/2}.
Matrix normalized_laplacian(const Graph& g);

// Cyclic Jacobi rotations, sweep budget 100, convergence when every
// off-diagonal magnitude is <= 1e-12. Input must be symmetric within 1e-10
// (std::invalid_argument otherwise); failure to converge inside the budget
// throws std::runtime_error reporting the residual. Deterministic: fixed
// sweep order, ascending eigenvalue sort with ties broken by original index.
SpectralDecomposition eigendecompose(const Matrix& m);

// U f(S) U^T for a scalar function f applied to the eigenvalues. A
// non-finite f value is an error naming the offending eigenvalue.
Matrix apply_spectral_fn(const SpectralDecomposition& dec,
                         const std::function<double(double)>& f);

// n x d matrix of i.i.d. N(0, sigma^2) entries from the counter RNG; the same
// (seed, n, d, sigma) always yields the same matrix.
Matrix gaussian_features(int n, int d, double sigma, uint64_t seed);

// Node features from the Laplacian spectrum: column j holds eigenvector j+1
// (ascending order, skipping the index-0 constant direction) scaled by its
// eigenvalue. Each eigenvector's sign is fixed so its largest-magnitude entry
// is positive, ties broken by lowest node index. Requires 1 <= k <= n-1.
Matrix spectral_node_features(const Graph& g, int k);

}  // namespace uge
