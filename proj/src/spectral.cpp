#include "uge/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "uge/rng.hpp"

namespace uge {

Matrix laplacian(const Graph& g) {
  Matrix l(g.n, g.n);
  const auto deg = g.degrees();
  for (int i = 0; i < g.n; ++i) l(i, i) = static_cast<double>(deg[i]);
  for (const auto& [u, v] : g.edges) {
    l(u, v) -= 1.0;
    l(v, u) -= 1.0;
  }
  return l;
}

Matrix normalized_adjacency(const Graph& g) {
  const auto deg = g.degrees();
  std::vector<double> inv_sqrt(g.n, 0.0);
  for (int i = 0; i < g.n; ++i)
    if (deg[i] > 0) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(deg[i]));
  Matrix m(g.n, g.n);
  for (const auto& [u, v] : g.edges) {
    const double w = inv_sqrt[u] * inv_sqrt[v];
    m(u, v) = w;
    m(v, u) = w;
  }
  return m;
}

Matrix conv_filter(const Graph& g) {
  Matrix m = normalized_adjacency(g);
  for (int i = 0; i < g.n; ++i) m(i, i) += 1.0;
  return m;
}

Matrix normalized_laplacian(const Graph& g) {
  Matrix m = scale(normalized_adjacency(g), -1.0);
  for (int i = 0; i < g.n; ++i) m(i, i) += 1.0;
  return m;
}

namespace {
constexpr int kJacobiSweepBudget = 100;
constexpr double kJacobiOffTol = 1e-12;
constexpr double kSymmetryTol = 1e-10;

double max_offdiag(const Matrix& a) {
  double m = 0.0;
  for (int p = 0; p < a.rows(); ++p)
    for (int q = p + 1; q < a.cols(); ++q) m = std::max(m, std::fabs(a(p, q)));
  return m;
}
}  // namespace

SpectralDecomposition eigendecompose(const Matrix& m) {
  if (m.rows() != m.cols())
    throw std::invalid_argument("eigendecompose: matrix is " + m.shape_str() + ", not square");
  if (!is_symmetric(m, kSymmetryTol))
    throw std::invalid_argument("eigendecompose: matrix is not symmetric within 1e-10");

  const int n = m.rows();
  SpectralDecomposition dec;
  dec.eigenvectors = Matrix::identity(n);
  if (n == 0) return dec;

  Matrix a = m;
  Matrix& u = dec.eigenvectors;
  bool converged = max_offdiag(a) <= kJacobiOffTol;
  for (int sweep = 0; sweep < kJacobiSweepBudget && !converged; ++sweep) {
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::fabs(apq) <= kJacobiOffTol) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        // Smaller-magnitude root of t^2 + 2*theta*t - 1 = 0 keeps rotations
        // small and the iteration stable.
        double t = 1.0 / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        if (theta < 0.0) t = -t;
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (int i = 0; i < n; ++i) {
          if (i != p && i != q) {
            const double aip = a(i, p), aiq = a(i, q);
            a(i, p) = c * aip - s * aiq;
            a(p, i) = a(i, p);
            a(i, q) = s * aip + c * aiq;
            a(q, i) = a(i, q);
          }
          const double uip = u(i, p), uiq = u(i, q);
          u(i, p) = c * uip - s * uiq;
          u(i, q) = s * uip + c * uiq;
        }
      }
    }
    converged = max_offdiag(a) <= kJacobiOffTol;
  }
  if (!converged)
    throw std::runtime_error("eigendecompose: no convergence in " +
                             std::to_string(kJacobiSweepBudget) +
                             " sweeps, max off-diagonal residual " +
                             std::to_string(max_offdiag(a)));

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&a](int x, int y) { return a(x, x) < a(y, y); });
  dec.eigenvalues.resize(n);
  Matrix sorted(n, n);
  for (int j = 0; j < n; ++j) {
    dec.eigenvalues[j] = a(order[j], order[j]);
    for (int i = 0; i < n; ++i) sorted(i, j) = u(i, order[j]);
  }
  dec.eigenvectors = std::move(sorted);
  return dec;
}

Matrix apply_spectral_fn(const SpectralDecomposition& dec,
                         const std::function<double(double)>& f) {
  const int n = dec.eigenvectors.rows();
  Matrix scaled = dec.eigenvectors;  // columns u_k * f(lambda_k)
  for (int j = 0; j < n; ++j) {
    const double fj = f(dec.eigenvalues[j]);
    if (!std::isfinite(fj))
      throw std::invalid_argument("apply_spectral_fn: f(" +
                                  std::to_string(dec.eigenvalues[j]) +
                                  ") is not finite");
    for (int i = 0; i < n; ++i) scaled(i, j) *= fj;
  }
  return matmul_nt(scaled, dec.eigenvectors);
}

Matrix gaussian_features(int n, int d, double sigma, uint64_t seed) {
  if (n < 0 || d < 0) throw std::invalid_argument("gaussian_features: negative shape");
  CounterRng rng(seed);
  Matrix x(n, d);
  for (double& v : x.values()) v = sigma * rng.next_gaussian();
  return x;
}

Matrix spectral_node_features(const Graph& g, int k) {
  if (k < 1 || k > g.n - 1)
    throw std::invalid_argument("spectral_node_features: k=" + std::to_string(k) +
                                " outside 1.." + std::to_string(g.n - 1));
  const auto dec = eigendecompose(laplacian(g));
  Matrix x(g.n, k);
  for (int j = 0; j < k; ++j) {
    const int col = j + 1;  // skip the constant eigenvector at index 0
    int pivot = 0;
    for (int i = 1; i < g.n; ++i)
      if (std::fabs(dec.eigenvectors(i, col)) > std::fabs(dec.eigenvectors(pivot, col)))
        pivot = i;
    const double flip = dec.eigenvectors(pivot, col) < 0.0 ? -1.0 : 1.0;
    const double s = flip * dec.eigenvalues[col];
    for (int i = 0; i < g.n; ++i) x(i, j) = s * dec.eigenvectors(i, col);
  }
  return x;
}

}  // namespace uge
