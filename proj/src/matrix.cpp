#include "uge/matrix.hpp"

#include <cmath>

namespace uge {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: shape mismatch " + a.shape_str() + " * " + b.shape_str());
  Matrix c(a.rows(), b.cols());
  const int m = a.rows(), k = a.cols(), n = b.cols();
  // i-k-j ordering keeps the inner loop running over contiguous rows of b and c.
  for (int i = 0; i < m; ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (int p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b.row(p);
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("matmul_nt: shape mismatch " + a.shape_str() + " * " +
                                b.shape_str() + "^T");
  Matrix c(a.rows(), b.rows());
  const int m = a.rows(), k = a.cols(), n = b.rows();
  for (int i = 0; i < m; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (int j = 0; j < n; ++j) {
      const double* bj = b.row(j);
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] = s;
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw std::invalid_argument("matmul_tn: shape mismatch " + a.shape_str() + "^T * " +
                                b.shape_str());
  Matrix c(a.cols(), b.cols());
  const int m = a.cols(), k = a.rows(), n = b.cols();
  for (int p = 0; p < k; ++p) {
    const double* ap = a.row(p);
    const double* bp = b.row(p);
    for (int i = 0; i < m; ++i) {
      const double api = ap[i];
      if (api == 0.0) continue;
      double* ci = c.row(i);
      for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Matrix c = a;
  for (size_t i = 0; i < c.size(); ++i) c.values()[i] += b.values()[i];
  return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("sub: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Matrix c = a;
  for (size_t i = 0; i < c.size(); ++i) c.values()[i] -= b.values()[i];
  return c;
}

Matrix scale(const Matrix& m, double s) {
  Matrix c = m;
  for (double& x : c.values()) x *= s;
  return c;
}

void add_in_place(Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("add_in_place: shape mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
  for (size_t i = 0; i < a.size(); ++i) a.values()[i] += b.values()[i];
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double x : m.values()) s += x * x;
  return std::sqrt(s);
}

double max_abs(const Matrix& m) {
  double s = 0.0;
  for (double x : m.values()) s = std::max(s, std::fabs(x));
  return s;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("max_abs_diff: shape mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    s = std::max(s, std::fabs(a.values()[i] - b.values()[i]));
  return s;
}

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  for (int i = 0; i < m.rows(); ++i)
    for (int j = i + 1; j < m.cols(); ++j)
      if (std::fabs(m(i, j) - m(j, i)) > tol) return false;
  return true;
}

}  // namespace uge
