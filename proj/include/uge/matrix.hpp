#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace uge {

// Dense row-major matrix of doubles. Everything numeric in the toolkit is
// built on this one container; vectors are 1xN or Nx1 matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), v_(static_cast<size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative dimension");
  }
  Matrix(int rows, int cols, std::vector<double> values)
      : rows_(rows), cols_(cols), v_(std::move(values)) {
    if (v_.size() != static_cast<size_t>(rows) * cols)
      throw std::invalid_argument("Matrix: value count does not match shape");
  }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return v_.size(); }

  double& operator()(int i, int j) { return v_[static_cast<size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return v_[static_cast<size_t>(i) * cols_ + j]; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  double* row(int i) { return v_.data() + static_cast<size_t>(i) * cols_; }
  const double* row(int i) const { return v_.data() + static_cast<size_t>(i) * cols_; }

  std::vector<double>& values() { return v_; }
  const std::vector<double>& values() const { return v_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> v_;
};

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A * B^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// C = A^T * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double s);
void add_in_place(Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& m);
double max_abs(const Matrix& m);
// max_ij |a_ij - b_ij|; shapes must match.
double max_abs_diff(const Matrix& a, const Matrix& b);
bool is_symmetric(const Matrix& m, double tol);

}  // namespace uge
