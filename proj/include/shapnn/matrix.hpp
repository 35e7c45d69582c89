#pragma once
// Row-major dense matrix with the handful of products the networks and
// solvers need. Products route through OpenBLAS when available (pinned to a
// single thread); the portable fallback gives identical results.
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace shapnn {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;  // row-major, size rows*cols

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  double* row(std::size_t i) { return a.data() + i * cols; }
  const double* row(std::size_t i) const { return a.data() + i * cols; }

  std::vector<double> row_vec(std::size_t i) const {
    return std::vector<double>(row(i), row(i) + cols);
  }

  void set_row(std::size_t i, const std::vector<double>& v) {
    if (v.size() != cols)
      throw std::invalid_argument("Matrix::set_row: expected " +
                                  std::to_string(cols) + " values, got " +
                                  std::to_string(v.size()));
    std::copy(v.begin(), v.end(), row(i));
  }
};

// C = A * B
Matrix matmul(const Matrix& A, const Matrix& B);
// C = A^T * B
Matrix matmul_tn(const Matrix& A, const Matrix& B);
// C = A * B^T
Matrix matmul_nt(const Matrix& A, const Matrix& B);

// y = M * x for a single vector.
std::vector<double> matvec(const Matrix& M, const std::vector<double>& x);

// Solve A x = b by Gaussian elimination with partial pivoting (A is n x n).
// Throws std::runtime_error on a singular system.
std::vector<double> solve_linear(Matrix A, std::vector<double> b);

}  // namespace shapnn
