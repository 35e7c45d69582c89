#include "shapnn/matrix.hpp"

#include <cmath>

#ifdef SHAPNN_USE_OPENBLAS
#include <cblas.h>
extern "C" void openblas_set_num_threads(int);
#endif

namespace shapnn {

namespace {

void check_inner(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw std::invalid_argument(std::string(what) + ": inner dimensions " +
                                std::to_string(a) + " and " +
                                std::to_string(b) + " do not match");
}

#ifdef SHAPNN_USE_OPENBLAS
struct BlasInit {
  BlasInit() { openblas_set_num_threads(1); }
};
const BlasInit blas_init;
#endif

}  // namespace

Matrix matmul(const Matrix& A, const Matrix& B) {
  check_inner(A.cols, B.rows, "matmul");
  Matrix C(A.rows, B.cols);
#ifdef SHAPNN_USE_OPENBLAS
  if (A.rows && A.cols && B.cols)
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, (int)A.rows,
                (int)B.cols, (int)A.cols, 1.0, A.a.data(), (int)A.cols,
                B.a.data(), (int)B.cols, 0.0, C.a.data(), (int)C.cols);
#else
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t k = 0; k < A.cols; ++k) {
      double aik = A(i, k);
      if (aik == 0.0) continue;
      const double* brow = B.row(k);
      double* crow = C.row(i);
      for (std::size_t j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
    }
#endif
  return C;
}

Matrix matmul_tn(const Matrix& A, const Matrix& B) {
  check_inner(A.rows, B.rows, "matmul_tn");
  Matrix C(A.cols, B.cols);
#ifdef SHAPNN_USE_OPENBLAS
  if (A.rows && A.cols && B.cols)
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, (int)A.cols,
                (int)B.cols, (int)A.rows, 1.0, A.a.data(), (int)A.cols,
                B.a.data(), (int)B.cols, 0.0, C.a.data(), (int)C.cols);
#else
  for (std::size_t k = 0; k < A.rows; ++k)
    for (std::size_t i = 0; i < A.cols; ++i) {
      double aki = A(k, i);
      if (aki == 0.0) continue;
      const double* brow = B.row(k);
      double* crow = C.row(i);
      for (std::size_t j = 0; j < B.cols; ++j) crow[j] += aki * brow[j];
    }
#endif
  return C;
}

Matrix matmul_nt(const Matrix& A, const Matrix& B) {
  check_inner(A.cols, B.cols, "matmul_nt");
  Matrix C(A.rows, B.rows);
#ifdef SHAPNN_USE_OPENBLAS
  if (A.rows && A.cols && B.rows)
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, (int)A.rows,
                (int)B.rows, (int)A.cols, 1.0, A.a.data(), (int)A.cols,
                B.a.data(), (int)B.cols, 0.0, C.a.data(), (int)C.cols);
#else
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < B.rows; ++j) {
      double s = 0.0;
      const double* arow = A.row(i);
      const double* brow = B.row(j);
      for (std::size_t k = 0; k < A.cols; ++k) s += arow[k] * brow[k];
      C(i, j) = s;
    }
#endif
  return C;
}

std::vector<double> matvec(const Matrix& M, const std::vector<double>& x) {
  check_inner(M.cols, x.size(), "matvec");
  std::vector<double> y(M.rows, 0.0);
  for (std::size_t i = 0; i < M.rows; ++i) {
    const double* r = M.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < M.cols; ++j) s += r[j] * x[j];
    y[i] = s;
  }
  return y;
}

std::vector<double> solve_linear(Matrix A, std::vector<double> b) {
  if (A.rows != A.cols || A.rows != b.size())
    throw std::invalid_argument("solve_linear: need square system, got " +
                                std::to_string(A.rows) + "x" +
                                std::to_string(A.cols) + " with rhs " +
                                std::to_string(b.size()));
  const std::size_t n = A.rows;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(A(r, col)) > std::fabs(A(pivot, col))) pivot = r;
    if (std::fabs(A(pivot, col)) < 1e-12)
      throw std::runtime_error(
          "solve_linear: singular system (pivot ~0 at column " +
          std::to_string(col) + "); provide more samples");
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(A(col, j), A(pivot, j));
      std::swap(b[col], b[pivot]);
    }
    double d = A(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      double f = A(r, col) / d;
      if (f == 0.0) continue;
      for (std::size_t j = col; j < n; ++j) A(r, j) -= f * A(col, j);
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= A(i, j) * x[j];
    x[i] = s / A(i, i);
  }
  return x;
}

}  // namespace shapnn
