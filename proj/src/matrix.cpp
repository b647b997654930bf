#include "chanalloc/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace chanalloc {

Matrix matmul(const Matrix& a, const Matrix& b) {
  assert(a.cols() == b.rows());
  Matrix c(a.rows(), b.cols());
  // i-k-j order keeps the inner loop contiguous in b and c
  for (int i = 0; i < a.rows(); ++i) {
    const double* arow = a.data() + static_cast<std::size_t>(i) * a.cols();
    double* crow = c.data() + static_cast<std::size_t>(i) * c.cols();
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.data() + static_cast<std::size_t>(k) * b.cols();
      for (int j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  assert(a.rows() == b.rows());
  Matrix c(a.cols(), b.cols());
  for (int k = 0; k < a.rows(); ++k) {
    const double* arow = a.data() + static_cast<std::size_t>(k) * a.cols();
    const double* brow = b.data() + static_cast<std::size_t>(k) * b.cols();
    for (int i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = c.data() + static_cast<std::size_t>(i) * c.cols();
      for (int j = 0; j < b.cols(); ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  assert(a.cols() == b.cols());
  Matrix c(a.rows(), b.rows());
  for (int i = 0; i < a.rows(); ++i) {
    const double* arow = a.data() + static_cast<std::size_t>(i) * a.cols();
    for (int j = 0; j < b.rows(); ++j) {
      const double* brow = b.data() + static_cast<std::size_t>(j) * b.cols();
      double s = 0.0;
      for (int k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
      c(i, j) = s;
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

void axpy(double alpha, const Matrix& x, Matrix& y) {
  assert(x.same_shape(y));
  const double* xs = x.data();
  double* ys = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) ys[i] += alpha * xs[i];
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  assert(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace chanalloc
