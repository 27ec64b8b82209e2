#pragma once

// Dense row-major double matrices, sized for desk-scale encoder math.

#include <cstddef>
#include <string>
#include <vector>

#include "lahja/error.hpp"

namespace lahja::la {

struct Mat {
  size_t rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(size_t r, size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& operator()(size_t r, size_t c) { return a[r * cols + c]; }
  double operator()(size_t r, size_t c) const { return a[r * cols + c]; }
  size_t size() const { return a.size(); }

  friend bool operator==(const Mat& x, const Mat& y) {
    return x.rows == y.rows && x.cols == y.cols && x.a == y.a;
  }
};

namespace detail {
inline void require(bool ok, const char* what) {
  if (!ok) throw ValidationError(std::string("matrix: ") + what);
}
}  // namespace detail

// C = A * B
inline Mat matmul(const Mat& A, const Mat& B) {
  detail::require(A.cols == B.rows, "shape mismatch in A*B");
  Mat C(A.rows, B.cols);
  for (size_t i = 0; i < A.rows; ++i) {
    for (size_t k = 0; k < A.cols; ++k) {
      const double aik = A(i, k);
      if (aik == 0.0) continue;
      const size_t b0 = k * B.cols;
      const size_t c0 = i * C.cols;
      for (size_t j = 0; j < B.cols; ++j) C.a[c0 + j] += aik * B.a[b0 + j];
    }
  }
  return C;
}

// C = Aᵀ * B
inline Mat matmul_at_b(const Mat& A, const Mat& B) {
  detail::require(A.rows == B.rows, "shape mismatch in Aᵀ*B");
  Mat C(A.cols, B.cols);
  for (size_t k = 0; k < A.rows; ++k) {
    for (size_t i = 0; i < A.cols; ++i) {
      const double aki = A(k, i);
      if (aki == 0.0) continue;
      const size_t b0 = k * B.cols;
      const size_t c0 = i * C.cols;
      for (size_t j = 0; j < B.cols; ++j) C.a[c0 + j] += aki * B.a[b0 + j];
    }
  }
  return C;
}

// C = A * Bᵀ
inline Mat matmul_a_bt(const Mat& A, const Mat& B) {
  detail::require(A.cols == B.cols, "shape mismatch in A*Bᵀ");
  Mat C(A.rows, B.rows);
  for (size_t i = 0; i < A.rows; ++i) {
    for (size_t j = 0; j < B.rows; ++j) {
      double s = 0.0;
      const size_t a0 = i * A.cols;
      const size_t b0 = j * B.cols;
      for (size_t k = 0; k < A.cols; ++k) s += A.a[a0 + k] * B.a[b0 + k];
      C(i, j) = s;
    }
  }
  return C;
}

inline Mat transpose(const Mat& A) {
  Mat T(A.cols, A.rows);
  for (size_t i = 0; i < A.rows; ++i)
    for (size_t j = 0; j < A.cols; ++j) T(j, i) = A(i, j);
  return T;
}

inline void add_inplace(Mat& A, const Mat& B) {
  detail::require(A.rows == B.rows && A.cols == B.cols,
                  "shape mismatch in A+B");
  for (size_t i = 0; i < A.a.size(); ++i) A.a[i] += B.a[i];
}

inline Mat identity(size_t n) {
  Mat I(n, n);
  for (size_t i = 0; i < n; ++i) I(i, i) = 1.0;
  return I;
}

}  // namespace lahja::la
