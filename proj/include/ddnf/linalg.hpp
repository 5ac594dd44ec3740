#pragma once

// Small dense kernels, generic over the scalar so the same code runs on
// doubles, tape Vars and dual numbers.

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "ddnf/autodiff.hpp"
#include "ddnf/error.hpp"

namespace ddnf {

using Vector = std::vector<double>;

/// Row-major dense matrix.
template <class T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T(0.0)) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1.0);
    return m;
  }
};

using Mat = Matrix<double>;

template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols != b.rows) throw ConfigError("matmul: inner dimensions differ");
  Matrix<T> c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const T aik = a(i, k);
      for (std::size_t j = 0; j < b.cols; ++j) c(i, j) = c(i, j) + aik * b(k, j);
    }
  }
  return c;
}

template <class T, class S>
std::vector<S> matvec(const Matrix<T>& a, std::span<const S> x) {
  if (a.cols != x.size()) throw ConfigError("matvec: dimension mismatch");
  std::vector<S> y(a.rows, S(0.0));
  for (std::size_t i = 0; i < a.rows; ++i) {
    S acc(0.0);
    for (std::size_t j = 0; j < a.cols; ++j) acc = acc + x[j] * a(i, j);
    y[i] = acc;
  }
  return y;
}

template <class T>
T trace(const Matrix<T>& a) {
  T t(0.0);
  for (std::size_t i = 0; i < a.rows; ++i) t = t + a(i, i);
  return t;
}

/// Tr(A A).
template <class T>
T trace_of_square(const Matrix<T>& a) {
  T t(0.0);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k) t = t + a(i, k) * a(k, i);
  return t;
}

/// Tr(A^T A), the squared Frobenius norm.
template <class T>
T trace_of_gram(const Matrix<T>& a) {
  T t(0.0);
  for (const T& x : a.data) t = t + x * x;
  return t;
}

template <class T>
struct LogAbsDet {
  T log_abs;
  int sign;
};

/// log|det A| by LU with partial pivoting. Pivot selection uses the values
/// only, so the result is differentiable wherever A is nonsingular.
template <class T>
LogAbsDet<T> lu_log_abs_det(Matrix<T> a) {
  using ad::value_of;
  using std::log;
  if (a.rows != a.cols) throw ConfigError("log-determinant of a non-square matrix");
  const std::size_t n = a.rows;
  int sign = 1;
  T acc(0.0);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = k;
    double best = std::abs(value_of(a(k, k)));
    for (std::size_t r = k + 1; r < n; ++r) {
      const double cand = std::abs(value_of(a(r, k)));
      if (cand > best) {
        best = cand;
        pivot = r;
      }
    }
    if (best == 0.0) throw NumericalError("singular matrix in LU decomposition");
    if (pivot != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(k, c), a(pivot, c));
      sign = -sign;
    }
    const T& p = a(k, k);
    if (value_of(p) < 0.0) {
      sign = -sign;
      acc = acc + log(-p);
    } else {
      acc = acc + log(p);
    }
    for (std::size_t r = k + 1; r < n; ++r) {
      const T f = a(r, k) / p;
      for (std::size_t c = k + 1; c < n; ++c) a(r, c) = a(r, c) - f * a(k, c);
    }
  }
  return {acc, sign};
}

}  // namespace ddnf
