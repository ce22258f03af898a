#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "kids/kernels.hpp"
#include "kids/matrix.hpp"

namespace kids {

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols != b.rows) {
    throw std::invalid_argument("matmul: dimension mismatch " + a.shape_str() +
                                " * " + b.shape_str());
  }
  Matrix<T> c(a.rows, b.cols);
  kern::Ops<T>::gemm(a.data.data(), b.data.data(), c.data.data(), a.rows,
                     a.cols, b.cols);
  return c;
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& m) {
  Matrix<T> t(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) {
      t.data[j * m.rows + i] = m.data[i * m.cols + j];
    }
  }
  return t;
}

/// Row-wise softmax of z / temperature, stabilized by row-max subtraction.
template <typename T>
Matrix<T> softmax(const Matrix<T>& z, double temperature = 1.0) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("softmax: temperature must be > 0, got " +
                                std::to_string(temperature));
  }
  Matrix<T> p(z.rows, z.cols);
  const T inv_t = static_cast<T>(1.0 / temperature);
  for (std::size_t i = 0; i < z.rows; ++i) {
    const T* zi = z.row(i);
    T* pi = p.row(i);
    T zmax = zi[0];
    for (std::size_t j = 1; j < z.cols; ++j) zmax = zi[j] > zmax ? zi[j] : zmax;
    T sum = T(0);
    for (std::size_t j = 0; j < z.cols; ++j) {
      pi[j] = std::exp((zi[j] - zmax) * inv_t);
      sum += pi[j];
    }
    for (std::size_t j = 0; j < z.cols; ++j) pi[j] /= sum;
  }
  return p;
}

/// Dense Kronecker product, (a1*b1) x (a2*b2). Test oracle for the
/// factorized layer; never used on the inference path.
template <typename T>
Matrix<T> kron_dense(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> k(a.rows * b.rows, a.cols * b.cols);
  for (std::size_t i1 = 0; i1 < a.rows; ++i1) {
    for (std::size_t j1 = 0; j1 < a.cols; ++j1) {
      const T aij = a(i1, j1);
      for (std::size_t i2 = 0; i2 < b.rows; ++i2) {
        for (std::size_t j2 = 0; j2 < b.cols; ++j2) {
          k(i1 * b.rows + i2, j1 * b.cols + j2) = aij * b(i2, j2);
        }
      }
    }
  }
  return k;
}

/// Central-difference check of an analytic gradient. Returns the max over
/// elements of |g_fd - g_an| / max(1e-8, |g_fd| + |g_an|).
double grad_check(const std::function<double(const Mat64&)>& f,
                  const Mat64& point, const Mat64& analytic_grad, double eps);

/// Solves a x = b by Gaussian elimination with partial pivoting. Returns
/// false when a pivot underflows (caller decides on a ridge fallback).
bool solve_linear(Mat64 a, std::vector<double> b, std::vector<double>& x);

}  // namespace kids
