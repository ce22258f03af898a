#include <algorithm>
#include <cmath>
#include <cstring>

#include "kids/kernels.hpp"

// Reference kernels. The ikj loop order below is the contract every SIMD
// backend must reproduce exactly: each c[i][j] accumulates its k terms in
// ascending k order, one multiply and one add per term.

namespace kids::kern {
namespace {

template <typename T>
void gemm_ref(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
              std::size_t n) {
  std::memset(c, 0, m * n * sizeof(T));
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T aik = a[i * k + kk];
      const T* brow = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += aik * brow[j];
      }
    }
  }
}

template <typename T>
void add_ref(const T* a, const T* b, T* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

template <typename T>
void sub_ref(const T* a, const T* b, T* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
}

template <typename T>
void mul_ref(const T* a, const T* b, T* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}

template <typename T>
void scale_ref(const T* x, T alpha, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

template <typename T>
void axpy_ref(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void relu_ref(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_bwd_ref(const T* x, const T* g, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? g[i] : T(0);
}

template <typename T>
void adamw_ref(T* p, T* m, T* v, const T* g, std::size_t n,
               const AdamwStep<T>& s) {
  const T one = T(1);
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = s.beta1 * m[i] + (one - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (one - s.beta2) * (g[i] * g[i]);
    const T mhat = m[i] * s.bc1;
    const T vhat = v[i] * s.bc2;
    p[i] = p[i] - s.lr * (mhat / (std::sqrt(vhat) + s.eps)) -
           s.lr * s.weight_decay * p[i];
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table = {
      "scalar",
      gemm_ref<float>,
      add_ref<float>,
      sub_ref<float>,
      mul_ref<float>,
      scale_ref<float>,
      axpy_ref<float>,
      relu_ref<float>,
      relu_bwd_ref<float>,
      adamw_ref<float>,
      gemm_ref<double>,
      add_ref<double>,
      sub_ref<double>,
      mul_ref<double>,
      scale_ref<double>,
      axpy_ref<double>,
      relu_ref<double>,
      relu_bwd_ref<double>,
      adamw_ref<double>,
  };
  return table;
}

}  // namespace kids::kern
