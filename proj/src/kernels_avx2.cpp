#include <immintrin.h>

#include <cmath>
#include <cstring>

#include "kids/kernels.hpp"

// AVX2 variants. Mirrors the scalar reference arithmetic exactly: gemm
// vectorizes across output columns (never across the k reduction) and no
// kernel uses FMA, so every element sees the same operations in the same
// order as the scalar backend and results are bit-identical.

namespace kids::kern {
namespace {

void gemm_f32_avx2(const float* a, const float* b, float* c, std::size_t m,
                   std::size_t k, std::size_t n) {
  std::memset(c, 0, m * n * sizeof(float));
  const std::size_t n8 = n & ~std::size_t(7);
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const float aik = a[i * k + kk];
      const float* brow = b + kk * n;
      const __m256 va = _mm256_set1_ps(aik);
      std::size_t j = 0;
      for (; j < n8; j += 8) {
        __m256 vc = _mm256_loadu_ps(crow + j);
        __m256 vb = _mm256_loadu_ps(brow + j);
        vc = _mm256_add_ps(vc, _mm256_mul_ps(va, vb));
        _mm256_storeu_ps(crow + j, vc);
      }
      for (; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

void gemm_f64_avx2(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
  const std::size_t n4 = n & ~std::size_t(3);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = a[i * k + kk];
      const double* brow = b + kk * n;
      const __m256d va = _mm256_set1_pd(aik);
      std::size_t j = 0;
      for (; j < n4; j += 4) {
        __m256d vc = _mm256_loadu_pd(crow + j);
        __m256d vb = _mm256_loadu_pd(brow + j);
        vc = _mm256_add_pd(vc, _mm256_mul_pd(va, vb));
        _mm256_storeu_pd(crow + j, vc);
      }
      for (; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

#define KIDS_EW_F32(NAME, VOP, SOP)                                         \
  void NAME(const float* a, const float* b, float* c, std::size_t n) {      \
    const std::size_t n8 = n & ~std::size_t(7);                             \
    std::size_t i = 0;                                                      \
    for (; i < n8; i += 8) {                                                \
      _mm256_storeu_ps(                                                     \
          c + i, VOP(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));      \
    }                                                                       \
    for (; i < n; ++i) c[i] = SOP;                                          \
  }

#define KIDS_EW_F64(NAME, VOP, SOP)                                         \
  void NAME(const double* a, const double* b, double* c, std::size_t n) {   \
    const std::size_t n4 = n & ~std::size_t(3);                             \
    std::size_t i = 0;                                                      \
    for (; i < n4; i += 4) {                                                \
      _mm256_storeu_pd(                                                     \
          c + i, VOP(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));      \
    }                                                                       \
    for (; i < n; ++i) c[i] = SOP;                                          \
  }

KIDS_EW_F32(add_f32_avx2, _mm256_add_ps, a[i] + b[i])
KIDS_EW_F32(sub_f32_avx2, _mm256_sub_ps, a[i] - b[i])
KIDS_EW_F32(mul_f32_avx2, _mm256_mul_ps, a[i] * b[i])
KIDS_EW_F64(add_f64_avx2, _mm256_add_pd, a[i] + b[i])
KIDS_EW_F64(sub_f64_avx2, _mm256_sub_pd, a[i] - b[i])
KIDS_EW_F64(mul_f64_avx2, _mm256_mul_pd, a[i] * b[i])

#undef KIDS_EW_F32
#undef KIDS_EW_F64

void scale_f32_avx2(const float* x, float alpha, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  const std::size_t n8 = n & ~std::size_t(7);
  std::size_t i = 0;
  for (; i < n8; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) y[i] = alpha * x[i];
}

void scale_f64_avx2(const double* x, double alpha, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  const std::size_t n4 = n & ~std::size_t(3);
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] = alpha * x[i];
}

void axpy_f32_avx2(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  const std::size_t n8 = n & ~std::size_t(7);
  std::size_t i = 0;
  for (; i < n8; i += 8) {
    __m256 vy = _mm256_loadu_ps(y + i);
    vy = _mm256_add_ps(vy, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
    _mm256_storeu_ps(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_f64_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  const std::size_t n4 = n & ~std::size_t(3);
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void relu_f32_avx2(const float* x, float* y, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  const std::size_t n8 = n & ~std::size_t(7);
  std::size_t i = 0;
  for (; i < n8; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_f64_avx2(const double* x, double* y, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const std::size_t n4 = n & ~std::size_t(3);
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_f32_avx2(const float* x, const float* g, float* out,
                       std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  const std::size_t n8 = n & ~std::size_t(7);
  std::size_t i = 0;
  for (; i < n8; i += 8) {
    const __m256 mask =
        _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(out + i, _mm256_and_ps(mask, _mm256_loadu_ps(g + i)));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? g[i] : 0.0f;
}

void relu_bwd_f64_avx2(const double* x, const double* g, double* out,
                       std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const std::size_t n4 = n & ~std::size_t(3);
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    const __m256d mask =
        _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(mask, _mm256_loadu_pd(g + i)));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

void adamw_f32_avx2(float* p, float* m, float* v, const float* g,
                    std::size_t n, const AdamwStep<float>& s) {
  const __m256 vb1 = _mm256_set1_ps(s.beta1);
  const __m256 vb2 = _mm256_set1_ps(s.beta2);
  const __m256 vc1 = _mm256_set1_ps(1.0f - s.beta1);
  const __m256 vc2 = _mm256_set1_ps(1.0f - s.beta2);
  const __m256 vbc1 = _mm256_set1_ps(s.bc1);
  const __m256 vbc2 = _mm256_set1_ps(s.bc2);
  const __m256 veps = _mm256_set1_ps(s.eps);
  const __m256 vlr = _mm256_set1_ps(s.lr);
  const __m256 vwd = _mm256_set1_ps(s.lr * s.weight_decay);
  const std::size_t n8 = n & ~std::size_t(7);
  std::size_t i = 0;
  for (; i < n8; i += 8) {
    const __m256 vg = _mm256_loadu_ps(g + i);
    __m256 vm = _mm256_loadu_ps(m + i);
    __m256 vv = _mm256_loadu_ps(v + i);
    vm = _mm256_add_ps(_mm256_mul_ps(vb1, vm), _mm256_mul_ps(vc1, vg));
    vv = _mm256_add_ps(_mm256_mul_ps(vb2, vv),
                       _mm256_mul_ps(vc2, _mm256_mul_ps(vg, vg)));
    _mm256_storeu_ps(m + i, vm);
    _mm256_storeu_ps(v + i, vv);
    const __m256 mhat = _mm256_mul_ps(vm, vbc1);
    const __m256 denom =
        _mm256_add_ps(_mm256_sqrt_ps(_mm256_mul_ps(vv, vbc2)), veps);
    __m256 vp = _mm256_loadu_ps(p + i);
    vp = _mm256_sub_ps(vp, _mm256_mul_ps(vlr, _mm256_div_ps(mhat, denom)));
    vp = _mm256_sub_ps(vp, _mm256_mul_ps(vwd, _mm256_loadu_ps(p + i)));
    _mm256_storeu_ps(p + i, vp);
  }
  for (; i < n; ++i) {
    m[i] = s.beta1 * m[i] + (1.0f - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0f - s.beta2) * (g[i] * g[i]);
    const float mhat = m[i] * s.bc1;
    const float vhat = v[i] * s.bc2;
    p[i] = p[i] - s.lr * (mhat / (std::sqrt(vhat) + s.eps)) -
           s.lr * s.weight_decay * p[i];
  }
}

void adamw_f64_avx2(double* p, double* m, double* v, const double* g,
                    std::size_t n, const AdamwStep<double>& s) {
  const __m256d vb1 = _mm256_set1_pd(s.beta1);
  const __m256d vb2 = _mm256_set1_pd(s.beta2);
  const __m256d vc1 = _mm256_set1_pd(1.0 - s.beta1);
  const __m256d vc2 = _mm256_set1_pd(1.0 - s.beta2);
  const __m256d vbc1 = _mm256_set1_pd(s.bc1);
  const __m256d vbc2 = _mm256_set1_pd(s.bc2);
  const __m256d veps = _mm256_set1_pd(s.eps);
  const __m256d vlr = _mm256_set1_pd(s.lr);
  const __m256d vwd = _mm256_set1_pd(s.lr * s.weight_decay);
  const std::size_t n4 = n & ~std::size_t(3);
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    const __m256d vg = _mm256_loadu_pd(g + i);
    __m256d vm = _mm256_loadu_pd(m + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    vm = _mm256_add_pd(_mm256_mul_pd(vb1, vm), _mm256_mul_pd(vc1, vg));
    vv = _mm256_add_pd(_mm256_mul_pd(vb2, vv),
                       _mm256_mul_pd(vc2, _mm256_mul_pd(vg, vg)));
    _mm256_storeu_pd(m + i, vm);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_mul_pd(vm, vbc1);
    const __m256d denom =
        _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vv, vbc2)), veps);
    __m256d vp = _mm256_loadu_pd(p + i);
    vp = _mm256_sub_pd(vp, _mm256_mul_pd(vlr, _mm256_div_pd(mhat, denom)));
    vp = _mm256_sub_pd(vp, _mm256_mul_pd(vwd, _mm256_loadu_pd(p + i)));
    _mm256_storeu_pd(p + i, vp);
  }
  for (; i < n; ++i) {
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * (g[i] * g[i]);
    const double mhat = m[i] * s.bc1;
    const double vhat = v[i] * s.bc2;
    p[i] = p[i] - s.lr * (mhat / (std::sqrt(vhat) + s.eps)) -
           s.lr * s.weight_decay * p[i];
  }
}

}  // namespace

bool cpu_has_avx2() { return __builtin_cpu_supports("avx2") != 0; }

const KernelTable* avx2_table() {
  if (!cpu_has_avx2()) return nullptr;
  static const KernelTable table = {
      "avx2",
      gemm_f32_avx2,
      add_f32_avx2,
      sub_f32_avx2,
      mul_f32_avx2,
      scale_f32_avx2,
      axpy_f32_avx2,
      relu_f32_avx2,
      relu_bwd_f32_avx2,
      adamw_f32_avx2,
      gemm_f64_avx2,
      add_f64_avx2,
      sub_f64_avx2,
      mul_f64_avx2,
      scale_f64_avx2,
      axpy_f64_avx2,
      relu_f64_avx2,
      relu_bwd_f64_avx2,
      adamw_f64_avx2,
  };
  return &table;
}

}  // namespace kids::kern
