#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace kids::kern {

// Hyperparameters for one fused AdamW step. bc1/bc2 are the bias-correction
// reciprocals 1/(1-beta1^t) and 1/(1-beta2^t), precomputed by the optimizer.
template <typename T>
struct AdamwStep {
  T lr;
  T beta1;
  T beta2;
  T eps;
  T weight_decay;
  T bc1;
  T bc2;
};

// One backend's kernel set. All gemm kernels compute c = a * b for row-major
// a (m x k), b (k x n), c (m x n), overwriting c. Accumulation over k is
// strictly sequential per output element in every backend, so scalar and SIMD
// variants produce bit-identical results and runs are reproducible no matter
// which backend gets selected.
struct KernelTable {
  const char* name;

  void (*gemm_f32)(const float* a, const float* b, float* c, std::size_t m,
                   std::size_t k, std::size_t n);
  void (*add_f32)(const float* a, const float* b, float* c, std::size_t n);
  void (*sub_f32)(const float* a, const float* b, float* c, std::size_t n);
  void (*mul_f32)(const float* a, const float* b, float* c, std::size_t n);
  void (*scale_f32)(const float* x, float alpha, float* y, std::size_t n);
  void (*axpy_f32)(float alpha, const float* x, float* y, std::size_t n);
  void (*relu_f32)(const float* x, float* y, std::size_t n);
  void (*relu_bwd_f32)(const float* x, const float* g, float* out,
                       std::size_t n);
  void (*adamw_f32)(float* p, float* m, float* v, const float* g,
                    std::size_t n, const AdamwStep<float>& s);

  void (*gemm_f64)(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n);
  void (*add_f64)(const double* a, const double* b, double* c, std::size_t n);
  void (*sub_f64)(const double* a, const double* b, double* c, std::size_t n);
  void (*mul_f64)(const double* a, const double* b, double* c, std::size_t n);
  void (*scale_f64)(const double* x, double alpha, double* y, std::size_t n);
  void (*axpy_f64)(double alpha, const double* x, double* y, std::size_t n);
  void (*relu_f64)(const double* x, double* y, std::size_t n);
  void (*relu_bwd_f64)(const double* x, const double* g, double* out,
                       std::size_t n);
  void (*adamw_f64)(double* p, double* m, double* v, const double* g,
                    std::size_t n, const AdamwStep<double>& s);
};

enum class Backend { kScalar, kAvx2 };

const KernelTable& scalar_table();

// nullptr when the build lacks AVX2 kernels or the CPU does not report AVX2.
const KernelTable* avx2_table();

bool cpu_has_avx2();

// Active table. Resolution order: explicit set_backend() call, then the
// KIDS_KERNEL environment variable ("scalar" | "avx2" | "auto"), then CPUID.
const KernelTable& active();
void set_backend(Backend b);
std::string active_name();

// Typed shim so templated callers pick the right entry of the active table.
template <typename T>
struct Ops;

template <>
struct Ops<float> {
  static void gemm(const float* a, const float* b, float* c, std::size_t m,
                   std::size_t k, std::size_t n) {
    active().gemm_f32(a, b, c, m, k, n);
  }
  static void add(const float* a, const float* b, float* c, std::size_t n) {
    active().add_f32(a, b, c, n);
  }
  static void sub(const float* a, const float* b, float* c, std::size_t n) {
    active().sub_f32(a, b, c, n);
  }
  static void mul(const float* a, const float* b, float* c, std::size_t n) {
    active().mul_f32(a, b, c, n);
  }
  static void scale(const float* x, float alpha, float* y, std::size_t n) {
    active().scale_f32(x, alpha, y, n);
  }
  static void axpy(float alpha, const float* x, float* y, std::size_t n) {
    active().axpy_f32(alpha, x, y, n);
  }
  static void relu(const float* x, float* y, std::size_t n) {
    active().relu_f32(x, y, n);
  }
  static void relu_bwd(const float* x, const float* g, float* out,
                       std::size_t n) {
    active().relu_bwd_f32(x, g, out, n);
  }
  static void adamw(float* p, float* m, float* v, const float* g,
                    std::size_t n, const AdamwStep<float>& s) {
    active().adamw_f32(p, m, v, g, n, s);
  }
};

template <>
struct Ops<double> {
  static void gemm(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n) {
    active().gemm_f64(a, b, c, m, k, n);
  }
  static void add(const double* a, const double* b, double* c, std::size_t n) {
    active().add_f64(a, b, c, n);
  }
  static void sub(const double* a, const double* b, double* c, std::size_t n) {
    active().sub_f64(a, b, c, n);
  }
  static void mul(const double* a, const double* b, double* c, std::size_t n) {
    active().mul_f64(a, b, c, n);
  }
  static void scale(const double* x, double alpha, double* y, std::size_t n) {
    active().scale_f64(x, alpha, y, n);
  }
  static void axpy(double alpha, const double* x, double* y, std::size_t n) {
    active().axpy_f64(alpha, x, y, n);
  }
  static void relu(const double* x, double* y, std::size_t n) {
    active().relu_f64(x, y, n);
  }
  static void relu_bwd(const double* x, const double* g, double* out,
                       std::size_t n) {
    active().relu_bwd_f64(x, g, out, n);
  }
  static void adamw(double* p, double* m, double* v, const double* g,
                    std::size_t n, const AdamwStep<double>& s) {
    active().adamw_f64(p, m, v, g, n, s);
  }
};

}  // namespace kids::kern
