#include <cmath>

#include "orgseg/kernels.hpp"

namespace orgseg::kernels {
namespace {

void gemm_nn(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
             bool accumulate) {
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<std::size_t>(i) * ldc;
    if (!accumulate) {
      for (int j = 0; j < n; ++j) crow[j] = 0.0f;
    }
    for (int p = 0; p < k; ++p) {
      const float av = a[static_cast<std::size_t>(i) * lda + p];
      const float* brow = b + static_cast<std::size_t>(p) * ldb;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
             bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::size_t>(i) * lda;
    for (int j = 0; j < n; ++j) {
      const float* brow = b + static_cast<std::size_t>(j) * ldb;
      float acc = 0.0f;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      float& dst = c[static_cast<std::size_t>(i) * ldc + j];
      dst = accumulate ? dst + acc : acc;
    }
  }
}

void adam_update(float* w, const float* g, float* m, float* v, std::size_t n, const AdamStep& s) {
  const float step = s.learning_rate / s.bias_correction1;
  const float inv_bc2 = 1.0f / s.bias_correction2;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = s.beta1 * m[i] + (1.0f - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0f - s.beta2) * g[i] * g[i];
    w[i] -= step * m[i] / (std::sqrt(v[i] * inv_bc2) + s.epsilon);
  }
}

void scale_shift(const float* x, float* y, std::size_t n, float a, float b) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i] + b;
}

void relu_forward(const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(const float* x, const float* dy, float* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

void sum_sumsq(const float* x, std::size_t n, double* sum, double* sumsq) {
  double s = 0.0, q = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s += x[i];
    q += static_cast<double>(x[i]) * x[i];
  }
  *sum = s;
  *sumsq = q;
}

double dot(const float* a, const float* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

void axpy(float a, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

constexpr KernelTable kScalar{
    "scalar", gemm_nn, gemm_nt, adam_update, scale_shift, relu_forward, relu_backward,
    sum_sumsq, dot, axpy,
};

}  // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

}  // namespace orgseg::kernels
