#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

// Arithmetic inner loops behind a dispatch table. Every entry has a portable
// scalar reference; SIMD tables must agree with it to float rounding.
namespace orgseg::kernels {

struct AdamStep {
  float learning_rate = 0.003f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
  float bias_correction1 = 1.0f;  // 1 - beta1^t
  float bias_correction2 = 1.0f;  // 1 - beta2^t
};

struct KernelTable {
  std::string_view name;

  /// C[MxN] (+)= A[MxK] * B[KxN], row-major with leading dimensions.
  void (*gemm_nn)(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
                  int ldc, bool accumulate);
  /// C[MxN] (+)= A[MxK] * B[NxK]^T.
  void (*gemm_nt)(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
                  int ldc, bool accumulate);
  void (*adam_update)(float* w, const float* g, float* m, float* v, std::size_t n, const AdamStep& s);
  /// y = a * x + b
  void (*scale_shift)(const float* x, float* y, std::size_t n, float a, float b);
  void (*relu_forward)(const float* x, float* y, std::size_t n);
  /// dx = dy where x > 0, else 0
  void (*relu_backward)(const float* x, const float* dy, float* dx, std::size_t n);
  /// Sum and sum of squares, accumulated in double.
  void (*sum_sumsq)(const float* x, std::size_t n, double* sum, double* sumsq);
  /// Dot product accumulated in double.
  double (*dot)(const float* a, const float* b, std::size_t n);
  /// y += a * x
  void (*axpy)(float a, const float* x, float* y, std::size_t n);
};

const KernelTable& scalar_table() noexcept;
/// nullptr when the AVX2 variant was not compiled in.
const KernelTable* avx2_table() noexcept;

/// True when the running CPU supports AVX2 and FMA.
bool cpu_has_avx2() noexcept;

/// Tables usable on this machine, scalar first.
std::vector<const KernelTable*> available_tables();

/// The table in use. Chosen on first call: AVX2 when supported, unless the
/// ORGSEG_KERNELS environment variable says "scalar".
const KernelTable& active() noexcept;

/// Overrides the active table ("scalar" or "avx2"); returns false if unavailable.
bool select(std::string_view name) noexcept;

}  // namespace orgseg::kernels
