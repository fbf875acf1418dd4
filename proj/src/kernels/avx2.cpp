// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "orgseg/kernels.hpp"

namespace orgseg::kernels {
namespace {

constexpr int kBlockK = 256;

inline __m256i tail_mask(int count) {
  alignas(32) static const int table[16] = {-1, -1, -1, -1, -1, -1, -1, -1, 0, 0, 0, 0, 0, 0, 0, 0};
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(table + 8 - count));
}

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 sh = _mm_movehdup_ps(lo);
  lo = _mm_add_ps(lo, sh);
  sh = _mm_movehl_ps(sh, lo);
  return _mm_cvtss_f32(_mm_add_ss(lo, sh));
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

// Rows [i, i+R) x columns [j, j+24) over k in [k0, k1).
template <int R>
inline void nn_block24(int j, int i, int k0, int k1, const float* a, int lda, const float* b, int ldb,
                       float* c, int ldc, bool load_c) {
  __m256 acc[R][3];
  for (int r = 0; r < R; ++r) {
    float* cp = c + static_cast<std::size_t>(i + r) * ldc + j;
    for (int v = 0; v < 3; ++v) acc[r][v] = load_c ? _mm256_loadu_ps(cp + 8 * v) : _mm256_setzero_ps();
  }
  for (int p = k0; p < k1; ++p) {
    const float* bp = b + static_cast<std::size_t>(p) * ldb + j;
    const __m256 b0 = _mm256_loadu_ps(bp);
    const __m256 b1 = _mm256_loadu_ps(bp + 8);
    const __m256 b2 = _mm256_loadu_ps(bp + 16);
    for (int r = 0; r < R; ++r) {
      const __m256 av = _mm256_broadcast_ss(a + static_cast<std::size_t>(i + r) * lda + p);
      acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
      acc[r][2] = _mm256_fmadd_ps(av, b2, acc[r][2]);
    }
  }
  for (int r = 0; r < R; ++r) {
    float* cp = c + static_cast<std::size_t>(i + r) * ldc + j;
    for (int v = 0; v < 3; ++v) _mm256_storeu_ps(cp + 8 * v, acc[r][v]);
  }
}

// Rows [i, i+R) x up to 8 columns starting at j (masked when width < 8).
template <int R>
inline void nn_block8(int j, int width, int i, int k0, int k1, const float* a, int lda, const float* b,
                      int ldb, float* c, int ldc, bool load_c) {
  const __m256i mask = tail_mask(width);
  __m256 acc[R];
  for (int r = 0; r < R; ++r) {
    float* cp = c + static_cast<std::size_t>(i + r) * ldc + j;
    acc[r] = load_c ? _mm256_maskload_ps(cp, mask) : _mm256_setzero_ps();
  }
  for (int p = k0; p < k1; ++p) {
    const __m256 bv = _mm256_maskload_ps(b + static_cast<std::size_t>(p) * ldb + j, mask);
    for (int r = 0; r < R; ++r) {
      const __m256 av = _mm256_broadcast_ss(a + static_cast<std::size_t>(i + r) * lda + p);
      acc[r] = _mm256_fmadd_ps(av, bv, acc[r]);
    }
  }
  for (int r = 0; r < R; ++r) {
    _mm256_maskstore_ps(c + static_cast<std::size_t>(i + r) * ldc + j, mask, acc[r]);
  }
}

template <int R>
inline void nn_rows(int i, int n, int k0, int k1, const float* a, int lda, const float* b, int ldb,
                    float* c, int ldc, bool load_c) {
  int j = 0;
  for (; j + 24 <= n; j += 24) nn_block24<R>(j, i, k0, k1, a, lda, b, ldb, c, ldc, load_c);
  for (; j < n; j += 8) nn_block8<R>(j, std::min(8, n - j), i, k0, k1, a, lda, b, ldb, c, ldc, load_c);
}

void gemm_nn(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
             bool accumulate) {
  if (k == 0) {
    if (!accumulate) {
      for (int i = 0; i < m; ++i) std::fill_n(c + static_cast<std::size_t>(i) * ldc, n, 0.0f);
    }
    return;
  }
  for (int k0 = 0; k0 < k; k0 += kBlockK) {
    const int k1 = std::min(k, k0 + kBlockK);
    const bool load_c = accumulate || k0 > 0;
    int i = 0;
    for (; i + 4 <= m; i += 4) nn_rows<4>(i, n, k0, k1, a, lda, b, ldb, c, ldc, load_c);
    for (; i < m; ++i) nn_rows<1>(i, n, k0, k1, a, lda, b, ldb, c, ldc, load_c);
  }
}

// 4x2 block of dot products over k in [k0, k1).
template <int R, int S>
inline void nt_block(int i, int j, int k0, int k1, const float* a, int lda, const float* b, int ldb,
                     float* c, int ldc, bool load_c) {
  __m256 acc[R][S];
  for (int r = 0; r < R; ++r)
    for (int s = 0; s < S; ++s) acc[r][s] = _mm256_setzero_ps();
  int p = k0;
  for (; p + 8 <= k1; p += 8) {
    __m256 bv[S];
    for (int s = 0; s < S; ++s) bv[s] = _mm256_loadu_ps(b + static_cast<std::size_t>(j + s) * ldb + p);
    for (int r = 0; r < R; ++r) {
      const __m256 av = _mm256_loadu_ps(a + static_cast<std::size_t>(i + r) * lda + p);
      for (int s = 0; s < S; ++s) acc[r][s] = _mm256_fmadd_ps(av, bv[s], acc[r][s]);
    }
  }
  if (p < k1) {
    const __m256i mask = tail_mask(k1 - p);
    __m256 bv[S];
    for (int s = 0; s < S; ++s) bv[s] = _mm256_maskload_ps(b + static_cast<std::size_t>(j + s) * ldb + p, mask);
    for (int r = 0; r < R; ++r) {
      const __m256 av = _mm256_maskload_ps(a + static_cast<std::size_t>(i + r) * lda + p, mask);
      for (int s = 0; s < S; ++s) acc[r][s] = _mm256_fmadd_ps(av, bv[s], acc[r][s]);
    }
  }
  for (int r = 0; r < R; ++r) {
    for (int s = 0; s < S; ++s) {
      float& dst = c[static_cast<std::size_t>(i + r) * ldc + j + s];
      const float v = hsum(acc[r][s]);
      dst = load_c ? dst + v : v;
    }
  }
}

template <int R>
inline void nt_rows(int i, int n, int k0, int k1, const float* a, int lda, const float* b, int ldb,
                    float* c, int ldc, bool load_c) {
  int j = 0;
  for (; j + 2 <= n; j += 2) nt_block<R, 2>(i, j, k0, k1, a, lda, b, ldb, c, ldc, load_c);
  for (; j < n; ++j) nt_block<R, 1>(i, j, k0, k1, a, lda, b, ldb, c, ldc, load_c);
}

void gemm_nt(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
             bool accumulate) {
  if (k == 0) {
    if (!accumulate) {
      for (int i = 0; i < m; ++i) std::fill_n(c + static_cast<std::size_t>(i) * ldc, n, 0.0f);
    }
    return;
  }
  constexpr int kChunk = 512;
  for (int k0 = 0; k0 < k; k0 += kChunk) {
    const int k1 = std::min(k, k0 + kChunk);
    const bool load_c = accumulate || k0 > 0;
    int i = 0;
    for (; i + 4 <= m; i += 4) nt_rows<4>(i, n, k0, k1, a, lda, b, ldb, c, ldc, load_c);
    for (; i < m; ++i) nt_rows<1>(i, n, k0, k1, a, lda, b, ldb, c, ldc, load_c);
  }
}

void adam_update(float* w, const float* g, float* m, float* v, std::size_t n, const AdamStep& s) {
  const __m256 b1 = _mm256_set1_ps(s.beta1);
  const __m256 b2 = _mm256_set1_ps(s.beta2);
  const __m256 one_b1 = _mm256_set1_ps(1.0f - s.beta1);
  const __m256 one_b2 = _mm256_set1_ps(1.0f - s.beta2);
  const __m256 step = _mm256_set1_ps(s.learning_rate / s.bias_correction1);
  const __m256 inv_bc2 = _mm256_set1_ps(1.0f / s.bias_correction2);
  const __m256 eps = _mm256_set1_ps(s.epsilon);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gv = _mm256_loadu_ps(g + i);
    __m256 mv = _mm256_loadu_ps(m + i);
    __m256 vv = _mm256_loadu_ps(v + i);
    mv = _mm256_add_ps(_mm256_mul_ps(b1, mv), _mm256_mul_ps(one_b1, gv));
    vv = _mm256_add_ps(_mm256_mul_ps(b2, vv), _mm256_mul_ps(one_b2, _mm256_mul_ps(gv, gv)));
    const __m256 den = _mm256_add_ps(_mm256_sqrt_ps(_mm256_mul_ps(vv, inv_bc2)), eps);
    const __m256 wv = _mm256_sub_ps(_mm256_loadu_ps(w + i), _mm256_div_ps(_mm256_mul_ps(step, mv), den));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    _mm256_storeu_ps(w + i, wv);
  }
  if (i < n) scalar_table().adam_update(w + i, g + i, m + i, v + i, n - i, s);
}

void scale_shift(const float* x, float* y, std::size_t n, float a, float b) {
  const __m256 av = _mm256_set1_ps(a);
  const __m256 bv = _mm256_set1_ps(b);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), bv));
  for (; i < n; ++i) y[i] = a * x[i] + b;
}

void relu_forward(const float* x, float* y, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(const float* x, const float* dy, float* dx, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 pos = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_and_ps(pos, _mm256_loadu_ps(dy + i)));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

void sum_sumsq(const float* x, std::size_t n, double* sum, double* sumsq) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  __m256d q0 = _mm256_setzero_pd(), q1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256d lo = _mm256_cvtps_pd(_mm256_castps256_ps128(v));
    const __m256d hi = _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1));
    s0 = _mm256_add_pd(s0, lo);
    s1 = _mm256_add_pd(s1, hi);
    q0 = _mm256_fmadd_pd(lo, lo, q0);
    q1 = _mm256_fmadd_pd(hi, hi, q1);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  double q = hsum(_mm256_add_pd(q0, q1));
  for (; i < n; ++i) {
    s += x[i];
    q += static_cast<double>(x[i]) * x[i];
  }
  *sum = s;
  *sumsq = q;
}

double dot(const float* a, const float* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 av = _mm256_loadu_ps(a + i);
    const __m256 bv = _mm256_loadu_ps(b + i);
    s0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(av)),
                         _mm256_cvtps_pd(_mm256_castps256_ps128(bv)), s0);
    s1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(av, 1)),
                         _mm256_cvtps_pd(_mm256_extractf128_ps(bv, 1)), s1);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

void axpy(float a, const float* x, float* y, std::size_t n) {
  const __m256 av = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

constexpr KernelTable kAvx2{
    "avx2", gemm_nn, gemm_nt, adam_update, scale_shift, relu_forward, relu_backward,
    sum_sumsq, dot, axpy,
};

}  // namespace

const KernelTable* avx2_table() noexcept { return &kAvx2; }

}  // namespace orgseg::kernels
