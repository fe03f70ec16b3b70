#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "tables.hpp"

namespace interflow::kernels::avx2 {
namespace {

// Register block: 6 rows of C by two 8-float vectors.
constexpr int kMr = 6;
constexpr int kNr = 16;
// Cache block over K and N; a 256 x 512 float panel of B stays in L2.
constexpr int kKc = 256;
constexpr int kNc = 512;

alignas(32) constexpr std::int32_t kMaskTable[16] = {-1, -1, -1, -1, -1, -1, -1, -1,
                                                     0,  0,  0,  0,  0,  0,  0,  0};

inline __m256i tail_mask(int count) {
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(kMaskTable + 8 - count));
}

template <int MR>
void micro_full(int kc, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
                bool overwrite) {
  __m256 acc0[MR];
  __m256 acc1[MR];
#pragma GCC unroll 6
  for (int r = 0; r < MR; ++r) {
    acc0[r] = _mm256_setzero_ps();
    acc1[r] = _mm256_setzero_ps();
  }
  for (int p = 0; p < kc; ++p) {
    const float* bp = b + static_cast<std::ptrdiff_t>(p) * ldb;
    const __m256 b0 = _mm256_loadu_ps(bp);
    const __m256 b1 = _mm256_loadu_ps(bp + 8);
#pragma GCC unroll 6
    for (int r = 0; r < MR; ++r) {
      const __m256 ar = _mm256_broadcast_ss(a + static_cast<std::ptrdiff_t>(r) * lda + p);
      acc0[r] = _mm256_fmadd_ps(ar, b0, acc0[r]);
      acc1[r] = _mm256_fmadd_ps(ar, b1, acc1[r]);
    }
  }
#pragma GCC unroll 6
  for (int r = 0; r < MR; ++r) {
    float* cr = c + static_cast<std::ptrdiff_t>(r) * ldc;
    if (overwrite) {
      _mm256_storeu_ps(cr, acc0[r]);
      _mm256_storeu_ps(cr + 8, acc1[r]);
    } else {
      _mm256_storeu_ps(cr, _mm256_add_ps(_mm256_loadu_ps(cr), acc0[r]));
      _mm256_storeu_ps(cr + 8, _mm256_add_ps(_mm256_loadu_ps(cr + 8), acc1[r]));
    }
  }
}

template <int MR>
void micro_tail(int nr, int kc, const float* a, int lda, const float* b, int ldb, float* c,
                int ldc, bool overwrite) {
  const __m256i m0 = tail_mask(std::min(nr, 8));
  const __m256i m1 = tail_mask(std::max(nr - 8, 0));
  __m256 acc0[MR];
  __m256 acc1[MR];
#pragma GCC unroll 6
  for (int r = 0; r < MR; ++r) {
    acc0[r] = _mm256_setzero_ps();
    acc1[r] = _mm256_setzero_ps();
  }
  for (int p = 0; p < kc; ++p) {
    const float* bp = b + static_cast<std::ptrdiff_t>(p) * ldb;
    const __m256 b0 = _mm256_maskload_ps(bp, m0);
    const __m256 b1 = _mm256_maskload_ps(bp + 8, m1);
#pragma GCC unroll 6
    for (int r = 0; r < MR; ++r) {
      const __m256 ar = _mm256_broadcast_ss(a + static_cast<std::ptrdiff_t>(r) * lda + p);
      acc0[r] = _mm256_fmadd_ps(ar, b0, acc0[r]);
      acc1[r] = _mm256_fmadd_ps(ar, b1, acc1[r]);
    }
  }
#pragma GCC unroll 6
  for (int r = 0; r < MR; ++r) {
    float* cr = c + static_cast<std::ptrdiff_t>(r) * ldc;
    if (!overwrite) {
      acc0[r] = _mm256_add_ps(_mm256_maskload_ps(cr, m0), acc0[r]);
      acc1[r] = _mm256_add_ps(_mm256_maskload_ps(cr + 8, m1), acc1[r]);
    }
    _mm256_maskstore_ps(cr, m0, acc0[r]);
    _mm256_maskstore_ps(cr + 8, m1, acc1[r]);
  }
}

template <int MR>
void micro(int nr, int kc, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
           bool overwrite) {
  if (nr == kNr) {
    micro_full<MR>(kc, a, lda, b, ldb, c, ldc, overwrite);
  } else {
    micro_tail<MR>(nr, kc, a, lda, b, ldb, c, ldc, overwrite);
  }
}

void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
          int ldc, bool accumulate) {
  if (k == 0) {
    if (!accumulate) {
      for (int i = 0; i < m; ++i) std::fill_n(c + static_cast<std::ptrdiff_t>(i) * ldc, n, 0.0f);
    }
    return;
  }
  for (int j0 = 0; j0 < n; j0 += kNc) {
    const int nc = std::min(kNc, n - j0);
    for (int p0 = 0; p0 < k; p0 += kKc) {
      const int kc = std::min(kKc, k - p0);
      const bool overwrite = !accumulate && p0 == 0;
      for (int i = 0; i < m; i += kMr) {
        const int mr = std::min(kMr, m - i);
        const float* ai = a + static_cast<std::ptrdiff_t>(i) * lda + p0;
        for (int j = j0; j < j0 + nc; j += kNr) {
          const int nr = std::min(kNr, j0 + nc - j);
          const float* bj = b + static_cast<std::ptrdiff_t>(p0) * ldb + j;
          float* cij = c + static_cast<std::ptrdiff_t>(i) * ldc + j;
          switch (mr) {
            case 6: micro<6>(nr, kc, ai, lda, bj, ldb, cij, ldc, overwrite); break;
            case 5: micro<5>(nr, kc, ai, lda, bj, ldb, cij, ldc, overwrite); break;
            case 4: micro<4>(nr, kc, ai, lda, bj, ldb, cij, ldc, overwrite); break;
            case 3: micro<3>(nr, kc, ai, lda, bj, ldb, cij, ldc, overwrite); break;
            case 2: micro<2>(nr, kc, ai, lda, bj, ldb, cij, ldc, overwrite); break;
            default: micro<1>(nr, kc, ai, lda, bj, ldb, cij, ldc, overwrite); break;
          }
        }
      }
    }
  }
}

void leaky_relu_forward(std::size_t n, const float* x, float* y, float slope) {
  const __m256 vs = _mm256_set1_ps(slope);
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256 pos = _mm256_cmp_ps(v, zero, _CMP_GT_OQ);
    _mm256_storeu_ps(y + i, _mm256_blendv_ps(_mm256_mul_ps(v, vs), v, pos));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : x[i] * slope;
}

void leaky_relu_backward(std::size_t n, const float* y, const float* dy, float* dx, float slope) {
  const __m256 vs = _mm256_set1_ps(slope);
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 pos = _mm256_cmp_ps(_mm256_loadu_ps(y + i), zero, _CMP_GT_OQ);
    const __m256 g = _mm256_loadu_ps(dy + i);
    _mm256_storeu_ps(dx + i, _mm256_blendv_ps(_mm256_mul_ps(g, vs), g, pos));
  }
  for (; i < n; ++i) dx[i] = y[i] > 0.0f ? dy[i] : dy[i] * slope;
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

void sum_sumsq(std::size_t n, const float* x, double* sum, double* sumsq) {
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
    const double v = x[i];
    s += v;
    q += v * v;
  }
  *sum += s;
  *sumsq += q;
}

void sum_dot(std::size_t n, const float* a, const float* b, double* sum_a, double* sum_ab) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  __m256d d0 = _mm256_setzero_pd(), d1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 va = _mm256_loadu_ps(a + i);
    const __m256 vb = _mm256_loadu_ps(b + i);
    const __m256d alo = _mm256_cvtps_pd(_mm256_castps256_ps128(va));
    const __m256d ahi = _mm256_cvtps_pd(_mm256_extractf128_ps(va, 1));
    const __m256d blo = _mm256_cvtps_pd(_mm256_castps256_ps128(vb));
    const __m256d bhi = _mm256_cvtps_pd(_mm256_extractf128_ps(vb, 1));
    s0 = _mm256_add_pd(s0, alo);
    s1 = _mm256_add_pd(s1, ahi);
    d0 = _mm256_fmadd_pd(alo, blo, d0);
    d1 = _mm256_fmadd_pd(ahi, bhi, d1);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  double d = hsum(_mm256_add_pd(d0, d1));
  for (; i < n; ++i) {
    s += a[i];
    d += static_cast<double>(a[i]) * b[i];
  }
  *sum_a += s;
  *sum_ab += d;
}

void scale_shift(std::size_t n, const float* x, float scale, float shift, float* y) {
  const __m256 vs = _mm256_set1_ps(scale);
  const __m256 vt = _mm256_set1_ps(shift);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_mul_ps(_mm256_loadu_ps(x + i), vs), vt));
  }
  for (; i < n; ++i) y[i] = x[i] * scale + shift;
}

// Same operation order as the scalar reference, no contraction: results are
// bit-identical.
void adam_update(std::size_t n, float* param, const float* grad, float* m, float* v,
                 const AdamStep& s) {
  const __m256 b1 = _mm256_set1_ps(s.beta1);
  const __m256 b2 = _mm256_set1_ps(s.beta2);
  const __m256 omb1 = _mm256_set1_ps(1.0f - s.beta1);
  const __m256 omb2 = _mm256_set1_ps(1.0f - s.beta2);
  const __m256 ibc2 = _mm256_set1_ps(s.inv_sqrt_bc2);
  const __m256 eps = _mm256_set1_ps(s.eps);
  const __m256 lr = _mm256_set1_ps(s.lr);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(grad + i);
    const __m256 mi =
        _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(m + i)), _mm256_mul_ps(omb1, g));
    const __m256 vi = _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(v + i)),
                                    _mm256_mul_ps(omb2, _mm256_mul_ps(g, g)));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 denom = _mm256_add_ps(_mm256_mul_ps(_mm256_sqrt_ps(vi), ibc2), eps);
    const __m256 p = _mm256_loadu_ps(param + i);
    _mm256_storeu_ps(param + i, _mm256_sub_ps(p, _mm256_mul_ps(lr, _mm256_div_ps(mi, denom))));
  }
  const float one_minus_b1 = 1.0f - s.beta1;
  const float one_minus_b2 = 1.0f - s.beta2;
  for (; i < n; ++i) {
    const float g = grad[i];
    m[i] = s.beta1 * m[i] + one_minus_b1 * g;
    v[i] = s.beta2 * v[i] + one_minus_b2 * (g * g);
    const float denom = std::sqrt(v[i]) * s.inv_sqrt_bc2 + s.eps;
    param[i] -= s.lr * (m[i] / denom);
  }
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{Isa::Avx2,          gemm,      leaky_relu_forward,
                             leaky_relu_backward, sum_sumsq, sum_dot,
                             scale_shift,         adam_update};
  return t;
}

}  // namespace interflow::kernels::avx2
