#include <cmath>

#include "tables.hpp"

namespace interflow::kernels::scalar {
namespace {

void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
          int ldc, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    if (!accumulate) {
      for (int j = 0; j < n; ++j) crow[j] = 0.0f;
    }
    const float* arow = a + static_cast<std::ptrdiff_t>(i) * lda;
    for (int p = 0; p < k; ++p) {
      const float aip = arow[p];
      const float* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void leaky_relu_forward(std::size_t n, const float* x, float* y, float slope) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : x[i] * slope;
}

void leaky_relu_backward(std::size_t n, const float* y, const float* dy, float* dx, float slope) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = y[i] > 0.0f ? dy[i] : dy[i] * slope;
}

void sum_sumsq(std::size_t n, const float* x, double* sum, double* sumsq) {
  double s = 0.0, q = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    s += v;
    q += v * v;
  }
  *sum += s;
  *sumsq += q;
}

void sum_dot(std::size_t n, const float* a, const float* b, double* sum_a, double* sum_ab) {
  double s = 0.0, d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s += a[i];
    d += static_cast<double>(a[i]) * b[i];
  }
  *sum_a += s;
  *sum_ab += d;
}

void scale_shift(std::size_t n, const float* x, float scale, float shift, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * scale + shift;
}

void adam_update(std::size_t n, float* param, const float* grad, float* m, float* v,
                 const AdamStep& s) {
  const float one_minus_b1 = 1.0f - s.beta1;
  const float one_minus_b2 = 1.0f - s.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const float g = grad[i];
    m[i] = s.beta1 * m[i] + one_minus_b1 * g;
    v[i] = s.beta2 * v[i] + one_minus_b2 * (g * g);
    const float denom = std::sqrt(v[i]) * s.inv_sqrt_bc2 + s.eps;
    param[i] -= s.lr * (m[i] / denom);
  }
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{Isa::Scalar,        gemm,      leaky_relu_forward,
                             leaky_relu_backward, sum_sumsq, sum_dot,
                             scale_shift,         adam_update};
  return t;
}

}  // namespace interflow::kernels::scalar
