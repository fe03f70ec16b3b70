#pragma once

// Data-parallel inner loops used by the network and the optimizer.
//
// Every kernel has a portable scalar reference implementation and, where the
// build and the host CPU allow it, a vectorized variant. The variant is
// picked once at startup (overridable with INTERFLOW_ISA=scalar|avx2) and the
// test suite checks each variant against the scalar reference.

#include <cstddef>
#include <string_view>
#include <vector>

namespace interflow::kernels {

enum class Isa { Scalar, Avx2 };

struct AdamStep {
  float lr;           // already divided by the first-moment bias correction
  float beta1;
  float beta2;
  float inv_sqrt_bc2; // 1 / sqrt(1 - beta2^t)
  float eps;
};

struct KernelTable {
  Isa isa;

  // C[m x n] (+)= A[m x k] * B[k x n], all row-major with leading dimensions.
  void (*gemm)(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
               int ldc, bool accumulate);

  void (*leaky_relu_forward)(std::size_t n, const float* x, float* y, float slope);
  // Uses the forward output y; sign(y) == sign(x) for a positive slope.
  void (*leaky_relu_backward)(std::size_t n, const float* y, const float* dy, float* dx,
                              float slope);

  // Accumulates into *sum and *sumsq (double precision).
  void (*sum_sumsq)(std::size_t n, const float* x, double* sum, double* sumsq);
  // Accumulates sum(a) and sum(a * b).
  void (*sum_dot)(std::size_t n, const float* a, const float* b, double* sum_a, double* sum_ab);
  // y = x * scale + shift (y may alias x).
  void (*scale_shift)(std::size_t n, const float* x, float scale, float shift, float* y);

  void (*adam_update)(std::size_t n, float* param, const float* grad, float* m, float* v,
                      const AdamStep& step);
};

const KernelTable& active();
const KernelTable& table(Isa isa);  // throws StateError when unavailable
bool available(Isa isa);
std::vector<Isa> available_isas();
void select(Isa isa);
std::string_view name(Isa isa);

// Scoped override for tests.
class IsaGuard {
 public:
  explicit IsaGuard(Isa isa) : previous_(active().isa) { select(isa); }
  ~IsaGuard() { select(previous_); }
  IsaGuard(const IsaGuard&) = delete;
  IsaGuard& operator=(const IsaGuard&) = delete;

 private:
  Isa previous_;
};

}  // namespace interflow::kernels
