#include <doctest.h>

#include <cmath>
#include <random>

#include "interflow/kernels.hpp"
#include "oracles.hpp"

using namespace interflow;
using kernels::Isa;

namespace {

void naive_gemm(int m, int n, int k, const float* a, const float* b, float* c, bool acc) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = acc ? c[i * n + j] : 0.0;
      for (int p = 0; p < k; ++p) s += double(a[i * k + p]) * b[p * n + j];
      c[i * n + j] = static_cast<float>(s);
    }
}

}  // namespace

TEST_CASE("scalar gemm matches the triple loop") {
  std::mt19937_64 rng(1);
  const auto& t = kernels::table(Isa::Scalar);
  for (auto [m, n, k] : {std::tuple{1, 1, 1}, {3, 5, 7}, {17, 33, 9}, {64, 48, 36}}) {
    auto a = oracle::random_vector(m * k, rng, -1, 1);
    auto b = oracle::random_vector(k * n, rng, -1, 1);
    auto c0 = oracle::random_vector(m * n, rng, -1, 1);
    for (bool acc : {false, true}) {
      auto c = c0, ref = c0;
      t.gemm(m, n, k, a.data(), k, b.data(), n, c.data(), n, acc);
      naive_gemm(m, n, k, a.data(), b.data(), ref.data(), acc);
      for (int i = 0; i < m * n; ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-5));
    }
  }
}

TEST_CASE("every available kernel variant agrees with the scalar reference") {
  const auto& ref = kernels::table(Isa::Scalar);
  for (Isa isa : kernels::available_isas()) {
    CAPTURE(kernels::name(isa));
    const auto& t = kernels::table(isa);
    std::mt19937_64 rng(7);

    for (auto [m, n, k] : {std::tuple{1, 1, 1}, {5, 13, 3}, {16, 31, 27}, {70, 129, 72}, {8, 8, 1152}}) {
      const int lda = k + 3, ldb = n + 2, ldc = n + 1;
      auto a = oracle::random_vector(static_cast<std::size_t>(m) * lda, rng, -1, 1);
      auto b = oracle::random_vector(static_cast<std::size_t>(k) * ldb, rng, -1, 1);
      auto c0 = oracle::random_vector(static_cast<std::size_t>(m) * ldc, rng, -1, 1);
      for (bool acc : {false, true}) {
        auto c1 = c0, c2 = c0;
        ref.gemm(m, n, k, a.data(), lda, b.data(), ldb, c1.data(), ldc, acc);
        t.gemm(m, n, k, a.data(), lda, b.data(), ldb, c2.data(), ldc, acc);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j)
            CHECK(c2[i * ldc + j] == doctest::Approx(c1[i * ldc + j]).epsilon(1e-4).scale(std::sqrt(double(k))));
        for (int i = 0; i < m; ++i)
          for (int j = n; j < ldc; ++j) CHECK(c2[i * ldc + j] == c0[i * ldc + j]);
      }
    }

    for (std::size_t n : {std::size_t{1}, std::size_t{7}, std::size_t{8}, std::size_t{33}, std::size_t{1000}}) {
      auto x = oracle::random_vector(n, rng, -2, 2);
      auto dy = oracle::random_vector(n, rng, -1, 1);
      std::vector<float> y1(n), y2(n), d1(n), d2(n);
      ref.leaky_relu_forward(n, x.data(), y1.data(), 0.1f);
      t.leaky_relu_forward(n, x.data(), y2.data(), 0.1f);
      CHECK(y1 == y2);
      ref.leaky_relu_backward(n, y1.data(), dy.data(), d1.data(), 0.1f);
      t.leaky_relu_backward(n, y1.data(), dy.data(), d2.data(), 0.1f);
      CHECK(d1 == d2);

      double s1 = 0, q1 = 0, s2 = 0, q2 = 0;
      ref.sum_sumsq(n, x.data(), &s1, &q1);
      t.sum_sumsq(n, x.data(), &s2, &q2);
      CHECK(s2 == doctest::Approx(s1).epsilon(1e-9));
      CHECK(q2 == doctest::Approx(q1).epsilon(1e-9));
      ref.sum_dot(n, x.data(), dy.data(), &s1, &q1);
      t.sum_dot(n, x.data(), dy.data(), &s2, &q2);
      CHECK(s2 == doctest::Approx(s1).epsilon(1e-9));
      CHECK(q2 == doctest::Approx(q1).epsilon(1e-9));

      ref.scale_shift(n, x.data(), 1.7f, -0.3f, y1.data());
      t.scale_shift(n, x.data(), 1.7f, -0.3f, y2.data());
      for (std::size_t i = 0; i < n; ++i) CHECK(y2[i] == doctest::Approx(y1[i]).epsilon(1e-6));

      auto p1 = oracle::random_vector(n, rng, -1, 1), p2 = p1;
      auto m1 = oracle::random_vector(n, rng, -0.1f, 0.1f), m2 = m1;
      auto v1 = oracle::random_vector(n, rng, 0, 0.01f), v2 = v1;
      const kernels::AdamStep step{1e-3f, 0.9f, 0.999f, 1.0f / std::sqrt(1.0f - 0.999f), 1e-8f};
      ref.adam_update(n, p1.data(), dy.data(), m1.data(), v1.data(), step);
      t.adam_update(n, p2.data(), dy.data(), m2.data(), v2.data(), step);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(p2[i] == doctest::Approx(p1[i]).epsilon(1e-5));
        CHECK(m2[i] == doctest::Approx(m1[i]).epsilon(1e-6));
        CHECK(v2[i] == doctest::Approx(v1[i]).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("adam update follows the textbook formula") {
  const auto& t = kernels::table(Isa::Scalar);
  float p = 0.5f, g = 0.2f, m = 0.0f, v = 0.0f;
  const float bc1 = 1.0f - 0.9f, bc2 = 1.0f - 0.999f;
  const kernels::AdamStep step{0.01f / bc1, 0.9f, 0.999f, 1.0f / std::sqrt(bc2), 1e-8f};
  t.adam_update(1, &p, &g, &m, &v, step);
  const double mhat = 0.1 * 0.2 / bc1, vhat = 0.001 * 0.04 / bc2;
  CHECK(p == doctest::Approx(0.5 - 0.01 * mhat / (std::sqrt(vhat) + 1e-8)).epsilon(1e-5));
}

TEST_CASE("isa guard restores the previous selection") {
  const Isa before = kernels::active().isa;
  {
    kernels::IsaGuard g(Isa::Scalar);
    CHECK(kernels::active().isa == Isa::Scalar);
  }
  CHECK(kernels::active().isa == before);
}
