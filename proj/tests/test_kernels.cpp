#include <gtest/gtest.h>

#include <cmath>
#include <utility>
#include <vector>

#include "arta/kernels.hpp"
#include "arta/rng.hpp"

namespace {

using namespace arta;

std::vector<double> randoms(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

bool have_avx2() { return kernels::backend_supported(kernels::Backend::avx2); }

// Runs fn under each backend and returns both results.
template <class F>
auto on_both(F fn) {
  const auto keep = kernels::active_backend();
  kernels::set_backend(kernels::Backend::scalar);
  auto a = fn();
  kernels::set_backend(kernels::Backend::avx2);
  auto b = fn();
  kernels::set_backend(keep);
  return std::make_pair(a, b);
}

// Odd sizes exercise the vector tails.
const std::size_t kShapes[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 8, 4}, {9, 13, 17}, {16, 3, 33}, {31, 64, 5}};

TEST(Kernels, GemmNnMatchesScalarBitwise) {
  if (!have_avx2()) GTEST_SKIP() << "no AVX2";
  Rng rng(1);
  for (const auto& s : kShapes) {
    const auto a = randoms(rng, s[0] * s[1]), b = randoms(rng, s[1] * s[2]), c0 = randoms(rng, s[0] * s[2]);
    const auto [c1, c2] = on_both([&] {
      auto c = c0;
      kernels::gemm_nn(s[0], s[1], s[2], a, b, c);
      return c;
    });
    EXPECT_EQ(c1, c2);
  }
}

TEST(Kernels, GemmTnMatchesScalarBitwise) {
  if (!have_avx2()) GTEST_SKIP() << "no AVX2";
  Rng rng(2);
  for (const auto& s : kShapes) {
    const auto a = randoms(rng, s[1] * s[0]), b = randoms(rng, s[1] * s[2]), c0 = randoms(rng, s[0] * s[2]);
    const auto [c1, c2] = on_both([&] {
      auto c = c0;
      kernels::gemm_tn(s[0], s[1], s[2], a, b, c);
      return c;
    });
    EXPECT_EQ(c1, c2);
  }
}

TEST(Kernels, AxpyMatchesScalarBitwise) {
  if (!have_avx2()) GTEST_SKIP() << "no AVX2";
  Rng rng(3);
  for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 33u, 100u}) {
    const auto x = randoms(rng, n), y0 = randoms(rng, n);
    const auto [y1, y2] = on_both([&] {
      auto y = y0;
      kernels::axpy(0.37, x, y);
      return y;
    });
    EXPECT_EQ(y1, y2);
  }
}

// Lane reductions reorder the sum; compare to rounding.
TEST(Kernels, DotAndGemmNtAgreeToRounding) {
  if (!have_avx2()) GTEST_SKIP() << "no AVX2";
  Rng rng(4);
  for (std::size_t n : {1u, 5u, 8u, 61u, 256u}) {
    const auto a = randoms(rng, n), b = randoms(rng, n);
    double mag = 0;
    for (std::size_t i = 0; i < n; ++i) mag += std::abs(a[i] * b[i]);
    const auto [d1, d2] = on_both([&] { return kernels::dot(a, b); });
    EXPECT_NEAR(d1, d2, 1e-14 * mag);
  }
  for (const auto& s : kShapes) {
    const auto a = randoms(rng, s[0] * s[1]), b = randoms(rng, s[2] * s[1]);
    const auto [c1, c2] = on_both([&] {
      std::vector<double> c(s[0] * s[2], 0.0);
      kernels::gemm_nt(s[0], s[1], s[2], a, b, c);
      return c;
    });
    for (std::size_t i = 0; i < c1.size(); ++i) EXPECT_NEAR(c1[i], c2[i], 1e-12);
  }
}

TEST(Kernels, ScalarGemmMatchesTripleLoop) {
  Rng rng(5);
  const std::size_t m = 5, k = 7, n = 3;
  const auto a = randoms(rng, m * k), b = randoms(rng, k * n);
  std::vector<double> c(m * n, 0.0);
  kernels::scalar::gemm_nn(m, k, n, a.data(), b.data(), c.data());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      EXPECT_NEAR(c[i * n + j], s, 1e-12);
    }
}

TEST(Kernels, BackendSwitchingAndSpanChecks) {
  const auto before = kernels::active_backend();
  kernels::set_backend(kernels::Backend::scalar);
  EXPECT_EQ(kernels::active_backend(), kernels::Backend::scalar);
  EXPECT_EQ(kernels::backend_name(kernels::Backend::scalar), "scalar");
  std::vector<double> a(6), b(5), c(4);
  EXPECT_THROW(kernels::gemm_nn(2, 3, 2, a, b, c), std::invalid_argument);
  if (!have_avx2()) EXPECT_THROW(kernels::set_backend(kernels::Backend::avx2), std::invalid_argument);
  kernels::set_backend(before);
}

}  // namespace
