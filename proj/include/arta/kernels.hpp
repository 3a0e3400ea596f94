#pragma once

// Dense f64 inner loops used by the tensor layer.
//
// Every kernel has a scalar reference implementation and, on x86-64, an AVX2
// variant. The active variant is picked once at startup from CPUID and can be
// pinned with the ARTA_KERNELS environment variable ("scalar" or "avx2") or
// set_backend().
//
// Accumulation order contract:
//   axpy, gemm_nn, gemm_tn  accumulate every output element in the same order
//                           as the scalar loop, so all variants agree bitwise.
//   dot, gemm_nt            reduce in lanes; variants agree to rounding only.

#include <cstddef>
#include <span>
#include <string_view>

namespace arta::kernels {

enum class Backend { scalar, avx2 };

bool backend_supported(Backend backend);
Backend active_backend();
// Throws std::invalid_argument if the backend is not compiled in or the CPU
// lacks it.
void set_backend(Backend backend);
std::string_view backend_name(Backend backend);

double dot(std::span<const double> a, std::span<const double> b);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// c[m×n] += a[m×k] · b[k×n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c);

// c[m×n] += a[m×k] · b[n×k]ᵀ
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c);

// c[m×n] += a[k×m]ᵀ · b[k×n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);
}  // namespace avx2

}  // namespace arta::kernels
