#include "arta/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace arta::kernels {

namespace {

struct Table {
  Backend backend;
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*gemm_nn)(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
  void (*gemm_nt)(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
  void (*gemm_tn)(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
};

constexpr Table kScalar{Backend::scalar, scalar::dot, scalar::axpy, scalar::gemm_nn,
                        scalar::gemm_nt, scalar::gemm_tn};
#if defined(ARTA_HAVE_AVX2)
constexpr Table kAvx2{Backend::avx2, avx2::dot, avx2::axpy, avx2::gemm_nn, avx2::gemm_nt,
                      avx2::gemm_tn};
#endif

bool cpu_has_avx2() {
#if defined(ARTA_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const Table& table_for(Backend backend) {
#if defined(ARTA_HAVE_AVX2)
  if (backend == Backend::avx2) return kAvx2;
#endif
  (void)backend;
  return kScalar;
}

const Table* initial_table() {
  Backend pick = cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
  if (const char* env = std::getenv("ARTA_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") pick = Backend::scalar;
    else if (want == "avx2" && cpu_has_avx2()) pick = Backend::avx2;
  }
  return &table_for(pick);
}

const Table*& current() {
  static const Table* table = initial_table();
  return table;
}

void check_dims(std::size_t need_a, std::size_t need_b, std::size_t need_c, std::size_t a,
                std::size_t b, std::size_t c) {
  if (a < need_a || b < need_b || c < need_c)
    throw std::invalid_argument("gemm: operand span shorter than its dimensions");
}

}  // namespace

bool backend_supported(Backend backend) {
  return backend == Backend::scalar || cpu_has_avx2();
}

Backend active_backend() { return current()->backend; }

void set_backend(Backend backend) {
  if (!backend_supported(backend))
    throw std::invalid_argument("kernel backend not available: " +
                                std::string(backend_name(backend)));
  current() = &table_for(backend);
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::avx2 ? "avx2" : "scalar";
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  return current()->dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: length mismatch");
  current()->axpy(alpha, x.data(), y.data(), x.size());
}

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  check_dims(m * k, k * n, m * n, a.size(), b.size(), c.size());
  current()->gemm_nn(m, k, n, a.data(), b.data(), c.data());
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  check_dims(m * k, n * k, m * n, a.size(), b.size(), c.size());
  current()->gemm_nt(m, k, n, a.data(), b.data(), c.data());
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  check_dims(k * m, k * n, m * n, a.size(), b.size(), c.size());
  current()->gemm_tn(m, k, n, a.data(), b.data(), c.data());
}

}  // namespace arta::kernels
