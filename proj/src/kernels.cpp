#include "deepssm/kernels.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace deepssm::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::Auto};
}

Backend backend() { return g_backend.load(); }
void set_backend(Backend b) { g_backend.store(b); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

bool parallel_ok(std::int64_t flops) {
  switch (g_backend.load()) {
    case Backend::Serial:
      return false;
    case Backend::OpenMP:
      return max_threads() > 1;
    case Backend::Auto:
      return max_threads() > 1 && flops >= kParallelGrainFlops;
  }
  return false;
}

namespace {

// Shared row kernels so both backends accumulate in the same order.

inline void matmul_row(const double* a, const double* b, double* c,
                       std::int64_t i, std::int64_t k, std::int64_t n,
                       bool acc) {
  double* crow = c + i * n;
  if (!acc)
    for (std::int64_t j = 0; j < n; ++j) crow[j] = 0.0;
  const double* arow = a + i * k;
  for (std::int64_t p = 0; p < k; ++p) {
    const double av = arow[p];
    const double* brow = b + p * n;
    for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

inline void matmul_nt_row(const double* a, const double* b, double* c,
                          std::int64_t i, std::int64_t k, std::int64_t n,
                          bool acc) {
  const double* arow = a + i * k;
  double* crow = c + i * n;
  for (std::int64_t j = 0; j < n; ++j) {
    const double* brow = b + j * k;
    double s = 0.0;
    for (std::int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
    crow[j] = acc ? crow[j] + s : s;
  }
}

// c row r of (k,n): c[r,:] = sum_i a[i,r] * b[i,:]
inline void matmul_tn_row(const double* a, const double* b, double* c,
                          std::int64_t r, std::int64_t m, std::int64_t k,
                          std::int64_t n, bool acc) {
  double* crow = c + r * n;
  if (!acc)
    for (std::int64_t j = 0; j < n; ++j) crow[j] = 0.0;
  for (std::int64_t i = 0; i < m; ++i) {
    const double av = a[i * k + r];
    const double* brow = b + i * n;
    for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

}  // namespace

namespace serial {

void matmul(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n, bool acc) {
  for (std::int64_t i = 0; i < m; ++i) matmul_row(a, b, c, i, k, n, acc);
}

void matmul_nt(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n, bool acc) {
  for (std::int64_t i = 0; i < m; ++i) matmul_nt_row(a, b, c, i, k, n, acc);
}

void matmul_tn(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n, bool acc) {
  for (std::int64_t r = 0; r < k; ++r) matmul_tn_row(a, b, c, r, m, k, n, acc);
}

}  // namespace serial

namespace openmp {

void matmul(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n, bool acc) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) matmul_row(a, b, c, i, k, n, acc);
}

void matmul_nt(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n, bool acc) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) matmul_nt_row(a, b, c, i, k, n, acc);
}

void matmul_tn(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n, bool acc) {
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < k; ++r) matmul_tn_row(a, b, c, r, m, k, n, acc);
}

}  // namespace openmp

void matmul(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n, bool acc) {
  if (parallel_ok(2 * m * k * n))
    openmp::matmul(a, b, c, m, k, n, acc);
  else
    serial::matmul(a, b, c, m, k, n, acc);
}

void matmul_nt(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n, bool acc) {
  if (parallel_ok(2 * m * k * n))
    openmp::matmul_nt(a, b, c, m, k, n, acc);
  else
    serial::matmul_nt(a, b, c, m, k, n, acc);
}

void matmul_tn(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n, bool acc) {
  if (parallel_ok(2 * m * k * n))
    openmp::matmul_tn(a, b, c, m, k, n, acc);
  else
    serial::matmul_tn(a, b, c, m, k, n, acc);
}

double sum(const double* x, std::int64_t n) {
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) s += x[i];
  return s;
}

void rowsum(const double* x, double* out, std::int64_t rows, std::int64_t cols,
            bool acc) {
  const bool par = parallel_ok(rows * cols);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double s = 0.0;
    for (std::int64_t j = 0; j < cols; ++j) s += xr[j];
    out[r] = acc ? out[r] + s : s;
  }
}

void colsum_acc(const double* x, double* out, std::int64_t rows,
                std::int64_t cols, double scale) {
  const bool par = parallel_ok(rows * cols);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t j = 0; j < cols; ++j) {
    double s = 0.0;
    for (std::int64_t i = 0; i < rows; ++i) s += x[i * cols + j];
    out[j] += scale * s;
  }
}

}  // namespace deepssm::kernels
