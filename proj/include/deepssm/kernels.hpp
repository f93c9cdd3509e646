#pragma once

#include <cstdint>

// Dense kernels behind the autodiff primitives. Every kernel has a serial
// reference implementation and an OpenMP one that partitions work so that
// each output element is produced by exactly one thread with the same
// inner accumulation order as the serial code. The two backends therefore
// return bit-identical results for any thread count, which keeps training
// runs reproducible and lets the tests compare them exactly.

namespace deepssm::kernels {

enum class Backend { Serial, OpenMP, Auto };

Backend backend();
void set_backend(Backend b);
int max_threads();

/// Flop threshold below which Auto stays serial. On few-core machines the
/// parallel region overhead only amortizes for fairly large products; see
/// tools/bench_kernels.cpp for the measurement.
inline constexpr std::int64_t kParallelGrainFlops = 4 * 1024 * 1024;

namespace serial {
// c (m,n) = a (m,k) * b (k,n); accumulates into c when acc is set.
void matmul(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n, bool acc);
// c (m,n) = a (m,k) * b (n,k)^T
void matmul_nt(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n, bool acc);
// c (k,n) = a (m,k)^T * b (m,n)
void matmul_tn(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n, bool acc);
}  // namespace serial

namespace openmp {
void matmul(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n, bool acc);
void matmul_nt(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n, bool acc);
void matmul_tn(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n, bool acc);
}  // namespace openmp

// Dispatching entry points used by the autodiff ops.
void matmul(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n, bool acc = false);
void matmul_nt(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n, bool acc = false);
void matmul_tn(const double* a, const double* b, double* c, std::int64_t m,
               std::int64_t k, std::int64_t n, bool acc = false);

bool parallel_ok(std::int64_t flops);

/// y[i] = f(x[i]); parallel over i when the size warrants it.
template <class F>
void map(const double* x, double* y, std::int64_t n, F f) {
  if (parallel_ok(n)) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
  } else {
    for (std::int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
  }
}

/// y[i] = f(a[i], b[i])
template <class F>
void map2(const double* a, const double* b, double* y, std::int64_t n, F f) {
  if (parallel_ok(n)) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) y[i] = f(a[i], b[i]);
  } else {
    for (std::int64_t i = 0; i < n; ++i) y[i] = f(a[i], b[i]);
  }
}

/// Full reduction. Always serial: a fixed summation order keeps results
/// identical across thread counts.
double sum(const double* x, std::int64_t n);

/// out[r] = sum over the last axis; parallel over rows.
void rowsum(const double* x, double* out, std::int64_t rows, std::int64_t cols,
            bool acc = false);

/// out[j] += scale * sum_i x[i*cols + j]  (reduce leading axes onto a
/// suffix buffer; each column accumulated in row order by one thread).
void colsum_acc(const double* x, double* out, std::int64_t rows,
                std::int64_t cols, double scale = 1.0);

}  // namespace deepssm::kernels
