// Timing comparison of the serial reference kernels against the OpenMP
// ones, at the matrix sizes the training loop actually hits.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "deepssm/kernels.hpp"

namespace k = deepssm::kernels;

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(int reps, const std::function<void()>& fn) {
  fn();  // warm up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() /
         reps;
}

}  // namespace

int main() {
  std::mt19937_64 eng(7);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);

  struct Case {
    int m, k, n;
    const char* note;
  };
  // batch x features shapes of the toy / Narendra-Li / WH configurations
  const Case cases[] = {
      {8, 120, 60, "chunk batch, h=60 gates"},
      {31, 120, 60, "full toy batch"},
      {64, 120, 60, "NL batch"},
      {64, 60, 180, "fused-gate width"},
      {256, 256, 256, "large dense"},
  };

  std::printf("%-28s %10s %10s %8s\n", "case (m,k,n)", "serial ms",
              "openmp ms", "speedup");
  for (const Case& c : cases) {
    std::vector<double> a(static_cast<size_t>(c.m * c.k));
    std::vector<double> b(static_cast<size_t>(c.k * c.n));
    std::vector<double> out(static_cast<size_t>(c.m * c.n));
    for (auto& v : a) v = dist(eng);
    for (auto& v : b) v = dist(eng);

    const int reps = c.m * c.k * c.n > 1 << 22 ? 20 : 400;
    const double ts = time_ms(reps, [&] {
      k::serial::matmul(a.data(), b.data(), out.data(), c.m, c.k, c.n, false);
    });
    const double tp = time_ms(reps, [&] {
      k::openmp::matmul(a.data(), b.data(), out.data(), c.m, c.k, c.n, false);
    });
    std::printf("%4d x%4d x%4d  %-10s %10.4f %10.4f %7.2fx\n", c.m, c.k, c.n,
                c.note, ts, tp, ts / tp);
  }
  std::printf("threads available: %d\n", k::max_threads());
  return 0;
}
