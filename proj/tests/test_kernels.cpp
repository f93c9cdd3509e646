#include <doctest.h>

#include <random>
#include <vector>

#include "deepssm/kernels.hpp"

namespace k = deepssm::kernels;

namespace {

std::vector<double> random_vec(std::mt19937_64& eng, size_t n) {
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(eng);
  return v;
}

}  // namespace

// The OpenMP kernels partition outputs across threads but keep the serial
// accumulation order per element, so they must match the serial reference
// bit for bit.
TEST_CASE("openmp kernels match the serial reference exactly") {
  std::mt19937_64 eng(11);
  std::uniform_int_distribution<int> dim(1, 40);
  for (int trial = 0; trial < 30; ++trial) {
    const int m = dim(eng), kk = dim(eng), n = dim(eng);
    auto a = random_vec(eng, static_cast<size_t>(m * kk));
    auto b = random_vec(eng, static_cast<size_t>(kk * n));
    auto bt = random_vec(eng, static_cast<size_t>(n * kk));
    auto am = random_vec(eng, static_cast<size_t>(m * n));

    std::vector<double> cs(static_cast<size_t>(m * n)), cp = cs;
    k::serial::matmul(a.data(), b.data(), cs.data(), m, kk, n, false);
    k::openmp::matmul(a.data(), b.data(), cp.data(), m, kk, n, false);
    CHECK(cs == cp);

    k::serial::matmul_nt(a.data(), bt.data(), cs.data(), m, kk, n, false);
    k::openmp::matmul_nt(a.data(), bt.data(), cp.data(), m, kk, n, false);
    CHECK(cs == cp);

    std::vector<double> ts(static_cast<size_t>(kk * n)), tp = ts;
    k::serial::matmul_tn(a.data(), am.data(), ts.data(), m, kk, n, false);
    k::openmp::matmul_tn(a.data(), am.data(), tp.data(), m, kk, n, false);
    CHECK(ts == tp);

    // accumulate variants share the same path
    auto base = random_vec(eng, static_cast<size_t>(m * n));
    cs = base;
    cp = base;
    k::serial::matmul(a.data(), b.data(), cs.data(), m, kk, n, true);
    k::openmp::matmul(a.data(), b.data(), cp.data(), m, kk, n, true);
    CHECK(cs == cp);
  }
}

TEST_CASE("matmul against a naive triple loop") {
  std::mt19937_64 eng(3);
  const int m = 7, kk = 5, n = 9;
  auto a = random_vec(eng, m * kk);
  auto b = random_vec(eng, kk * n);
  std::vector<double> c(m * n);
  k::matmul(a.data(), b.data(), c.data(), m, kk, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < kk; ++p) s += a[i * kk + p] * b[p * n + j];
      CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("matmul_nt and matmul_tn agree with explicit transposes") {
  std::mt19937_64 eng(5);
  const int m = 6, kk = 4, n = 8;
  auto a = random_vec(eng, m * kk);
  auto b = random_vec(eng, kk * n);
  std::vector<double> bt(n * kk);
  for (int p = 0; p < kk; ++p)
    for (int j = 0; j < n; ++j) bt[j * kk + p] = b[p * n + j];

  std::vector<double> c1(m * n), c2(m * n);
  k::matmul(a.data(), b.data(), c1.data(), m, kk, n);
  k::matmul_nt(a.data(), bt.data(), c2.data(), m, kk, n);
  for (int i = 0; i < m * n; ++i)
    CHECK(c1[i] == doctest::Approx(c2[i]).epsilon(1e-12));

  // a^T b with a stored (m,k): out (k, n')
  auto g = random_vec(eng, m * n);
  std::vector<double> t1(kk * n, 0.0), t2(kk * n, 0.0);
  k::matmul_tn(a.data(), g.data(), t1.data(), m, kk, n);
  for (int p = 0; p < kk; ++p)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i) t2[p * n + j] += a[i * kk + p] * g[i * n + j];
  for (int i = 0; i < kk * n; ++i)
    CHECK(t1[i] == doctest::Approx(t2[i]).epsilon(1e-12));
}

TEST_CASE("reductions") {
  std::mt19937_64 eng(9);
  auto x = random_vec(eng, 6 * 5);
  std::vector<double> rows(6), cols(5, 0.0);
  k::rowsum(x.data(), rows.data(), 6, 5);
  k::colsum_acc(x.data(), cols.data(), 6, 5, 2.0);
  for (int r = 0; r < 6; ++r) {
    double s = 0.0;
    for (int c = 0; c < 5; ++c) s += x[r * 5 + c];
    CHECK(rows[r] == doctest::Approx(s).epsilon(1e-12));
  }
  for (int c = 0; c < 5; ++c) {
    double s = 0.0;
    for (int r = 0; r < 6; ++r) s += x[r * 5 + c];
    CHECK(cols[c] == doctest::Approx(2.0 * s).epsilon(1e-12));
  }
  CHECK(k::sum(x.data(), 30) ==
        doctest::Approx(std::accumulate(x.begin(), x.end(), 0.0)));
}
