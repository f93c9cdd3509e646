#include <doctest.h>

#include <cmath>
#include <random>

#include "deepssm/gradcheck.hpp"
#include "deepssm/ops.hpp"

using namespace deepssm;
using namespace deepssm::autodiff;

namespace {

Tensor random_tensor(std::mt19937_64& eng, Shape shape, double lo = -2.0,
                     double hi = 2.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Vec v(static_cast<size_t>(shape.numel()));
  for (auto& x : v) x = d(eng);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("primitive forward examples") {
  CHECK(sigmoid(Tensor(Shape{1}, {0.0})).value()[0] == 0.5);
  CHECK(softplus(Tensor(Shape{1}, {0.0})).value()[0] ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));

  Tensor a(Shape{2, 2}, {1, 2, 3, 4});
  Tensor id(Shape{2, 2}, {1, 0, 0, 1});
  CHECK(matmul(a, id).value() == Vec{1, 2, 3, 4});
}

TEST_CASE("backward basics") {
  // d/dx sigmoid at 0 = 0.25
  {
    Parameter x("x", Shape{1});
    x.value = {0.0};
    Tape t;
    t.backward(sum(sigmoid(t.leaf(x))));
    CHECK(x.grad[0] == doctest::Approx(0.25).epsilon(1e-15));
  }
  // d/dx (x*x) at 3 = 6
  {
    Parameter x("x", Shape{1});
    x.value = {3.0};
    Tape t;
    Tensor xx = t.leaf(x);
    t.backward(sum(mul(xx, xx)));
    CHECK(x.grad[0] == doctest::Approx(6.0).epsilon(1e-15));
  }
  // gradient accumulates over all paths
  {
    Parameter x("x", Shape{3});
    x.value = {1.0, -1.0, 2.0};
    Tape t;
    Tensor xx = t.leaf(x);
    t.backward(add(sum(xx), sum(xx)));
    for (double g : x.grad) CHECK(g == 2.0);
  }
}

TEST_CASE("gradient of sum(matmul(W,x)) matches finite differences") {
  std::mt19937_64 eng(17);
  Tensor x = random_tensor(eng, Shape{4, 3});
  const double err = finite_difference_check(
      [&](Tape*, const Tensor& w) { return sum(matmul(w, x)); },
      random_tensor(eng, Shape{5, 4}), 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("finite-difference oracle on sum of squares") {
  std::mt19937_64 eng(23);
  const double err = finite_difference_check(
      [](Tape*, const Tensor& v) { return sum(square(v)); },
      random_tensor(eng, Shape{7}), 1e-5);
  CHECK(err < 1e-8);
}

// Spec invariant: every primitive passes a central finite-difference check
// at step 1e-5 within relative error 1e-4, over 100+ random shapes/values.
TEST_CASE("all primitives pass randomized gradient checks") {
  std::mt19937_64 eng(31);
  std::uniform_int_distribution<int> dim(1, 5);
  int cases = 0;

  using UnaryFn = Tensor (*)(const Tensor&);
  struct UnaryCase {
    const char* name;
    UnaryFn fn;
    double lo, hi;
  };
  const UnaryCase unaries[] = {
      {"sigmoid", &sigmoid, -3, 3}, {"tanh", &tanh_, -3, 3},
      {"exp", &exp_, -2, 2},        {"log", &log_, 0.2, 3},
      {"sqrt", &sqrt_, 0.2, 3},     {"softplus", &softplus, -3, 3},
      {"relu", &relu, -3, 3},       {"square", &square, -3, 3},
      {"neg", &neg, -3, 3},
  };
  for (const auto& uc : unaries) {
    for (int rep = 0; rep < 5; ++rep) {
      Shape s = rep % 2 ? Shape{dim(eng), dim(eng)} : Shape{dim(eng)};
      // keep relu away from the kink
      const double err = finite_difference_check(
          [&](Tape*, const Tensor& v) { return sum(uc.fn(v)); },
          random_tensor(eng, s, uc.lo, uc.hi), 1e-5);
      INFO(uc.name);
      CHECK(err < 1e-4);
      ++cases;
    }
  }

  using BinaryFn = Tensor (*)(const Tensor&, const Tensor&);
  struct BinaryCase {
    const char* name;
    BinaryFn fn;
    double lo, hi;
  };
  const BinaryCase binaries[] = {
      {"add", &add, -2, 2},
      {"sub", &sub, -2, 2},
      {"mul", &mul, -2, 2},
      {"div", &div, 0.5, 2.5},  // keep divisors away from zero
  };
  for (const auto& bc : binaries) {
    for (int rep = 0; rep < 6; ++rep) {
      const std::int64_t lead = dim(eng), suf = dim(eng);
      Shape big{lead, suf};
      Shape other = rep % 3 == 0 ? big : (rep % 3 == 1 ? Shape{suf} : Shape{});
      Tensor bfix = random_tensor(eng, other, bc.lo, bc.hi);
      const double e1 = finite_difference_check(
          [&](Tape*, const Tensor& v) { return sum(bc.fn(v, bfix)); },
          random_tensor(eng, big, bc.lo, bc.hi), 1e-5);
      Tensor afix = random_tensor(eng, big, bc.lo, bc.hi);
      const double e2 = finite_difference_check(
          [&](Tape*, const Tensor& v) { return sum(bc.fn(afix, v)); },
          random_tensor(eng, other, bc.lo, bc.hi), 1e-5);
      INFO(bc.name);
      CHECK(e1 < 1e-4);
      CHECK(e2 < 1e-4);
      cases += 2;
    }
  }

  // matmuls, both operands
  for (int rep = 0; rep < 4; ++rep) {
    const std::int64_t m = dim(eng), kk = dim(eng), n = dim(eng);
    Tensor b = random_tensor(eng, Shape{kk, n});
    CHECK(finite_difference_check(
              [&](Tape*, const Tensor& v) { return mean(matmul(v, b)); },
              random_tensor(eng, Shape{m, kk}), 1e-5) < 1e-4);
    Tensor a = random_tensor(eng, Shape{m, kk});
    CHECK(finite_difference_check(
              [&](Tape*, const Tensor& v) { return mean(matmul(a, v)); },
              random_tensor(eng, Shape{kk, n}), 1e-5) < 1e-4);
    Tensor bt = random_tensor(eng, Shape{n, kk});
    CHECK(finite_difference_check(
              [&](Tape*, const Tensor& v) { return mean(matmul_nt(v, bt)); },
              random_tensor(eng, Shape{m, kk}), 1e-5) < 1e-4);
    CHECK(finite_difference_check(
              [&](Tape*, const Tensor& v) { return mean(matmul_nt(a, v)); },
              random_tensor(eng, Shape{n, kk}), 1e-5) < 1e-4);
    cases += 4;
  }

  // structure and reductions
  for (int rep = 0; rep < 4; ++rep) {
    const std::int64_t r = dim(eng), c1 = dim(eng), c2 = dim(eng);
    Tensor b = random_tensor(eng, Shape{r, c2});
    CHECK(finite_difference_check(
              [&](Tape*, const Tensor& v) {
                return sum(square(concat_last(v, b)));
              },
              random_tensor(eng, Shape{r, c1}), 1e-5) < 1e-4);
    CHECK(finite_difference_check(
              [&](Tape*, const Tensor& v) {
                return sum(slice_last(v, 0, (c1 + 1) / 2));
              },
              random_tensor(eng, Shape{r, c1}), 1e-5) < 1e-4);
    CHECK(finite_difference_check(
              [&](Tape*, const Tensor& v) {
                return sum(square(reshape(v, Shape{c1 * r})));
              },
              random_tensor(eng, Shape{r, c1}), 1e-5) < 1e-4);
    CHECK(finite_difference_check(
              [&](Tape*, const Tensor& v) { return sum(square(sum_last(v))); },
              random_tensor(eng, Shape{r, c1}), 1e-5) < 1e-4);
    CHECK(finite_difference_check(
              [&](Tape*, const Tensor& v) {
                return sum(logsumexp_last(v));
              },
              random_tensor(eng, Shape{r, c1}), 1e-5) < 1e-4);
    CHECK(finite_difference_check(
              [&](Tape*, const Tensor& v) {
                return sum(square(mean_axis0(v)));
              },
              random_tensor(eng, Shape{r, c1}), 1e-5) < 1e-4);
    CHECK(finite_difference_check(
              [&](Tape*, const Tensor& v) { return mean(square(v)); },
              random_tensor(eng, Shape{r, c1}), 1e-5) < 1e-4);
    CHECK(finite_difference_check(
              [&](Tape*, const Tensor& v) {
                return sum(scale(add_scalar(v, 0.7), -1.3));
              },
              random_tensor(eng, Shape{r}), 1e-5) < 1e-4);
    cases += 8;
  }
  CHECK(cases >= 100);
}

TEST_CASE("broadcast add gradient equals the explicit tiled computation") {
  std::mt19937_64 eng(41);
  Tensor big = random_tensor(eng, Shape{6, 3});
  Parameter small("b", Shape{3});
  small.value = {0.5, -1.0, 2.0};

  Tape t;
  t.backward(sum(square(add(big, t.leaf(small)))));

  // tiled: replicate small over rows, same loss, reduce by hand
  Parameter tiled("bt", Shape{6, 3});
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 3; ++c) tiled.value[r * 3 + c] = small.value[c];
  Tape t2;
  t2.backward(sum(square(add(big, t2.leaf(tiled)))));
  for (int c = 0; c < 3; ++c) {
    double s = 0.0;
    for (int r = 0; r < 6; ++r) s += tiled.grad[r * 3 + c];
    CHECK(small.grad[c] == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("log-sum-exp is shift invariant") {
  std::mt19937_64 eng(43);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor x = random_tensor(eng, Shape{4}, -5, 5);
    for (double c : {-1000.0, -3.7, 0.5, 42.0, 1000.0}) {
      const double l0 = logsumexp_last(x).value()[0];
      const double lc = logsumexp_last(add_scalar(x, c)).value()[0];
      CHECK(std::abs(lc - l0 - c) <= 1e-12 * std::max(1.0, std::abs(c)));
    }
  }
}

TEST_CASE("error paths") {
  Tensor a(Shape{2, 3}, Vec(6, 1.0));
  Tensor b(Shape{2, 2}, Vec(4, 1.0));

  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("matmul"), ShapeError);
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(log_(Tensor(Shape{1}, {-1.0})), DomainError);
  CHECK_THROWS_AS(sqrt_(Tensor(Shape{1}, {-0.5})), DomainError);

  // backward misuse
  Parameter x("x", Shape{2});
  x.value = {1.0, 2.0};
  Tape t;
  Tensor lx = t.leaf(x);
  CHECK_THROWS_AS(t.backward(lx), ValueError);  // non-scalar
  Tensor s = sum(lx);
  t.backward(s);
  CHECK_THROWS_AS(t.backward(s), ValueError);  // second sweep on one tape

  // operands on different tapes
  Parameter y("y", Shape{2});
  Tape t1, t2;
  Tensor on1 = t1.leaf(x);
  Tensor on2 = t2.leaf(y);
  CHECK_THROWS_AS(add(on1, on2), ValueError);
}

TEST_CASE("non-finite values fail loudly with the node named") {
  Parameter x("weights", Shape{1});
  x.value = {1000.0};
  Tape t;
  try {
    // exp(1000) overflows to inf
    Tensor e = exp_(t.leaf(x));
    FAIL("expected NumericError");
  } catch (const NumericError& err) {
    const std::string msg = err.what();
    CHECK(msg.find("exp") != std::string::npos);
    CHECK(msg.find("node") != std::string::npos);
  }
}

TEST_CASE("no-grad mode records nothing") {
  Parameter x("x", Shape{2});
  x.value = {1.0, 2.0};
  Tape t;
  {
    NoGradGuard guard;
    Tensor r = square(t.leaf(x));
    CHECK_FALSE(r.on_tape());
  }
  CHECK(t.size() == 0);
}

TEST_CASE("detached tensors are value-only") {
  Parameter x("x", Shape{2});
  x.value = {1.0, 2.0};
  Tape t;
  Tensor lx = t.leaf(x);
  Tensor d = lx.detach();
  CHECK_FALSE(d.on_tape());
  CHECK(d.value() == lx.value());
}
