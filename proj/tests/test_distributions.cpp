#include <doctest.h>

#include <cmath>
#include <random>

#include "deepssm/distributions.hpp"
#include "deepssm/gradcheck.hpp"

using namespace deepssm;
using namespace deepssm::autodiff;
using namespace deepssm::dist;

namespace {

constexpr double kHalfLogTwoPi = 0.9189385332046727;  // ln(2 pi) / 2

DiagGaussian gauss(Vec mu, Vec sg) {
  Shape s{static_cast<std::int64_t>(mu.size())};
  return {Tensor(s, std::move(mu)), Tensor(s, std::move(sg))};
}

}  // namespace

TEST_CASE("gaussian log-density examples") {
  DiagGaussian p = gauss({0.7}, {1.0});
  CHECK(gaussian_log_prob(p, Tensor(Shape{1}, {0.7})).item() ==
        doctest::Approx(-kHalfLogTwoPi).epsilon(1e-15));
  // one-sigma offset costs exactly 1/2
  const double at_mu = gaussian_log_prob(p, Tensor(Shape{1}, {0.7})).item();
  const double at_1s = gaussian_log_prob(p, Tensor(Shape{1}, {1.7})).item();
  CHECK(at_mu - at_1s == doctest::Approx(0.5).epsilon(1e-12));

  // stationary point: d/dmu at y = mu is zero
  Parameter mu("mu", Shape{2});
  mu.value = {0.3, -0.8};
  Tape t;
  DiagGaussian q{t.leaf(mu), Tensor(Shape{2}, {0.5, 2.0})};
  t.backward(gaussian_log_prob(q, Tensor(Shape{2}, {0.3, -0.8})));
  for (double g : mu.grad) CHECK(g == 0.0);
}

TEST_CASE("density integrates to one") {
  // Simpson quadrature over +-10 sigma, 1-dim
  const double m = 0.4, s = 1.7;
  DiagGaussian p = gauss({m}, {s});
  const int n = 4000;
  const double a = m - 10 * s, b = m + 10 * s, h = (b - a) / n;
  double integral = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double y = a + i * h;
    const double f =
        std::exp(gaussian_log_prob(p, Tensor(Shape{1}, {y})).item());
    integral += f * (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0));
  }
  integral *= h / 3.0;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("reparameterized sampling") {
  // degenerate spread collapses on the mean
  {
    Rng rng(1);
    DiagGaussian p = gauss({5.0}, {kSigmaFloor});
    for (int i = 0; i < 100; ++i)
      CHECK(std::abs(gaussian_rsample(p, rng).item() - 5.0) <= 4 * kSigmaFloor * 5);
  }
  // moment check on 1e5 standard normal draws
  {
    Rng rng(2);
    DiagGaussian p = gauss({0.0}, {1.0});
    double m = 0.0, v = 0.0;
    const int n = 100000;
    Vec xs(n);
    for (auto& x : xs) x = gaussian_rsample(p, rng).item();
    for (double x : xs) m += x;
    m /= n;
    for (double x : xs) v += (x - m) * (x - m);
    v /= n;
    CHECK(std::abs(m) < 0.02);
    CHECK(std::abs(v - 1.0) < 0.02);
  }
  // d(sample)/dmu is exactly 1 for any frozen draw
  {
    Rng rng(3);
    Parameter mu("mu", Shape{3});
    mu.value = {1.0, 2.0, 3.0};
    Tape t;
    DiagGaussian p{t.leaf(mu), Tensor(Shape{3}, {0.5, 1.0, 2.0})};
    t.backward(sum(gaussian_rsample(p, rng)));
    for (double g : mu.grad) CHECK(g == 1.0);
  }
  // gradients flow to sigma but not to the noise
  {
    Rng rng(4);
    Parameter sg("sigma", Shape{1});
    sg.value = {1.5};
    Tape t;
    DiagGaussian p{Tensor(Shape{1}, {0.0}), t.leaf(sg)};
    Tensor s = gaussian_rsample(p, rng);
    const double eps = s.item() / 1.5;  // mu = 0
    t.backward(sum(s));
    CHECK(sg.grad[0] == doctest::Approx(eps).epsilon(1e-12));
  }
}

TEST_CASE("analytic KL examples") {
  // identical distributions: exactly zero
  {
    DiagGaussian q = gauss({0.3, -1.0}, {0.7, 2.0});
    DiagGaussian p = gauss({0.3, -1.0}, {0.7, 2.0});
    CHECK(gaussian_kl(q, p).item() == 0.0);
  }
  // KL(N(1,1) || N(0,1)) = 1/2
  CHECK(gaussian_kl(gauss({1.0}, {1.0}), gauss({0.0}, {1.0})).item() ==
        doctest::Approx(0.5).epsilon(1e-14));
  // KL(N(0,sigma=2) || N(0,1)) = ln(1/2) + 4/2 - 1/2
  CHECK(gaussian_kl(gauss({0.0}, {2.0}), gauss({0.0}, {1.0})).item() ==
        doctest::Approx(std::log(0.5) + 2.0 - 0.5).epsilon(1e-14));
}

TEST_CASE("KL properties: nonnegativity and Monte-Carlo agreement") {
  Rng rng(31337);
  // nonnegativity over many random pairs; KL(q || q) = 0 to 1e-12
  for (int i = 0; i < 10000; ++i) {
    const double mq = rng.uniform(-3, 3), mp = rng.uniform(-3, 3);
    const double sq = rng.uniform(0.2, 3), sp = rng.uniform(0.2, 3);
    CHECK(gaussian_kl(gauss({mq}, {sq}), gauss({mp}, {sp})).item() >= 0.0);
    CHECK(std::abs(gaussian_kl(gauss({mq}, {sq}), gauss({mq}, {sq})).item()) <=
          1e-12);
  }
  // analytic equals E_q[log q - log p] within 3 standard errors (1e5 draws);
  // the estimator is hand-rolled so it shares nothing with the library path
  auto logpdf = [](double x, double m, double s) {
    const double z = (x - m) / s;
    return -kHalfLogTwoPi - std::log(s) - 0.5 * z * z;
  };
  int checked = 0;
  for (int pair = 0; pair < 100; ++pair) {
    const double mq = rng.uniform(-2, 2), mp = rng.uniform(-2, 2);
    const double sq = rng.uniform(0.3, 2), sp = rng.uniform(0.3, 2);
    const double analytic =
        gaussian_kl(gauss({mq}, {sq}), gauss({mp}, {sp})).item();
    const int n = 100000;
    double mean = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = mq + sq * rng.normal();
      const double d = logpdf(x, mq, sq) - logpdf(x, mp, sp);
      const double delta = d - mean;
      mean += delta / (i + 1);
      m2 += delta * (d - mean);
    }
    const double se = std::sqrt(m2 / (n - 1.0) / n);
    CHECK(std::abs(analytic - mean) <= 3.0 * se);
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("KL against Monte Carlo for the half-nat example") {
  // KL(N(1,1) || N(0,1)) = 0.5; estimate within 1%
  Rng rng(99);
  DiagGaussian q = gauss({1.0}, {1.0}), p = gauss({0.0}, {1.0});
  double est = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = 1.0 + rng.normal();
    Tensor xt(Shape{1}, {x});
    est += gaussian_log_prob(q, xt).item() - gaussian_log_prob(p, xt).item();
  }
  est /= n;
  CHECK(est == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("make_sigma") {
  CHECK(make_sigma(Tensor(Shape{1}, {0.0})).item() ==
        doctest::Approx(std::log(2.0) + 1e-4).epsilon(1e-15));
  CHECK(std::abs(make_sigma(Tensor(Shape{1}, {-40.0})).item() - 1e-4) < 1e-15);
  // monotone
  Rng rng(7);
  double prev = -1.0;
  for (double raw = -30.0; raw <= 30.0; raw += 0.37) {
    const double s = make_sigma(Tensor(Shape{1}, {raw})).item();
    CHECK(s > prev);
    prev = s;
  }
}

TEST_CASE("gmm log-density") {
  Rng rng(21);
  // all components identical: collapses to the single Gaussian
  {
    DiagGaussian g = gauss({0.4, -1.2}, {0.8, 1.5});
    Gmm m{{g, g, g}, Tensor(Shape{3}, {0.3, -1.0, 2.0})};
    for (double y1 : {-2.0, 0.0, 1.7}) {
      Tensor y(Shape{2}, {y1, 0.5});
      CHECK(gmm_log_prob(m, y).item() ==
            doctest::Approx(gaussian_log_prob(g, y).item()).epsilon(1e-12));
    }
  }
  // saturated logits select component one
  {
    DiagGaussian g1 = gauss({0.0}, {1.0}), g2 = gauss({50.0}, {0.1});
    Gmm m{{g1, g2}, Tensor(Shape{2}, {30.0, -30.0})};
    Tensor y(Shape{1}, {0.3});
    CHECK(std::abs(gmm_log_prob(m, y).item() -
                   gaussian_log_prob(g1, y).item()) < 1e-9);
  }
  // K = 1 equals the Gaussian exactly (bitwise)
  {
    DiagGaussian g = gauss({0.123}, {0.456});
    Gmm m{{g}, Tensor(Shape{1}, {1.7})};
    Tensor y(Shape{1}, {-0.9});
    CHECK(gmm_log_prob(m, y).item() == gaussian_log_prob(g, y).item());
  }
}

TEST_CASE("gmm gradient check on random K=5 parameters") {
  std::mt19937_64 eng(33);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  const int K = 5, yd = 2;
  Parameter raw("gmm", Shape{K * 2 * yd + K});
  for (double& v : raw.value) v = d(eng);
  const Vec y0{0.4, -0.6};

  auto eval = [&](bool with_grad) {
    Tape tape;
    Tensor packed = with_grad ? tape.leaf(raw) : Tensor(raw.shape, raw.value);
    Gmm m;
    for (int k = 0; k < K; ++k) {
      const std::int64_t base = k * 2 * yd;
      m.comps.push_back(
          {slice_last(packed, base, base + yd),
           make_sigma(slice_last(packed, base + yd, base + 2 * yd))});
    }
    m.logits = slice_last(packed, K * 2 * yd, K * 2 * yd + K);
    Tensor lp = gmm_log_prob(m, Tensor(Shape{yd}, y0));
    if (with_grad) tape.backward(lp);
    return lp.item();
  };
  std::vector<Parameter*> params{&raw};
  CHECK(finite_difference_check_params(eval, params, 1e-5) < 1e-5);
}

TEST_CASE("gmm mixture mean and sampling") {
  // mixture mean with known weights
  {
    DiagGaussian g1 = gauss({1.0}, {0.5}), g2 = gauss({3.0}, {0.5});
    Gmm m{{g1, g2}, Tensor(Shape{2}, {0.0, 0.0})};  // equal weights
    CHECK(gmm_mixture_mean(m).item() == doctest::Approx(2.0).epsilon(1e-12));
  }
  // dominant component wins
  {
    Rng rng(5);
    DiagGaussian g1 = gauss({-4.0}, {0.01}), g2 = gauss({4.0}, {0.01});
    Gmm m{{g1, g2}, Tensor(Shape{2}, {30.0, -30.0})};
    for (int i = 0; i < 200; ++i)
      CHECK(gmm_sample(m, rng)[0] == doctest::Approx(-4.0).epsilon(0.01));
  }
  // uniform logits: component frequencies 0.2 +- 0.01 over 1e5 draws
  {
    Rng rng(6);
    Gmm m;
    for (int k = 0; k < 5; ++k)
      m.comps.push_back(gauss({static_cast<double>(10 * k)}, {1e-3}));
    m.logits = Tensor(Shape{5}, Vec(5, 0.0));
    std::array<int, 5> counts{};
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double x = gmm_sample(m, rng)[0];
      ++counts[static_cast<size_t>((x + 5.0) / 10.0)];
    }
    for (int c : counts)
      CHECK(std::abs(c / static_cast<double>(n) - 0.2) < 0.01);
  }
  // seeded determinism
  {
    Gmm m{{gauss({0.0}, {1.0}), gauss({5.0}, {2.0})},
          Tensor(Shape{2}, {0.3, -0.2})};
    Rng r1(77), r2(77);
    CHECK(gmm_sample(m, r1) == gmm_sample(m, r2));
  }
}
