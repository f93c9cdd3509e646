#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "deepssm/gradcheck.hpp"
#include "deepssm/layers.hpp"

using namespace deepssm;
using namespace deepssm::autodiff;
using namespace deepssm::nn;

namespace {

void randomize(std::vector<Parameter*> params, std::uint64_t seed,
               double scale = 0.5) {
  Rng rng(seed);
  for (Parameter* p : params)
    for (double& v : p->value) v = scale * rng.normal();
}

}  // namespace

TEST_CASE("gru with zero weights halves the state") {
  GruCell cell("g", 3, 4);  // all parameters start at zero
  ParamBinder bind(nullptr);
  Tensor h(Shape{1, 4}, {0.4, -1.0, 2.5, 0.0});
  Tensor x(Shape{1, 3}, {1.0, 2.0, 3.0});
  Vec out = cell.step(bind, h, x).value();
  // r = z = 1/2, n = tanh(0) = 0, so h' = z h = h/2
  for (int i = 0; i < 4; ++i)
    CHECK(out[i] == doctest::Approx(0.5 * h.value()[i]).epsilon(1e-15));

  Tensor h0 = Tensor::zeros(Shape{1, 4});
  Vec fixed = cell.step(bind, h0, x).value();
  for (double v : fixed) CHECK(v == 0.0);
}

TEST_CASE("gru gradients match finite differences") {
  GruCell cell("g", 2, 3);
  std::vector<Parameter*> params;
  cell.collect(params);
  randomize(params, 99);

  const Vec h0{0.3, -0.2, 0.5};
  const Vec x0{1.0, -1.5};
  auto eval = [&](bool with_grad) {
    Tape tape;
    ParamBinder bind(with_grad ? &tape : nullptr);
    Tensor h(Shape{1, 3}, h0);
    Tensor x(Shape{1, 2}, x0);
    Tensor out = sum(cell.step(bind, h, x));
    if (with_grad) tape.backward(out);
    return out.item();
  };
  CHECK(finite_difference_check_params(eval, params, 1e-5) < 1e-5);

  // exercise the reset gate near both saturation ends
  for (double bias : {-8.0, 8.0}) {
    std::fill(cell.br.value.begin(), cell.br.value.end(), bias);
    CHECK(finite_difference_check_params(eval, params, 1e-5) < 1e-5);
  }
}

TEST_CASE("gru state stays inside the unit box") {
  std::mt19937_64 eng(7);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  GruCell cell("g", 2, 5);
  std::vector<Parameter*> params;
  cell.collect(params);
  for (int trial = 0; trial < 50; ++trial) {
    randomize(params, 1000 + static_cast<std::uint64_t>(trial), 2.0);
    Vec h(5), x(2);
    for (auto& v : h) v = d(eng);
    for (auto& v : x) v = 5.0 * d(eng);
    ParamBinder bind(nullptr);
    Vec out = cell.step(bind, Tensor(Shape{1, 5}, h), Tensor(Shape{1, 2}, x))
                  .value();
    for (double v : out) CHECK(std::abs(v) <= 1.0 + 1e-12);
  }
}

TEST_CASE("mlp basics") {
  // single layer, W = I, b = 0: identity
  {
    Mlp net("m", {3, 3});
    for (int i = 0; i < 3; ++i) net.layers[0].W.value[i * 3 + i] = 1.0;
    ParamBinder bind(nullptr);
    Tensor x(Shape{1, 3}, {0.5, -2.0, 3.0});
    CHECK(net.forward(bind, x).value() == x.value());
  }
  // two zero layers map everything to zero
  {
    Mlp net("m", {3, 4, 2});
    ParamBinder bind(nullptr);
    Tensor x(Shape{1, 3}, {1.0, 2.0, 3.0});
    const Vec out = net.forward(bind, x).value();
    for (double v : out) CHECK(v == 0.0);
  }
}

TEST_CASE("3-layer mlp gradients match finite differences") {
  Mlp net("m", {2, 4, 4, 3});
  std::vector<Parameter*> params;
  net.collect(params);
  randomize(params, 123);
  const Vec x0{0.7, -1.2};
  auto eval = [&](bool with_grad) {
    Tape tape;
    ParamBinder bind(with_grad ? &tape : nullptr);
    Tensor out = sum(square(net.forward(bind, Tensor(Shape{1, 2}, x0))));
    if (with_grad) tape.backward(out);
    return out.item();
  };
  CHECK(finite_difference_check_params(eval, params, 1e-5) < 1e-5);
}

TEST_CASE("batchnorm train mode standardizes the batch") {
  BatchNorm bn("bn", 3);
  ParamBinder bind(nullptr);
  std::mt19937_64 eng(15);
  std::uniform_real_distribution<double> d(-4.0, 4.0);
  Vec data(8 * 3);
  for (auto& v : data) v = d(eng);
  Vec out = bn.forward(bind, Tensor(Shape{8, 3}, data), BnMode::Train).value();
  for (int c = 0; c < 3; ++c) {
    double m = 0.0, var = 0.0;
    for (int r = 0; r < 8; ++r) m += out[r * 3 + c];
    m /= 8;
    for (int r = 0; r < 8; ++r)
      var += (out[r * 3 + c] - m) * (out[r * 3 + c] - m);
    var /= 8;
    CHECK(std::abs(m) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // up to eps smoothing
  }
}

TEST_CASE("batchnorm eval uses running statistics only") {
  BatchNorm bn("bn", 1);
  bn.gamma.value = {2.0};
  bn.beta.value = {3.0};
  // running mean 0, var 1 (constructor defaults)
  ParamBinder bind(nullptr);
  Tensor x(Shape{2, 1}, {0.0, 0.0});
  Vec out = bn.forward(bind, x, BnMode::Eval).value();
  CHECK(out[0] == 3.0);
  CHECK(out[1] == 3.0);

  // eval mode is idempotent: stats do not move
  const Vec rm = bn.running_mean, rv = bn.running_var;
  Vec out2 = bn.forward(bind, x, BnMode::Eval).value();
  CHECK(out == out2);
  CHECK(bn.running_mean == rm);
  CHECK(bn.running_var == rv);
}

TEST_CASE("batchnorm train mode rejects batch size 1") {
  BatchNorm bn("bn", 2);
  ParamBinder bind(nullptr);
  Tensor x(Shape{1, 2}, {1.0, 2.0});
  CHECK_THROWS_AS(bn.forward(bind, x, BnMode::Train), ValueError);
}

TEST_CASE("batchnorm gradients match finite differences") {
  BatchNorm bn("bn", 2);
  Parameter input("x", Shape{4, 2});
  randomize({&input}, 77, 1.5);
  bn.gamma.value = {1.3, 0.7};
  bn.beta.value = {0.2, -0.4};
  std::vector<Parameter*> params{&bn.gamma, &bn.beta, &input};
  auto eval = [&](bool with_grad) {
    // reset the running stats so every call sees identical state
    bn.running_mean.assign(2, 0.0);
    bn.running_var.assign(2, 1.0);
    Tape tape;
    ParamBinder bind(with_grad ? &tape : nullptr);
    Tensor out = sum(
        square(bn.forward(bind, bind(input), BnMode::Train)));
    if (with_grad) tape.backward(out);
    return out.item();
  };
  CHECK(finite_difference_check_params(eval, params, 1e-5) < 1e-4);
}

TEST_CASE("uniform initialization") {
  // fan_in = 100: every weight inside [-0.1, 0.1]
  {
    Parameter w("w", Shape{10, 100});
    Rng rng(5);
    init_uniform(w, 100, rng);
    for (double v : w.value) CHECK(std::abs(v) <= 0.1);
  }
  // same seed, bit-identical parameters
  {
    LinearLayer a("a", 7, 5), b("b", 7, 5);
    Rng r1(42), r2(42);
    a.init(r1);
    b.init(r2);
    CHECK(a.W.value == b.W.value);
  }
  // empirical variance of U[-0.1, 0.1]: (2 * 0.1)^2 / 12
  {
    Parameter w("w", Shape{100000});
    Rng rng(9);
    init_uniform(w, 100, rng);
    double m = 0.0, var = 0.0;
    for (double v : w.value) m += v;
    m /= static_cast<double>(w.value.size());
    for (double v : w.value) var += (v - m) * (v - m);
    var /= static_cast<double>(w.value.size());
    const double expect = 0.04 / 12.0;
    CHECK(var == doctest::Approx(expect).epsilon(0.05));
  }
}

TEST_CASE("parameter text checkpoints round-trip exactly") {
  GruCell cell("g", 3, 4);
  std::vector<Parameter*> params;
  cell.collect(params);
  randomize(params, 2024);

  std::stringstream ss;
  save_parameters(ss, params);

  GruCell other("g", 3, 4);
  std::vector<Parameter*> params2;
  other.collect(params2);
  load_parameters(ss, params2);
  for (size_t i = 0; i < params.size(); ++i)
    CHECK(params[i]->value == params2[i]->value);

  // wrong order is rejected by name
  std::stringstream ss2;
  save_parameters(ss2, params);
  std::vector<Parameter*> reversed(params2.rbegin(), params2.rend());
  CHECK_THROWS_AS(load_parameters(ss2, reversed), IoError);
}
