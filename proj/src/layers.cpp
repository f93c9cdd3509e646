#include "deepssm/layers.hpp"

#include <cmath>
#include <istream>
#include <ostream>

namespace deepssm::nn {

using namespace autodiff;

Tensor LinearLayer::forward(ParamBinder& bind, const Tensor& x) {
  return add(matmul_nt(x, bind(W)), bind(b));
}

void LinearLayer::init(Rng& rng) {
  init_uniform(W, in_dim(), rng);
  std::fill(b.value.begin(), b.value.end(), 0.0);
}

Mlp::Mlp(const std::string& name, const std::vector<std::int64_t>& dims) {
  if (dims.size() < 2) throw ValueError("Mlp needs at least one layer");
  for (size_t i = 0; i + 1 < dims.size(); ++i)
    layers.emplace_back(name + ".l" + std::to_string(i), dims[i], dims[i + 1]);
}

Tensor Mlp::forward(ParamBinder& bind, const Tensor& x) {
  Tensor h = x;
  for (size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(bind, h);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

void Mlp::init(Rng& rng) {
  for (auto& l : layers) l.init(rng);
}

void Mlp::collect(std::vector<Parameter*>& out) {
  for (auto& l : layers) l.collect(out);
}

GruCell::GruCell(const std::string& name, std::int64_t in, std::int64_t hidden)
    : Wr(name + ".Wr", Shape{hidden, in}),
      Ur(name + ".Ur", Shape{hidden, hidden}),
      br(name + ".br", Shape{hidden}),
      Wz(name + ".Wz", Shape{hidden, in}),
      Uz(name + ".Uz", Shape{hidden, hidden}),
      bz(name + ".bz", Shape{hidden}),
      Wn(name + ".Wn", Shape{hidden, in}),
      Un(name + ".Un", Shape{hidden, hidden}),
      bn(name + ".bn", Shape{hidden}),
      input_dim(in),
      hidden_dim(hidden) {}

Tensor GruCell::step(ParamBinder& bind, const Tensor& h_prev, const Tensor& x) {
  if (x.shape().last() != input_dim || h_prev.shape().last() != hidden_dim)
    throw ShapeError("gru_step: input " + x.shape().str() + " / state " +
                     h_prev.shape().str() + " do not match cell (" +
                     std::to_string(input_dim) + "," +
                     std::to_string(hidden_dim) + ")");
  Tensor r = sigmoid(
      add(add(matmul_nt(x, bind(Wr)), matmul_nt(h_prev, bind(Ur))), bind(br)));
  Tensor z = sigmoid(
      add(add(matmul_nt(x, bind(Wz)), matmul_nt(h_prev, bind(Uz))), bind(bz)));
  Tensor n = tanh_(add(
      add(matmul_nt(x, bind(Wn)), mul(r, matmul_nt(h_prev, bind(Un)))),
      bind(bn)));
  return add(mul(one_minus(z), n), mul(z, h_prev));
}

void GruCell::init(Rng& rng) {
  init_uniform(Wr, input_dim, rng);
  init_uniform(Ur, hidden_dim, rng);
  init_uniform(Wz, input_dim, rng);
  init_uniform(Uz, hidden_dim, rng);
  init_uniform(Wn, input_dim, rng);
  init_uniform(Un, hidden_dim, rng);
  for (Parameter* b : {&br, &bz, &bn})
    std::fill(b->value.begin(), b->value.end(), 0.0);
}

void GruCell::collect(std::vector<Parameter*>& out) {
  for (Parameter* p : {&Wr, &Ur, &br, &Wz, &Uz, &bz, &Wn, &Un, &bn})
    out.push_back(p);
}

GruStack::GruStack(const std::string& name, std::int64_t in,
                   std::int64_t hidden, int n_layer) {
  if (n_layer < 1) throw ValueError("GruStack needs n_layer >= 1");
  for (int k = 0; k < n_layer; ++k)
    cells.emplace_back(name + ".l" + std::to_string(k), k == 0 ? in : hidden,
                       hidden);
}

std::vector<Tensor> GruStack::zero_state(std::int64_t batch) const {
  std::vector<Tensor> s;
  s.reserve(cells.size());
  for (size_t k = 0; k < cells.size(); ++k)
    s.push_back(Tensor::zeros(Shape{batch, cells[k].hidden_dim}));
  return s;
}

std::vector<Tensor> GruStack::step(ParamBinder& bind,
                                   const std::vector<Tensor>& state,
                                   const Tensor& x) {
  std::vector<Tensor> next;
  next.reserve(cells.size());
  Tensor inp = x;
  for (size_t k = 0; k < cells.size(); ++k) {
    next.push_back(cells[k].step(bind, state[k], inp));
    inp = next.back();
  }
  return next;
}

void GruStack::init(Rng& rng) {
  for (auto& c : cells) c.init(rng);
}

void GruStack::collect(std::vector<Parameter*>& out) {
  for (auto& c : cells) c.collect(out);
}

BatchNorm::BatchNorm(const std::string& name, std::int64_t features)
    : gamma(name + ".gamma", Shape{features}),
      beta(name + ".beta", Shape{features}),
      running_mean(static_cast<size_t>(features), 0.0),
      running_var(static_cast<size_t>(features), 1.0) {
  std::fill(gamma.value.begin(), gamma.value.end(), 1.0);
}

Tensor BatchNorm::forward(ParamBinder& bind, const Tensor& x, BnMode mode) {
  if (x.shape().ndim() != 2)
    throw ShapeError("batchnorm expects a 2-D batch, got " + x.shape().str());
  const std::int64_t batch = x.shape().dims[0];
  const std::int64_t f = x.shape().dims[1];
  if (f != gamma.shape.numel())
    throw ShapeError("batchnorm feature count mismatch: batch has " +
                     std::to_string(f) + ", layer has " +
                     std::to_string(gamma.shape.numel()));
  Tensor xn;
  if (mode == BnMode::Train) {
    if (batch < 2)
      throw ValueError(
          "batchnorm in train mode needs batch size >= 2 "
          "(zero-variance normalization)");
    Tensor mu = mean_axis0(x);
    Tensor xc = sub(x, mu);
    Tensor var = mean_axis0(square(xc));
    xn = div(xc, sqrt_(add_scalar(var, eps)));
    // running statistics track the unbiased batch variance
    const Vec& mv = mu.value();
    const Vec& vv = var.value();
    const double unbias =
        static_cast<double>(batch) / static_cast<double>(batch - 1);
    for (std::int64_t j = 0; j < f; ++j) {
      running_mean[static_cast<size_t>(j)] =
          (1.0 - momentum) * running_mean[static_cast<size_t>(j)] +
          momentum * mv[static_cast<size_t>(j)];
      running_var[static_cast<size_t>(j)] =
          (1.0 - momentum) * running_var[static_cast<size_t>(j)] +
          momentum * unbias * vv[static_cast<size_t>(j)];
    }
  } else {
    Vec inv_std(static_cast<size_t>(f));
    for (std::int64_t j = 0; j < f; ++j)
      inv_std[static_cast<size_t>(j)] =
          1.0 / std::sqrt(running_var[static_cast<size_t>(j)] + eps);
    Tensor rm(Shape{f}, running_mean);
    Tensor is(Shape{f}, inv_std);
    xn = mul(sub(x, rm), is);
  }
  return add(mul(xn, bind(gamma)), bind(beta));
}

void init_uniform(Parameter& weight, std::int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& w : weight.value) w = rng.uniform(-bound, bound);
}

void save_parameters(std::ostream& os, const std::vector<Parameter*>& params) {
  os.precision(17);
  for (const Parameter* p : params) {
    os << "param " << p->name << ' ' << p->shape.ndim();
    for (auto d : p->shape.dims) os << ' ' << d;
    os << '\n';
    for (size_t i = 0; i < p->value.size(); ++i)
      os << (i ? " " : "") << p->value[i];
    os << '\n';
  }
}

void load_parameters(std::istream& is, const std::vector<Parameter*>& params) {
  for (Parameter* p : params) {
    std::string tag, name;
    int ndim = 0;
    if (!(is >> tag >> name >> ndim) || tag != "param")
      throw IoError("checkpoint: expected 'param' entry for " + p->name);
    if (name != p->name)
      throw IoError("checkpoint: expected parameter " + p->name + ", found " +
                    name);
    Shape s;
    for (int i = 0; i < ndim; ++i) {
      std::int64_t d;
      if (!(is >> d)) throw IoError("checkpoint: truncated shape for " + name);
      s.dims.push_back(d);
    }
    if (s != p->shape)
      throw IoError("checkpoint: shape mismatch for " + name + ": file has " +
                    s.str() + ", model has " + p->shape.str());
    for (double& v : p->value)
      if (!(is >> v)) throw IoError("checkpoint: truncated values for " + name);
  }
}

}  // namespace deepssm::nn
