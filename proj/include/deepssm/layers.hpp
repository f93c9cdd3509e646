#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "deepssm/ops.hpp"

namespace deepssm::nn {

using autodiff::NoGradGuard;
using autodiff::Parameter;
using autodiff::Shape;
using autodiff::Tape;
using autodiff::Tensor;

/// Per-pass cache that registers each parameter on the tape at most once.
/// With a null tape (or under NoGradGuard) parameters enter as detached
/// values and nothing is recorded.
class ParamBinder {
 public:
  explicit ParamBinder(Tape* tape) : tape_(tape) {}

  Tensor operator()(Parameter& p) {
    auto it = cache_.find(&p);
    if (it != cache_.end()) return it->second;
    Tensor t = (tape_ && !NoGradGuard::active())
                   ? tape_->leaf(p)
                   : Tensor(p.shape, p.value).detach();
    cache_.emplace(&p, t);
    return t;
  }

  Tape* tape() const { return tape_; }

 private:
  Tape* tape_;
  std::unordered_map<const Parameter*, Tensor> cache_;
};

/// Affine map y = W x + b with W stored (out_dim, in_dim).
struct LinearLayer {
  Parameter W, b;

  LinearLayer(const std::string& name, std::int64_t in, std::int64_t out)
      : W(name + ".W", Shape{out, in}), b(name + ".b", Shape{out}) {}

  std::int64_t in_dim() const { return W.shape.dims[1]; }
  std::int64_t out_dim() const { return W.shape.dims[0]; }

  Tensor forward(ParamBinder& bind, const Tensor& x);
  void init(Rng& rng);
  void collect(std::vector<Parameter*>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
};

/// Chain of linear layers with a fixed hidden activation (ReLU) between
/// them and none after the last.
struct Mlp {
  std::vector<LinearLayer> layers;

  Mlp(const std::string& name, const std::vector<std::int64_t>& dims);

  std::int64_t in_dim() const { return layers.front().in_dim(); }
  std::int64_t out_dim() const { return layers.back().out_dim(); }

  Tensor forward(ParamBinder& bind, const Tensor& x);
  void init(Rng& rng);
  void collect(std::vector<Parameter*>& out);
};

/// Gated recurrent unit cell with the convention
///   r  = sigmoid(W_r x + U_r h + b_r)
///   z  = sigmoid(W_z x + U_z h + b_z)
///   n  = tanh(W_n x + r .* (U_n h) + b_n)
///   h' = (1 - z) .* n + z .* h
struct GruCell {
  Parameter Wr, Ur, br, Wz, Uz, bz, Wn, Un, bn;
  std::int64_t input_dim, hidden_dim;

  GruCell(const std::string& name, std::int64_t in, std::int64_t hidden);

  Tensor step(ParamBinder& bind, const Tensor& h_prev, const Tensor& x);
  void init(Rng& rng);
  void collect(std::vector<Parameter*>& out);
};

/// Stacked GRU cells: layer k's output at time t is layer k+1's input at
/// the same time step. The stack's output is the top layer's state.
struct GruStack {
  std::vector<GruCell> cells;

  GruStack(const std::string& name, std::int64_t in, std::int64_t hidden,
           int n_layer);

  int n_layer() const { return static_cast<int>(cells.size()); }
  std::int64_t hidden_dim() const { return cells.front().hidden_dim; }

  /// Zero initial state for a batch of size B.
  std::vector<Tensor> zero_state(std::int64_t batch) const;
  std::vector<Tensor> step(ParamBinder& bind, const std::vector<Tensor>& state,
                           const Tensor& x);
  void init(Rng& rng);
  void collect(std::vector<Parameter*>& out);
};

enum class BnMode { Train, Eval };

/// Per-feature batch normalization over the batch (leading) axis.
/// Train mode normalizes by the batch statistics (batch size >= 2) and
/// updates the running statistics by exponential moving average; eval mode
/// uses the running statistics only.
struct BatchNorm {
  Parameter gamma, beta;
  Vec running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNorm(const std::string& name, std::int64_t features);

  Tensor forward(ParamBinder& bind, const Tensor& x, BnMode mode);
  void collect(std::vector<Parameter*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

/// Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights, zero biases.
void init_uniform(Parameter& weight, std::int64_t fan_in, Rng& rng);

/// Text checkpoint: one `param <name> <ndim> <dims...>` line followed by a
/// line of row-major values per parameter. Stable across versions.
void save_parameters(std::ostream& os,
                     const std::vector<Parameter*>& params);
void load_parameters(std::istream& is, const std::vector<Parameter*>& params);

}  // namespace deepssm::nn
