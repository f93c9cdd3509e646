#pragma once

#include <vector>

#include "deepssm/tensor.hpp"

namespace deepssm::opt {

using autodiff::Parameter;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam: p <- p - lr * m_hat / (sqrt(v_hat) + eps).
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg = {});

  void zero_grad();
  /// One update from the parameters' current grads. NaN or Inf in any
  /// gradient raises NumericError naming the parameter.
  void step();

  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  std::int64_t steps_taken() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<Vec> m_, v_;
  std::int64_t t_ = 0;
};

double global_grad_norm(const std::vector<Parameter*>& params);

/// Scales all grads by max_norm/norm when norm exceeds max_norm; never
/// changes the gradient direction. max_norm <= 0 disables clipping.
void clip_global_norm(const std::vector<Parameter*>& params, double max_norm);

}  // namespace deepssm::opt
