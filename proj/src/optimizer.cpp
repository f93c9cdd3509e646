#include "deepssm/optimizer.hpp"

#include <cmath>

namespace deepssm::opt {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Adam::step() {
  for (const Parameter* p : params_)
    for (double g : p->grad)
      if (!std::isfinite(g))
        throw NumericError("non-finite gradient in parameter " + p->name);
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    Vec &m = m_[i], &v = v_[i];
    for (size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p.value[j] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

double global_grad_norm(const std::vector<Parameter*>& params) {
  double ss = 0.0;
  for (const Parameter* p : params)
    for (double g : p->grad) ss += g * g;
  return std::sqrt(ss);
}

void clip_global_norm(const std::vector<Parameter*>& params, double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = global_grad_norm(params);
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (Parameter* p : params)
    for (double& g : p->grad) g *= s;
}

}  // namespace deepssm::opt
