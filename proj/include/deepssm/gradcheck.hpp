#pragma once

#include <cmath>
#include <functional>
#include <span>

#include "deepssm/ops.hpp"

// Central finite-difference oracle for gradient verification. Independent
// of the backward pass by construction: the numeric side only ever calls
// the forward function. Callers must make the function deterministic
// (freeze any noise draws) before checking.

namespace deepssm::autodiff {

/// Max over coordinates of |analytic - central| / max(1, |central|) for a
/// scalar function of a single tensor.
/// `f(tape, x)` must return a scalar tensor; `tape` is null for the
/// numeric evaluations, which run with gradients disabled.
inline double finite_difference_check(
    const std::function<Tensor(Tape*, const Tensor&)>& f, const Tensor& x0,
    double step) {
  Parameter px("gradcheck_x", x0.shape());
  px.value = x0.value();

  Tape tape;
  Tensor y = f(&tape, tape.leaf(px));
  tape.backward(y);
  Vec analytic = px.grad;

  double max_err = 0.0;
  Vec x = x0.value();
  for (size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    double fp, fm;
    {
      NoGradGuard no_grad;
      x[i] = saved + step;
      fp = f(nullptr, Tensor(x0.shape(), x)).item();
      x[i] = saved - step;
      fm = f(nullptr, Tensor(x0.shape(), x)).item();
      x[i] = saved;
    }
    const double numeric = (fp - fm) / (2.0 * step);
    const double err =
        std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

/// Same oracle for a scalar loss of registered parameters.
/// `eval(with_grad)` recomputes the loss from the parameters' current
/// values; when `with_grad` is set it must also run backward so the
/// parameter grads hold the analytic gradient (grads are zeroed here).
inline double finite_difference_check_params(
    const std::function<double(bool)>& eval, std::span<Parameter*> params,
    double step) {
  for (Parameter* p : params) p->zero_grad();
  eval(true);
  std::vector<Vec> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  double max_err = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    for (size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      double fp, fm;
      {
        NoGradGuard no_grad;
        p.value[i] = saved + step;
        fp = eval(false);
        p.value[i] = saved - step;
        fm = eval(false);
        p.value[i] = saved;
      }
      const double numeric = (fp - fm) / (2.0 * step);
      const double err = std::abs(analytic[pi][i] - numeric) /
                         std::max(1.0, std::abs(numeric));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace deepssm::autodiff
