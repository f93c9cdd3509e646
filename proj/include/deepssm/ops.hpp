#pragma once

#include "deepssm/tensor.hpp"

// Primitive differentiable operations. Each one validates shapes, computes
// the forward value through the kernels, and (when an operand lives on a
// tape and gradients are enabled) records its backward rule.
//
// Binary elementwise ops broadcast over leading axes: operands must have
// equal shapes, or one side must be a scalar or a trailing suffix of the
// other's shape. The gradient of a broadcast operand is the sum over the
// broadcast axes.

namespace deepssm::autodiff {

// matrix products (2-D)
Tensor matmul(const Tensor& a, const Tensor& b);     // (m,k)x(k,n) -> (m,n)
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // (m,k)x(n,k)^T -> (m,n)

// elementwise with suffix broadcasting
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

// structure
Tensor concat_last(const Tensor& a, const Tensor& b);
Tensor slice_last(const Tensor& a, std::int64_t lo, std::int64_t hi);
Tensor reshape(const Tensor& a, Shape shape);

// elementwise nonlinearities
Tensor sigmoid(const Tensor& a);
Tensor tanh_(const Tensor& a);
Tensor exp_(const Tensor& a);
Tensor log_(const Tensor& a);   // DomainError on negative input
Tensor sqrt_(const Tensor& a);  // DomainError on negative input
Tensor softplus(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);

// reductions
Tensor sum(const Tensor& a);   // -> scalar
Tensor mean(const Tensor& a);  // -> scalar
Tensor sum_last(const Tensor& a);
Tensor logsumexp_last(const Tensor& a);
Tensor mean_axis0(const Tensor& a);  // (B,F) -> (F)

inline Tensor one_minus(const Tensor& x) { return add_scalar(neg(x), 1.0); }

/// (R) -> (R,cols), every column a copy. Differentiable.
inline Tensor expand_last(const Tensor& x, std::int64_t cols) {
  Tensor col = reshape(x, Shape{x.numel(), 1});
  Tensor ones(Shape{1, cols}, Vec(static_cast<size_t>(cols), 1.0));
  return matmul(col, ones);
}

}  // namespace deepssm::autodiff
