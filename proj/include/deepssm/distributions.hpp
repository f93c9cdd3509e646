#pragma once

#include <vector>

#include "deepssm/ops.hpp"

// Diagonal Gaussian and Gaussian-mixture heads. Parameters are tensors so
// log-densities, reparameterized samples and KL terms are differentiable.
// Batched convention: parameter tensors are (B, n) or (n); log-densities
// reduce the last (feature) axis.

namespace deepssm::dist {

using autodiff::Shape;
using autodiff::Tensor;

inline constexpr double kSigmaFloor = 1e-4;
inline constexpr double kLogTwoPi = 1.8378770664093453;  // ln(2*pi)

struct DiagGaussian {
  Tensor mu;
  Tensor sigma;  // strictly positive, see make_sigma
};

/// sigma = softplus(raw) + floor; keeps the scale strictly positive and
/// the NLL bounded when a decoder collapses.
Tensor make_sigma(const Tensor& raw);

/// Standard normal prior of dimension n (constants).
DiagGaussian standard_normal(std::int64_t n);

/// sum_i [ -0.5 ln(2 pi) - ln sigma_i - (y_i - mu_i)^2 / (2 sigma_i^2) ],
/// reduced over the last axis.
Tensor gaussian_log_prob(const DiagGaussian& p, const Tensor& y);

/// mu + sigma .* eps with eps ~ N(0, I); gradients flow to mu and sigma.
Tensor gaussian_rsample(const DiagGaussian& p, Rng& rng);

/// KL(q || p) for diagonal Gaussians, reduced over the last axis.
Tensor gaussian_kl(const DiagGaussian& q, const DiagGaussian& p);

struct Gmm {
  std::vector<DiagGaussian> comps;
  Tensor logits;  // (B, K) or (K); weights are softmax(logits)
};

Tensor log_softmax_last(const Tensor& logits);

/// log sum_k w_k N(y | mu_k, sigma_k) via log-sum-exp.
Tensor gmm_log_prob(const Gmm& p, const Tensor& y);

/// sum_k w_k mu_k.
Tensor gmm_mixture_mean(const Gmm& p);

/// Ancestral sample: component index from softmax(logits), then a draw
/// from that component. Values only; generation never differentiates
/// through the categorical draw.
Vec gmm_sample(const Gmm& p, Rng& rng);

}  // namespace deepssm::dist
