#include "deepssm/distributions.hpp"

#include <cmath>

namespace deepssm::dist {

using namespace autodiff;

Tensor make_sigma(const Tensor& raw) {
  return add_scalar(softplus(raw), kSigmaFloor);
}

DiagGaussian standard_normal(std::int64_t n) {
  return {Tensor::zeros(Shape{n}),
          Tensor(Shape{n}, Vec(static_cast<size_t>(n), 1.0))};
}

namespace {

void check_dims(const char* op, const Shape& a, const Shape& b) {
  // Either equal or one a trailing suffix of the other; the ops layer
  // enforces the details, this is an early readable failure.
  if (a.last() != b.last())
    throw ShapeError(std::string(op) + ": feature dimensions differ, " +
                     a.str() + " vs " + b.str());
}

}  // namespace

Tensor gaussian_log_prob(const DiagGaussian& p, const Tensor& y) {
  check_dims("gaussian_log_prob", p.mu.shape(), y.shape());
  Tensor resid = sub(y, p.mu);
  Tensor z2 = square(div(resid, p.sigma));
  Tensor per = sub(add_scalar(scale(z2, -0.5), -0.5 * kLogTwoPi),
                   log_(p.sigma));
  return sum_last(per);
}

Tensor gaussian_rsample(const DiagGaussian& p, Rng& rng) {
  // eps carries the broadcast shape so the sample has it too
  const Shape& shape = p.mu.numel() >= p.sigma.numel() ? p.mu.shape()
                                                       : p.sigma.shape();
  Vec eps(static_cast<size_t>(shape.numel()));
  rng.fill_normal(eps);
  return add(p.mu, mul(p.sigma, Tensor(shape, std::move(eps))));
}

Tensor gaussian_kl(const DiagGaussian& q, const DiagGaussian& p) {
  check_dims("gaussian_kl", q.mu.shape(), p.mu.shape());
  Tensor log_ratio = sub(log_(p.sigma), log_(q.sigma));
  Tensor num = add(square(q.sigma), square(sub(q.mu, p.mu)));
  Tensor frac = div(num, scale(square(p.sigma), 2.0));
  return sum_last(add_scalar(add(log_ratio, frac), -0.5));
}

Tensor log_softmax_last(const Tensor& logits) {
  Tensor lse = logsumexp_last(logits);
  if (lse.shape().ndim() == 0) return sub(logits, lse);
  return sub(logits, expand_last(lse, logits.shape().last()));
}

namespace {

std::int64_t gmm_K(const Gmm& p) {
  const auto K = static_cast<std::int64_t>(p.comps.size());
  if (K < 1) throw ValueError("gmm: no components");
  if (p.logits.shape().last() != K)
    throw ShapeError("gmm: logits last dim " +
                     std::to_string(p.logits.shape().last()) +
                     " != component count " + std::to_string(K));
  return K;
}

}  // namespace

Tensor gmm_log_prob(const Gmm& p, const Tensor& y) {
  const std::int64_t K = gmm_K(p);
  Tensor logw = log_softmax_last(p.logits);
  Tensor lp;  // (rows, K) component log-probabilities
  for (std::int64_t k = 0; k < K; ++k) {
    Tensor lk = gaussian_log_prob(p.comps[static_cast<size_t>(k)], y);
    Tensor col = reshape(lk, Shape{lk.numel(), 1});
    lp = (k == 0) ? col : concat_last(lp, col);
  }
  // logw is (rows,K) or (K); add broadcasts the shared-logits case
  Tensor out = logsumexp_last(
      add(lp, logw.numel() == lp.numel() ? reshape(logw, lp.shape()) : logw));
  // 1-D inputs produce a single row; collapse to a scalar
  if (y.shape().ndim() == 1) return reshape(out, Shape{});
  return out;
}

Tensor gmm_mixture_mean(const Gmm& p) {
  const std::int64_t K = gmm_K(p);
  Tensor w = exp_(log_softmax_last(p.logits));
  Tensor acc;
  for (std::int64_t k = 0; k < K; ++k) {
    const Tensor& mu = p.comps[static_cast<size_t>(k)].mu;
    Tensor wk = slice_last(w, k, k + 1);  // (..., 1)
    Tensor weight;
    if (mu.shape().ndim() == 2) {
      weight = expand_last(reshape(wk, Shape{wk.numel()}), mu.shape().last());
    } else {
      weight = reshape(wk, Shape{1});  // scalar broadcast over (y_dim)
    }
    Tensor term = mul(mu, weight);
    acc = (k == 0) ? term : add(acc, term);
  }
  return acc;
}

Vec gmm_sample(const Gmm& p, Rng& rng) {
  NoGradGuard no_grad;
  const std::int64_t K = gmm_K(p);
  Vec w = exp_(log_softmax_last(p.logits)).value();
  const std::int64_t rows =
      p.logits.shape().ndim() == 1 ? 1 : p.logits.shape().rows();
  const std::int64_t y_dim = p.comps[0].mu.shape().last();
  Vec out(static_cast<size_t>(rows * y_dim));
  for (std::int64_t r = 0; r < rows; ++r) {
    const double u = rng.uniform(0.0, 1.0);
    double cum = 0.0;
    std::int64_t pick = K - 1;
    for (std::int64_t k = 0; k < K; ++k) {
      cum += w[static_cast<size_t>(r * K + k)];
      if (u <= cum) {
        pick = k;
        break;
      }
    }
    const DiagGaussian& c = p.comps[static_cast<size_t>(pick)];
    const Vec& mu = c.mu.value();
    const Vec& sg = c.sigma.value();
    const std::int64_t mu_rows = c.mu.shape().ndim() == 1 ? 1 : c.mu.shape().rows();
    const std::int64_t off = (mu_rows == 1 ? 0 : r) * y_dim;
    for (std::int64_t j = 0; j < y_dim; ++j)
      out[static_cast<size_t>(r * y_dim + j)] =
          mu[static_cast<size_t>(off + j)] +
          sg[static_cast<size_t>(c.sigma.numel() == y_dim ? j : off + j)] *
              rng.normal();
  }
  return out;
}

}  // namespace deepssm::dist
