#include "deepssm/metrics.hpp"

#include <cmath>

namespace deepssm::eval {

double rmse(const Vec& yhat, const Vec& y) {
  if (yhat.size() != y.size())
    throw ShapeError("rmse: length mismatch, " + std::to_string(yhat.size()) +
                     " vs " + std::to_string(y.size()));
  if (y.empty()) throw ValueError("rmse: empty sequences");
  double ss = 0.0;
  for (size_t i = 0; i < y.size(); ++i) {
    const double d = yhat[i] - y[i];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(y.size()));
}

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;

double gaussian_logpdf(const double* mu, const double* sigma, const double* y,
                       std::int64_t dim) {
  double lp = 0.0;
  for (std::int64_t d = 0; d < dim; ++d) {
    const double z = (y[d] - mu[d]) / sigma[d];
    lp += -0.5 * kLogTwoPi - std::log(sigma[d]) - 0.5 * z * z;
  }
  return lp;
}

}  // namespace

double nll(const std::vector<model::OutputDist>& outputs, const Vec& y,
           std::int64_t y_dim) {
  const auto T = static_cast<std::int64_t>(outputs.size());
  if (static_cast<std::int64_t>(y.size()) != T * y_dim)
    throw ShapeError("nll: output/label length mismatch");
  if (T == 0) throw ValueError("nll: empty sequences");
  double total = 0.0;
  for (std::int64_t t = 0; t < T; ++t) {
    const model::OutputDist& od = outputs[static_cast<size_t>(t)];
    const double* yt = y.data() + t * y_dim;
    const size_t K = od.mu.size();
    if (K == 1) {
      total -= gaussian_logpdf(od.mu[0].data(), od.sigma[0].data(), yt, y_dim);
    } else {
      // log sum_k w_k N_k via log-sum-exp
      double m = -std::numeric_limits<double>::infinity();
      std::vector<double> terms(K);
      for (size_t k = 0; k < K; ++k) {
        terms[k] = std::log(od.weights[k]) +
                   gaussian_logpdf(od.mu[k].data(), od.sigma[k].data(), yt,
                                   y_dim);
        m = std::max(m, terms[k]);
      }
      double s = 0.0;
      for (double v : terms) s += std::exp(v - m);
      total -= m + std::log(s);
    }
  }
  return total / static_cast<double>(T);
}

EvalReport evaluate_open_loop(model::DeepSsm& m,
                              const data::SequenceDataset& test_raw,
                              const data::NormStats& stats,
                              std::uint64_t seed) {
  const model::ModelConfig& cfg = m.config();
  if (test_raw.u_dim != cfg.u_dim || test_raw.y_dim != cfg.y_dim)
    throw ShapeError(
        "evaluate_open_loop: dataset channel counts do not match the model");
  const std::int64_t T = test_raw.length();
  const std::int64_t yd = cfg.y_dim;

  // model runs in normalized units
  Vec u_norm(test_raw.u.size());
  for (std::int64_t t = 0; t < T; ++t)
    for (std::int64_t d = 0; d < cfg.u_dim; ++d) {
      const size_t i = static_cast<size_t>(t * cfg.u_dim + d);
      u_norm[i] = (test_raw.u[i] - stats.u_mean[static_cast<size_t>(d)]) /
                  stats.u_std[static_cast<size_t>(d)];
    }
  Rng rng(seed);
  model::Generation gen = m.generate(u_norm, T, rng);

  // denormalize every component: mu*std + mean, sigma*std
  std::vector<model::OutputDist> raw_outputs = std::move(gen.outputs);
  for (auto& od : raw_outputs)
    for (size_t k = 0; k < od.mu.size(); ++k)
      for (std::int64_t d = 0; d < yd; ++d) {
        const size_t c = static_cast<size_t>(d);
        od.mu[k][c] = od.mu[k][c] * stats.y_std[c] + stats.y_mean[c];
        od.sigma[k][c] *= stats.y_std[c];
      }

  EvalReport rep;
  rep.T = T;
  rep.seed = seed;
  rep.variant = model::variant_name(cfg.variant);
  rep.provenance = test_raw.provenance;
  Vec point(static_cast<size_t>(T * yd));
  rep.pred_mean.reserve(static_cast<size_t>(T));
  rep.pred_std.reserve(static_cast<size_t>(T));
  for (std::int64_t t = 0; t < T; ++t) {
    const model::OutputDist& od = raw_outputs[static_cast<size_t>(t)];
    Vec mean = od.point();
    Vec sd(static_cast<size_t>(yd));
    for (std::int64_t d = 0; d < yd; ++d) {
      // mixture variance: sum_k w (sigma^2 + mu^2) - mean^2
      double s = 0.0;
      for (size_t k = 0; k < od.mu.size(); ++k)
        s += od.weights[k] * (od.sigma[k][static_cast<size_t>(d)] *
                                  od.sigma[k][static_cast<size_t>(d)] +
                              od.mu[k][static_cast<size_t>(d)] *
                                  od.mu[k][static_cast<size_t>(d)]);
      sd[static_cast<size_t>(d)] = std::sqrt(std::max(
          0.0, s - mean[static_cast<size_t>(d)] * mean[static_cast<size_t>(d)]));
    }
    std::copy(mean.begin(), mean.end(),
              point.begin() + static_cast<std::ptrdiff_t>(t * yd));
    rep.pred_mean.push_back(std::move(mean));
    rep.pred_std.push_back(std::move(sd));
  }
  rep.rmse = rmse(point, test_raw.y);
  rep.nll = nll(raw_outputs, test_raw.y, yd);
  return rep;
}

void write_eval_csv(std::ostream& os, const EvalReport& r,
                    const model::ModelConfig& cfg) {
  os << "variant,h_dim,z_dim,n_layer,seed,T,rmse,nll,test_set\n";
  os.precision(17);
  os << r.variant << ',' << cfg.h_dim << ',' << cfg.z_dim << ','
     << cfg.n_layer << ',' << r.seed << ',' << r.T << ',' << r.rmse << ','
     << r.nll << ',' << r.provenance << '\n';
}

void write_steps_csv(std::ostream& os, const EvalReport& r,
                     const data::SequenceDataset& test_raw) {
  os << 't';
  for (std::int64_t d = 0; d < test_raw.u_dim; ++d) os << ",u" << d;
  for (std::int64_t d = 0; d < test_raw.y_dim; ++d) os << ",y" << d;
  for (std::int64_t d = 0; d < test_raw.y_dim; ++d) os << ",mu" << d;
  for (std::int64_t d = 0; d < test_raw.y_dim; ++d) os << ",sigma" << d;
  os << '\n';
  os.precision(17);
  for (std::int64_t t = 0; t < r.T; ++t) {
    os << (t + 1);
    for (std::int64_t d = 0; d < test_raw.u_dim; ++d)
      os << ',' << test_raw.u[static_cast<size_t>(t * test_raw.u_dim + d)];
    for (std::int64_t d = 0; d < test_raw.y_dim; ++d)
      os << ',' << test_raw.y[static_cast<size_t>(t * test_raw.y_dim + d)];
    for (std::int64_t d = 0; d < test_raw.y_dim; ++d)
      os << ',' << r.pred_mean[static_cast<size_t>(t)][static_cast<size_t>(d)];
    for (std::int64_t d = 0; d < test_raw.y_dim; ++d)
      os << ',' << r.pred_std[static_cast<size_t>(t)][static_cast<size_t>(d)];
    os << '\n';
  }
}

}  // namespace deepssm::eval
