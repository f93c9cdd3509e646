#pragma once

#include <ostream>
#include <string>

#include "deepssm/datasets.hpp"
#include "deepssm/models.hpp"

namespace deepssm::eval {

/// sqrt((1/T) sum_t |yhat_t - y_t|^2), flat (T, dim) arrays.
double rmse(const Vec& yhat, const Vec& y);

/// Average per-step negative log-likelihood of y under the per-step
/// output distributions (mixture likelihood for GMM heads).
double nll(const std::vector<model::OutputDist>& outputs, const Vec& y,
           std::int64_t y_dim);

struct EvalReport {
  double rmse = 0.0;
  double nll = 0.0;  // per time step, raw units
  std::int64_t T = 0;
  // denormalized per-step summaries (mixture mean and std per channel)
  std::vector<Vec> pred_mean;
  std::vector<Vec> pred_std;
  std::string variant;
  std::string provenance;
  std::uint64_t seed = 0;
};

/// Open-loop evaluation: normalizes the test input with the training
/// statistics, rolls the generative model from h_0 = 0, denormalizes the
/// predictions and computes both metrics in raw units.
EvalReport evaluate_open_loop(model::DeepSsm& m,
                              const data::SequenceDataset& test_raw,
                              const data::NormStats& stats,
                              std::uint64_t seed);

/// Single summary row (with header).
void write_eval_csv(std::ostream& os, const EvalReport& r,
                    const model::ModelConfig& cfg);
/// Per-step t,u...,y...,mu...,sigma... rows for plotting.
void write_steps_csv(std::ostream& os, const EvalReport& r,
                     const data::SequenceDataset& test_raw);

}  // namespace deepssm::eval
