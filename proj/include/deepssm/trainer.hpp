#pragma once

#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "deepssm/datasets.hpp"
#include "deepssm/models.hpp"
#include "deepssm/optimizer.hpp"

namespace deepssm::train {

using autodiff::Parameter;
using autodiff::Tape;
using autodiff::Tensor;

struct TrainLoopConfig {
  double lr = 1e-3;
  double plateau_factor = 0.5;
  int plateau_patience = 5;
  double min_lr = 1e-6;
  int early_stop_patience = 15;
  int max_epochs = 300;
  int batch_size = 64;
  std::int64_t chunk_length = 64;
  double grad_clip = 10.0;  // global-norm clip; <= 0 disables
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct RunRecord {
  std::vector<EpochRecord> epochs;
  std::string stop_reason;  // early-stop | max-epochs | lr-floor | nan-abort
  int stop_epoch = 0;
  int best_epoch = -1;
  double best_val = std::numeric_limits<double>::infinity();
  double wall_seconds = 0.0;
  double test_rmse = std::numeric_limits<double>::quiet_NaN();
  double test_nll = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
  std::string config_json;  // snapshot of the run configuration

  /// One CSV row per epoch plus a summary row.
  void to_csv(std::ostream& os) const;
};

/// What the training loop needs from a model. The same loop drives the
/// deep SSMs and the plain regression task used in the sanity tests.
class TrainTask {
 public:
  virtual ~TrainTask() = default;
  virtual std::vector<Parameter*> parameters() = 0;
  /// Prepare this epoch's batches (shuffling through rng).
  virtual void begin_epoch(int epoch, Rng& rng) = 0;
  virtual int n_batches() const = 0;
  virtual Tensor batch_loss(Tape& tape, int batch_index, Rng& rng) = 0;
  /// Full-validation objective, gradient-free.
  virtual double validation_loss() = 0;
  virtual std::vector<Vec> snapshot() = 0;
  virtual void restore(const std::vector<Vec>& snap) = 0;
};

/// Adam epochs with plateau lr decay and early stopping; restores the
/// best-validation snapshot before returning.
RunRecord train(TrainTask& task, const TrainLoopConfig& cfg);

/// Non-overlapping contiguous chunks of a sequence dataset, shuffled and
/// stacked into batches. The final partial chunk is dropped; each chunk
/// restarts from h_0 = 0 (no state carry).
std::vector<model::SeqBatch> chunk_sequences(const data::SequenceDataset& ds,
                                             std::int64_t chunk_length,
                                             int batch_size, Rng& rng);

/// Whole sequence as a single batch (B = 1).
model::SeqBatch full_batch(const data::SequenceDataset& ds);

/// Training task for a deep SSM on normalized train/validation sequences.
class DeepSsmTask : public TrainTask {
 public:
  DeepSsmTask(model::DeepSsm& m, data::SequenceDataset train_norm,
              data::SequenceDataset val_norm, const TrainLoopConfig& cfg);

  std::vector<Parameter*> parameters() override { return model_.parameters(); }
  void begin_epoch(int epoch, Rng& rng) override;
  int n_batches() const override { return static_cast<int>(batches_.size()); }
  Tensor batch_loss(Tape& tape, int batch_index, Rng& rng) override;
  double validation_loss() override;
  std::vector<Vec> snapshot() override { return model_.snapshot(); }
  void restore(const std::vector<Vec>& snap) override { model_.restore(snap); }

 private:
  model::DeepSsm& model_;
  data::SequenceDataset train_;
  model::SeqBatch val_;
  TrainLoopConfig cfg_;
  std::vector<model::SeqBatch> batches_;
  std::uint64_t val_seed_;
};

}  // namespace deepssm::train
