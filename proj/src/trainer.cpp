#include "deepssm/trainer.hpp"

#include <algorithm>
#include <chrono>

namespace deepssm::train {

void TrainLoopConfig::validate() const {
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0))
    throw ValueError("plateau_factor must be in (0, 1)");
  if (chunk_length < 2) throw ValueError("chunk_length must be >= 2");
  if (plateau_patience < 1 || early_stop_patience < 1)
    throw ValueError("patience values must be >= 1");
  if (max_epochs < 1 || batch_size < 1)
    throw ValueError("max_epochs and batch_size must be >= 1");
  if (lr <= 0.0 || min_lr <= 0.0) throw ValueError("learning rates must be > 0");
}

void RunRecord::to_csv(std::ostream& os) const {
  os << "type,epoch,train_loss,val_loss,lr,stop_reason,best_epoch,best_val,"
        "test_rmse,test_nll,wall_seconds,seed\n";
  os.precision(17);
  for (const auto& e : epochs)
    os << "epoch," << e.epoch << ',' << e.train_loss << ',' << e.val_loss
       << ',' << e.lr << ",,,,,,,\n";
  os << "summary," << stop_epoch << ",,,," << stop_reason << ',' << best_epoch
     << ',' << best_val << ',' << test_rmse << ',' << test_nll << ','
     << wall_seconds << ',' << seed << '\n';
}

std::vector<model::SeqBatch> chunk_sequences(const data::SequenceDataset& ds,
                                             std::int64_t chunk_length,
                                             int batch_size, Rng& rng) {
  const std::int64_t T = ds.length();
  if (T < chunk_length)
    throw ValueError("dataset length " + std::to_string(T) +
                     " is shorter than one chunk (" +
                     std::to_string(chunk_length) + ")");
  const std::int64_t n_chunks = T / chunk_length;  // partial tail dropped
  std::vector<std::int64_t> starts(static_cast<size_t>(n_chunks));
  for (std::int64_t i = 0; i < n_chunks; ++i)
    starts[static_cast<size_t>(i)] = i * chunk_length;
  std::shuffle(starts.begin(), starts.end(), rng.engine());

  std::vector<model::SeqBatch> batches;
  for (std::int64_t first = 0; first < n_chunks; first += batch_size) {
    const std::int64_t B =
        std::min<std::int64_t>(batch_size, n_chunks - first);
    model::SeqBatch b;
    b.T = chunk_length;
    b.B = B;
    b.u_dim = ds.u_dim;
    b.y_dim = ds.y_dim;
    b.u.resize(static_cast<size_t>(chunk_length * B * ds.u_dim));
    b.y.resize(static_cast<size_t>(chunk_length * B * ds.y_dim));
    for (std::int64_t t = 0; t < chunk_length; ++t)
      for (std::int64_t j = 0; j < B; ++j) {
        const std::int64_t src = starts[static_cast<size_t>(first + j)] + t;
        for (std::int64_t d = 0; d < ds.u_dim; ++d)
          b.u[static_cast<size_t>((t * B + j) * ds.u_dim + d)] =
              ds.u[static_cast<size_t>(src * ds.u_dim + d)];
        for (std::int64_t d = 0; d < ds.y_dim; ++d)
          b.y[static_cast<size_t>((t * B + j) * ds.y_dim + d)] =
              ds.y[static_cast<size_t>(src * ds.y_dim + d)];
      }
    batches.push_back(std::move(b));
  }
  return batches;
}

model::SeqBatch full_batch(const data::SequenceDataset& ds) {
  model::SeqBatch b;
  b.T = ds.length();
  b.B = 1;
  b.u_dim = ds.u_dim;
  b.y_dim = ds.y_dim;
  b.u = ds.u;
  b.y = ds.y;
  return b;
}

DeepSsmTask::DeepSsmTask(model::DeepSsm& m, data::SequenceDataset train_norm,
                         data::SequenceDataset val_norm,
                         const TrainLoopConfig& cfg)
    : model_(m),
      train_(std::move(train_norm)),
      val_(full_batch(val_norm)),
      cfg_(cfg),
      val_seed_(derive_seed(cfg.seed, 0x5eedu)) {}

void DeepSsmTask::begin_epoch(int /*epoch*/, Rng& rng) {
  batches_ = chunk_sequences(train_, cfg_.chunk_length, cfg_.batch_size, rng);
}

Tensor DeepSsmTask::batch_loss(Tape& tape, int batch_index, Rng& rng) {
  model::ElboOptions opts;
  opts.train_mode = true;
  return model_
      .elbo_loss(&tape, batches_[static_cast<size_t>(batch_index)], rng, opts)
      .loss;
}

double DeepSsmTask::validation_loss() {
  // fixed noise draws across epochs so comparisons reflect parameters only
  Rng vrng(val_seed_);
  autodiff::NoGradGuard no_grad;
  return model_.elbo_loss(nullptr, val_, vrng, {}).loss.item();
}

RunRecord train(TrainTask& task, const TrainLoopConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.seed = cfg.seed;

  std::vector<Parameter*> params = task.parameters();
  opt::Adam adam(params, {.lr = cfg.lr});
  Rng rng(derive_seed(cfg.seed, 0x7261696eu));  // training stream

  std::vector<Vec> best_snap;
  int bad_epochs = 0, plateau_bad = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rec.stop_epoch = epoch;
    double train_loss = 0.0;
    bool aborted = false;
    try {
      task.begin_epoch(epoch, rng);
      const int nb = task.n_batches();
      for (int i = 0; i < nb; ++i) {
        adam.zero_grad();
        Tape tape;
        Tensor loss = task.batch_loss(tape, i, rng);
        tape.backward(loss);
        opt::clip_global_norm(params, cfg.grad_clip);
        adam.step();
        train_loss += loss.item();
      }
      train_loss /= std::max(1, nb);
    } catch (const NumericError&) {
      rec.stop_reason = "nan-abort";
      aborted = true;
    }
    if (aborted) break;

    const double val_loss = task.validation_loss();
    rec.epochs.push_back({epoch, train_loss, val_loss, adam.lr()});

    if (val_loss < rec.best_val) {
      rec.best_val = val_loss;
      rec.best_epoch = epoch;
      best_snap = task.snapshot();
      bad_epochs = 0;
      plateau_bad = 0;
    } else {
      ++bad_epochs;
      ++plateau_bad;
    }
    if (bad_epochs >= cfg.early_stop_patience) {
      rec.stop_reason = "early-stop";
      break;
    }
    if (plateau_bad >= cfg.plateau_patience) {
      const double next_lr = adam.lr() * cfg.plateau_factor;
      if (next_lr < cfg.min_lr) {
        rec.stop_reason = "lr-floor";
        break;
      }
      adam.set_lr(next_lr);
      plateau_bad = 0;
    }
  }
  if (rec.stop_reason.empty()) rec.stop_reason = "max-epochs";
  if (!best_snap.empty()) task.restore(best_snap);
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return rec;
}

}  // namespace deepssm::train
