#pragma once

#include <optional>
#include <string>
#include <vector>

#include "deepssm/distributions.hpp"
#include "deepssm/layers.hpp"

namespace deepssm::model {

using autodiff::Parameter;
using autodiff::Shape;
using autodiff::Tape;
using autodiff::Tensor;

enum class Variant { VaeRnn, VrnnGauss, VrnnGaussI, VrnnGmm, VrnnGmmI, Storn };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);  // error lists all six
bool is_gmm(Variant v);
bool has_dynamic_prior(Variant v);  // VAE-RNN, VRNN-Gauss, VRNN-GMM

struct ModelConfig {
  Variant variant = Variant::Storn;
  int u_dim = 1;
  int y_dim = 1;
  int h_dim = 60;
  int z_dim = 5;
  int n_layer = 1;
  int mixtures = 5;  // GMM variants only
  bool batchnorm = false;
  int mc_samples = 1;

  void validate() const;
};

/// Batch of equally long sequences, time-major storage (T, B, dim).
struct SeqBatch {
  std::int64_t T = 0, B = 0, u_dim = 0, y_dim = 0;
  Vec u, y;

  Tensor u_at(std::int64_t t) const;  // (B, u_dim), detached
  Tensor y_at(std::int64_t t) const;
};

/// Distribution triple produced at one time step.
struct StepDistributions {
  dist::DiagGaussian prior;
  dist::DiagGaussian posterior;
  std::optional<dist::DiagGaussian> out_gauss;
  std::optional<dist::Gmm> out_gmm;
};

struct ElboResult {
  Tensor loss;          // scalar: negative ELBO per time step, batch mean
  double recon = 0.0;   // diagnostics, per-step batch means
  double kl = 0.0;
  std::vector<double> per_step_loss;       // kl_t - recon_t
  std::vector<StepDistributions> steps;    // filled when keep_steps is set
};

struct ElboOptions {
  bool train_mode = false;  // batch-norm statistics mode
  bool keep_steps = false;
};

/// Detached per-step output distribution from an open-loop rollout.
/// Gaussian variants have a single component with weight 1.
struct OutputDist {
  std::vector<Vec> mu;     // K x y_dim
  std::vector<Vec> sigma;  // K x y_dim
  Vec weights;             // K, sums to 1

  Vec point() const;  // mixture mean: the paper's point prediction
};

struct Generation {
  std::vector<OutputDist> outputs;  // length T
  Vec sampled_y;                    // (T, y_dim)
};

/// One of the six deep state-space models. Inference and generation share
/// the generative parameters (decoder, prior, recurrence); the encoder
/// side is used only when conditioning on measured outputs.
class DeepSsm {
 public:
  explicit DeepSsm(ModelConfig cfg);

  void init_params(Rng& rng);
  const ModelConfig& config() const { return cfg_; }

  std::vector<Parameter*> parameters();
  std::int64_t count_parameters();

  /// Negative ELBO per time step (Eq.-(10)-style sum over steps divided by
  /// T, averaged over the batch). Expectations use cfg.mc_samples
  /// independent reparameterized rollouts.
  ElboResult elbo_loss(Tape* tape, const SeqBatch& batch, Rng& rng,
                       const ElboOptions& opts = {});

  /// `n` independent single-sample per-step ELBO estimates on one
  /// sequence; used for Monte-Carlo error bars. No gradients.
  std::vector<double> elbo_samples(const SeqBatch& batch, Rng& rng, int n);

  /// Open-loop rollout: latent drawn from the prior, recurrence fed with
  /// prior samples, no access to measured outputs. u is (T, u_dim).
  Generation generate(const Vec& u, std::int64_t T, Rng& rng);

  /// Copy of all parameter values, restorable with restore().
  std::vector<Vec> snapshot();
  void restore(const std::vector<Vec>& snap);

 private:
  struct StepState;
  ElboResult elbo_single(Tape* tape, const SeqBatch& batch, Rng& rng,
                         const ElboOptions& opts);
  Tensor features_u(nn::ParamBinder& bind, const Tensor& u, bool train);
  Tensor features_y(nn::ParamBinder& bind, const Tensor& y, bool train);
  Tensor features_z(nn::ParamBinder& bind, const Tensor& z, bool train);
  dist::DiagGaussian gaussian_head(nn::ParamBinder& bind, nn::Mlp& net,
                                   const Tensor& x, std::int64_t dim);
  dist::Gmm gmm_head(nn::ParamBinder& bind, const Tensor& x);
  StepDistributions run_step(nn::ParamBinder& bind, StepState& st,
                             const Tensor& u_t, const Tensor* y_t, Rng& rng,
                             bool train);

  ModelConfig cfg_;
  nn::Mlp feat_u_, feat_y_, feat_z_;
  std::optional<nn::BatchNorm> bn_u_, bn_y_, bn_z_;
  nn::GruStack rnn_;
  std::optional<nn::GruStack> rnn_inf_;  // STORN's forward inference RNN
  nn::Mlp encoder_;
  std::optional<nn::Mlp> prior_net_;
  nn::Mlp decoder_;
};

/// Exact trainable parameter count for a configuration.
std::int64_t count_parameters(const ModelConfig& cfg);

/// Checkpoint = JSON header line (config + optional user metadata) +
/// parameter listing in the neural-layers text format.
void save_checkpoint(const std::string& path, DeepSsm& model,
                     const std::string& meta_json = "{}");
struct LoadedCheckpoint {
  DeepSsm model;
  std::string meta_json;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& json_text);

}  // namespace deepssm::model
