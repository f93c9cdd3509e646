#include "deepssm/models.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace deepssm::model {

using namespace autodiff;
using dist::DiagGaussian;
using dist::Gmm;

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::VaeRnn: return "VAE-RNN";
    case Variant::VrnnGauss: return "VRNN-Gauss";
    case Variant::VrnnGaussI: return "VRNN-Gauss-I";
    case Variant::VrnnGmm: return "VRNN-GMM";
    case Variant::VrnnGmmI: return "VRNN-GMM-I";
    case Variant::Storn: return "STORN";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::VaeRnn, Variant::VrnnGauss, Variant::VrnnGaussI,
                    Variant::VrnnGmm, Variant::VrnnGmmI, Variant::Storn})
    if (name == variant_name(v)) return v;
  throw ValueError(
      "unknown model variant '" + name +
      "'; expected one of VAE-RNN, VRNN-Gauss, VRNN-Gauss-I, VRNN-GMM, "
      "VRNN-GMM-I, STORN");
}

bool is_gmm(Variant v) {
  return v == Variant::VrnnGmm || v == Variant::VrnnGmmI;
}

bool has_dynamic_prior(Variant v) {
  return v == Variant::VaeRnn || v == Variant::VrnnGauss ||
         v == Variant::VrnnGmm;
}

namespace {

bool is_vrnn(Variant v) {
  return v == Variant::VrnnGauss || v == Variant::VrnnGaussI ||
         v == Variant::VrnnGmm || v == Variant::VrnnGmmI;
}

}  // namespace

void ModelConfig::validate() const {
  if (u_dim < 1 || y_dim < 1 || h_dim < 1 || z_dim < 1 || n_layer < 1)
    throw ValueError("model dimensions must all be >= 1");
  if (mc_samples < 1) throw ValueError("mc_samples must be >= 1");
  if (is_gmm(variant) && mixtures < 1)
    throw ValueError("GMM variants need mixtures >= 1");
}

Tensor SeqBatch::u_at(std::int64_t t) const {
  Vec v(u.begin() + t * B * u_dim, u.begin() + (t + 1) * B * u_dim);
  return Tensor(Shape{B, u_dim}, std::move(v));
}

Tensor SeqBatch::y_at(std::int64_t t) const {
  Vec v(y.begin() + t * B * y_dim, y.begin() + (t + 1) * B * y_dim);
  return Tensor(Shape{B, y_dim}, std::move(v));
}

Vec OutputDist::point() const {
  Vec p(mu[0].size(), 0.0);
  for (size_t k = 0; k < mu.size(); ++k)
    for (size_t j = 0; j < p.size(); ++j) p[j] += weights[k] * mu[k][j];
  return p;
}

// Layer widths per variant (encoder/decoder 3 linear layers, feature
// extractors 2, prior network 2; all hidden widths h_dim):
//   feat_u : u -> h -> h              feat_y : y -> h -> h
//   feat_z : z -> h -> h
//   rnn    : input h (VAE-RNN) or 2h (others), hidden h, n_layer deep
//   rnn_inf: STORN only, input h, hidden h, n_layer deep
//   enc    : 2h -> h -> h -> 2z
//   prior  : h -> h -> 2z             (dynamic-prior variants only)
//   dec    : in -> h -> h -> out, in = h (VAE-RNN: phi_z; STORN: h_t)
//            or 2h (VRNN: [phi_z, h_t]); out = 2y or K*2y+K
DeepSsm::DeepSsm(ModelConfig cfg)
    : cfg_((cfg.validate(), cfg)),
      feat_u_("feat_u", {cfg.u_dim, cfg.h_dim, cfg.h_dim}),
      feat_y_("feat_y", {cfg.y_dim, cfg.h_dim, cfg.h_dim}),
      feat_z_("feat_z", {cfg.z_dim, cfg.h_dim, cfg.h_dim}),
      rnn_("rnn", cfg.variant == Variant::VaeRnn ? cfg.h_dim : 2 * cfg.h_dim,
           cfg.h_dim, cfg.n_layer),
      encoder_("enc", {2 * cfg.h_dim, cfg.h_dim, cfg.h_dim, 2 * cfg.z_dim}),
      decoder_("dec",
               {is_vrnn(cfg.variant) ? 2 * cfg.h_dim : cfg.h_dim, cfg.h_dim,
                cfg.h_dim,
                is_gmm(cfg.variant) ? cfg.mixtures * 2 * cfg.y_dim + cfg.mixtures
                                    : 2 * cfg.y_dim}) {
  if (cfg.batchnorm) {
    bn_u_.emplace("bn_u", cfg.h_dim);
    bn_y_.emplace("bn_y", cfg.h_dim);
    bn_z_.emplace("bn_z", cfg.h_dim);
  }
  if (cfg.variant == Variant::Storn)
    rnn_inf_.emplace("rnn_inf", cfg.h_dim, cfg.h_dim, cfg.n_layer);
  if (has_dynamic_prior(cfg.variant))
    prior_net_.emplace("prior", std::vector<std::int64_t>{cfg.h_dim, cfg.h_dim,
                                                          2 * cfg.z_dim});
}

std::vector<Parameter*> DeepSsm::parameters() {
  std::vector<Parameter*> out;
  feat_u_.collect(out);
  feat_y_.collect(out);
  feat_z_.collect(out);
  if (bn_u_) bn_u_->collect(out);
  if (bn_y_) bn_y_->collect(out);
  if (bn_z_) bn_z_->collect(out);
  rnn_.collect(out);
  if (rnn_inf_) rnn_inf_->collect(out);
  if (prior_net_) prior_net_->collect(out);
  encoder_.collect(out);
  decoder_.collect(out);
  return out;
}

void DeepSsm::init_params(Rng& rng) {
  feat_u_.init(rng);
  feat_y_.init(rng);
  feat_z_.init(rng);
  rnn_.init(rng);
  if (rnn_inf_) rnn_inf_->init(rng);
  if (prior_net_) prior_net_->init(rng);
  encoder_.init(rng);
  decoder_.init(rng);
}

std::int64_t DeepSsm::count_parameters() {
  std::int64_t n = 0;
  for (const Parameter* p : parameters()) n += p->shape.numel();
  return n;
}

std::int64_t count_parameters(const ModelConfig& cfg) {
  DeepSsm m(cfg);
  return m.count_parameters();
}

std::vector<Vec> DeepSsm::snapshot() {
  std::vector<Vec> snap;
  for (Parameter* p : parameters()) snap.push_back(p->value);
  for (auto* bn : {&bn_u_, &bn_y_, &bn_z_})
    if (*bn) {
      snap.push_back((*bn)->running_mean);
      snap.push_back((*bn)->running_var);
    }
  return snap;
}

void DeepSsm::restore(const std::vector<Vec>& snap) {
  size_t i = 0;
  for (Parameter* p : parameters()) p->value = snap.at(i++);
  for (auto* bn : {&bn_u_, &bn_y_, &bn_z_})
    if (*bn) {
      (*bn)->running_mean = snap.at(i++);
      (*bn)->running_var = snap.at(i++);
    }
}

// ------------------------------------------------------------------ heads

Tensor DeepSsm::features_u(nn::ParamBinder& bind, const Tensor& u, bool train) {
  Tensor f = feat_u_.forward(bind, u);
  if (bn_u_) f = bn_u_->forward(bind, f, train ? nn::BnMode::Train : nn::BnMode::Eval);
  return f;
}

Tensor DeepSsm::features_y(nn::ParamBinder& bind, const Tensor& y, bool train) {
  Tensor f = feat_y_.forward(bind, y);
  if (bn_y_) f = bn_y_->forward(bind, f, train ? nn::BnMode::Train : nn::BnMode::Eval);
  return f;
}

Tensor DeepSsm::features_z(nn::ParamBinder& bind, const Tensor& z, bool train) {
  Tensor f = feat_z_.forward(bind, z);
  if (bn_z_) f = bn_z_->forward(bind, f, train ? nn::BnMode::Train : nn::BnMode::Eval);
  return f;
}

DiagGaussian DeepSsm::gaussian_head(nn::ParamBinder& bind, nn::Mlp& net,
                                    const Tensor& x, std::int64_t dim) {
  Tensor out = net.forward(bind, x);
  return {slice_last(out, 0, dim),
          dist::make_sigma(slice_last(out, dim, 2 * dim))};
}

Gmm DeepSsm::gmm_head(nn::ParamBinder& bind, const Tensor& x) {
  Tensor out = decoder_.forward(bind, x);
  const std::int64_t K = cfg_.mixtures, y = cfg_.y_dim;
  Gmm g;
  for (std::int64_t k = 0; k < K; ++k) {
    const std::int64_t base = k * 2 * y;
    g.comps.push_back({slice_last(out, base, base + y),
                       dist::make_sigma(slice_last(out, base + y, base + 2 * y))});
  }
  g.logits = slice_last(out, K * 2 * y, K * 2 * y + K);
  return g;
}

// ------------------------------------------------------------------ steps

struct DeepSsm::StepState {
  std::vector<Tensor> h;       // generative recurrence, per layer
  std::vector<Tensor> d;       // STORN inference recurrence
  Tensor prev_z_feat;          // phi_z(z_{t-1}) for the VRNN recurrence
  bool generation = false;     // latent from the prior, outputs sampled
};

// One time step of the variant's graph. y_t is null during generation.
//
//   VAE-RNN : h_t = GRU(h_{t-1}, phi_u)            prior = NN(h_t)
//             q = enc([phi_y, h_t])                out = dec(phi_z(z_t))
//   VRNN    : h_t = GRU(h_{t-1}, [phi_u, phi_z(z_{t-1})])
//             prior = NN(h_t) (or static N(0,I) for -I variants)
//             q = enc([phi_y, h_t])                out = dec([phi_z, h_t])
//   STORN   : d_t = GRU_d(d_{t-1}, phi_y)          prior = N(0,I)
//             q = enc([d_t, h_{t-1}])  (encoder sees the recurrent state
//             before it absorbs z_t, which keeps the step causal)
//             h_t = GRU(h_{t-1}, [phi_u, phi_z(z_t)])   out = dec(h_t)
StepDistributions DeepSsm::run_step(nn::ParamBinder& bind, StepState& st,
                                    const Tensor& u_t, const Tensor* y_t,
                                    Rng& rng, bool train) {
  const Variant v = cfg_.variant;
  Tensor fu = features_u(bind, u_t, train);

  if (v == Variant::VaeRnn) {
    st.h = rnn_.step(bind, st.h, fu);
  } else if (is_vrnn(v)) {
    st.h = rnn_.step(bind, st.h, concat_last(fu, st.prev_z_feat));
  }
  Tensor h_cond = st.h.back();  // for STORN this is still h_{t-1}

  StepDistributions sd;
  sd.prior = has_dynamic_prior(v) ? gaussian_head(bind, *prior_net_, h_cond,
                                                  cfg_.z_dim)
                                  : dist::standard_normal(cfg_.z_dim);

  Tensor z;
  if (y_t) {
    Tensor fy = features_y(bind, *y_t, train);
    Tensor enc_in;
    if (v == Variant::Storn) {
      st.d = rnn_inf_->step(bind, st.d, fy);
      enc_in = concat_last(st.d.back(), h_cond);
    } else {
      enc_in = concat_last(fy, h_cond);
    }
    sd.posterior = gaussian_head(bind, encoder_, enc_in, cfg_.z_dim);
    z = dist::gaussian_rsample(sd.posterior, rng);
  } else {
    sd.posterior = sd.prior;
    z = dist::gaussian_rsample(sd.prior, rng);
    if (z.shape().ndim() == 1) z = reshape(z, Shape{1, cfg_.z_dim});
  }

  Tensor zf = features_z(bind, z, train);
  if (v == Variant::Storn) st.h = rnn_.step(bind, st.h, concat_last(fu, zf));
  Tensor h_out = st.h.back();

  Tensor dec_in = v == Variant::VaeRnn ? zf
                  : is_vrnn(v)         ? concat_last(zf, h_out)
                                       : h_out;
  if (is_gmm(v))
    sd.out_gmm = gmm_head(bind, dec_in);
  else
    sd.out_gauss = gaussian_head(bind, decoder_, dec_in, cfg_.y_dim);

  st.prev_z_feat = zf;
  return sd;
}

// ------------------------------------------------------------------- ELBO

ElboResult DeepSsm::elbo_single(Tape* tape, const SeqBatch& batch, Rng& rng,
                                const ElboOptions& opts) {
  if (batch.T < 1) throw ValueError("elbo_loss: empty sequence (T = 0)");
  if (batch.u_dim != cfg_.u_dim || batch.y_dim != cfg_.y_dim)
    throw ShapeError("elbo_loss: data dims (" + std::to_string(batch.u_dim) +
                     "," + std::to_string(batch.y_dim) +
                     ") do not match model (" + std::to_string(cfg_.u_dim) +
                     "," + std::to_string(cfg_.y_dim) + ")");
  nn::ParamBinder bind(tape);
  StepState st;
  st.h = rnn_.zero_state(batch.B);
  if (rnn_inf_) st.d = rnn_inf_->zero_state(batch.B);
  if (is_vrnn(cfg_.variant))
    st.prev_z_feat = features_z(
        bind, Tensor::zeros(Shape{batch.B, cfg_.z_dim}), opts.train_mode);

  ElboResult res;
  Tensor total;
  for (std::int64_t t = 0; t < batch.T; ++t) {
    try {
      Tensor u_t = batch.u_at(t);
      Tensor y_t = batch.y_at(t);
      StepDistributions sd =
          run_step(bind, st, u_t, &y_t, rng, opts.train_mode);
      Tensor recon = sd.out_gmm ? dist::gmm_log_prob(*sd.out_gmm, y_t)
                                : dist::gaussian_log_prob(*sd.out_gauss, y_t);
      Tensor kl = dist::gaussian_kl(sd.posterior, sd.prior);
      Tensor step_loss = sub(mean(kl), mean(recon));
      total = (t == 0) ? step_loss : add(total, step_loss);
      res.recon += mean(recon).item();
      res.kl += mean(kl).item();
      res.per_step_loss.push_back(step_loss.item());
      if (opts.keep_steps) res.steps.push_back(std::move(sd));
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " [time step " +
                         std::to_string(t + 1) + "]");
    }
  }
  res.loss = scale(total, 1.0 / static_cast<double>(batch.T));
  res.recon /= static_cast<double>(batch.T);
  res.kl /= static_cast<double>(batch.T);
  return res;
}

ElboResult DeepSsm::elbo_loss(Tape* tape, const SeqBatch& batch, Rng& rng,
                              const ElboOptions& opts) {
  const int mc = cfg_.mc_samples;
  if (mc == 1) return elbo_single(tape, batch, rng, opts);
  ElboResult acc;
  Tensor total;
  for (int s = 0; s < mc; ++s) {
    ElboResult r = elbo_single(tape, batch, rng, opts);
    total = (s == 0) ? r.loss : add(total, r.loss);
    acc.recon += r.recon / mc;
    acc.kl += r.kl / mc;
    if (s == 0) acc.per_step_loss.assign(r.per_step_loss.size(), 0.0);
    for (size_t t = 0; t < r.per_step_loss.size(); ++t)
      acc.per_step_loss[t] += r.per_step_loss[t] / mc;
    if (s == mc - 1) acc.steps = std::move(r.steps);
  }
  acc.loss = scale(total, 1.0 / mc);
  return acc;
}

std::vector<double> DeepSsm::elbo_samples(const SeqBatch& batch, Rng& rng,
                                          int n) {
  NoGradGuard no_grad;
  std::vector<double> out;
  out.reserve(static_cast<size_t>(n));
  ElboOptions opts;  // eval mode
  for (int s = 0; s < n; ++s)
    out.push_back(-elbo_single(nullptr, batch, rng, opts).loss.item());
  return out;
}

// -------------------------------------------------------------- rollout

Generation DeepSsm::generate(const Vec& u, std::int64_t T, Rng& rng) {
  if (static_cast<std::int64_t>(u.size()) != T * cfg_.u_dim)
    throw ShapeError("generate: input length " + std::to_string(u.size()) +
                     " != T * u_dim");
  NoGradGuard no_grad;
  nn::ParamBinder bind(nullptr);
  StepState st;
  st.generation = true;
  st.h = rnn_.zero_state(1);
  if (is_vrnn(cfg_.variant))
    st.prev_z_feat =
        features_z(bind, Tensor::zeros(Shape{1, cfg_.z_dim}), false);

  Generation gen;
  gen.outputs.reserve(static_cast<size_t>(T));
  gen.sampled_y.reserve(static_cast<size_t>(T * cfg_.y_dim));
  for (std::int64_t t = 0; t < T; ++t) {
    Vec ut(u.begin() + t * cfg_.u_dim, u.begin() + (t + 1) * cfg_.u_dim);
    Tensor u_t(Shape{1, cfg_.u_dim}, std::move(ut));
    StepDistributions sd = run_step(bind, st, u_t, nullptr, rng, false);

    OutputDist od;
    Vec y_draw;
    if (sd.out_gmm) {
      const Gmm& g = *sd.out_gmm;
      od.weights = exp_(dist::log_softmax_last(g.logits)).value();
      for (const auto& c : g.comps) {
        od.mu.push_back(c.mu.value());
        od.sigma.push_back(c.sigma.value());
      }
      y_draw = dist::gmm_sample(g, rng);
    } else {
      const DiagGaussian& gsn = *sd.out_gauss;
      od.weights = {1.0};
      od.mu.push_back(gsn.mu.value());
      od.sigma.push_back(gsn.sigma.value());
      y_draw = dist::gaussian_rsample(gsn, rng).value();
    }
    gen.outputs.push_back(std::move(od));
    gen.sampled_y.insert(gen.sampled_y.end(), y_draw.begin(), y_draw.end());
  }
  return gen;
}

// ----------------------------------------------------------- checkpoints

std::string config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["variant"] = variant_name(cfg.variant);
  j["u_dim"] = cfg.u_dim;
  j["y_dim"] = cfg.y_dim;
  j["h_dim"] = cfg.h_dim;
  j["z_dim"] = cfg.z_dim;
  j["n_layer"] = cfg.n_layer;
  j["mixtures"] = cfg.mixtures;
  j["batchnorm"] = cfg.batchnorm;
  j["mc_samples"] = cfg.mc_samples;
  return j.dump();
}

ModelConfig config_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  ModelConfig cfg;
  cfg.variant = parse_variant(j.at("variant").get<std::string>());
  cfg.u_dim = j.value("u_dim", 1);
  cfg.y_dim = j.value("y_dim", 1);
  cfg.h_dim = j.value("h_dim", 60);
  cfg.z_dim = j.value("z_dim", 5);
  cfg.n_layer = j.value("n_layer", 1);
  cfg.mixtures = j.value("mixtures", 5);
  cfg.batchnorm = j.value("batchnorm", false);
  cfg.mc_samples = j.value("mc_samples", 1);
  cfg.validate();
  return cfg;
}

void save_checkpoint(const std::string& path, DeepSsm& model,
                     const std::string& meta_json) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write checkpoint " + path);
  nlohmann::json header;
  header["config"] = nlohmann::json::parse(config_to_json(model.config()));
  header["meta"] = nlohmann::json::parse(meta_json);
  os << "deepssm-checkpoint v1\n" << header.dump() << "\n";
  nn::save_parameters(os, model.parameters());
  os.precision(17);
  std::vector<Vec> snap = model.snapshot();
  const size_t n_params = model.parameters().size();
  // batch-norm running statistics, if any, follow the trainables
  for (size_t i = n_params; i < snap.size(); ++i) {
    os << "state " << snap[i].size() << '\n';
    for (size_t k = 0; k < snap[i].size(); ++k)
      os << (k ? " " : "") << snap[i][k];
    os << '\n';
  }
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open checkpoint " + path);
  std::string magic;
  std::getline(is, magic);
  if (magic != "deepssm-checkpoint v1")
    throw IoError("not a deepssm checkpoint: " + path);
  std::string header_line;
  std::getline(is, header_line);
  nlohmann::json header = nlohmann::json::parse(header_line);
  ModelConfig cfg = config_from_json(header.at("config").dump());
  LoadedCheckpoint out{DeepSsm(cfg), header.value("meta", nlohmann::json::object()).dump()};
  nn::load_parameters(is, out.model.parameters());
  std::vector<Vec> snap = out.model.snapshot();
  for (size_t i = out.model.parameters().size(); i < snap.size(); ++i) {
    std::string tag;
    size_t n = 0;
    if (!(is >> tag >> n) || tag != "state" || n != snap[i].size())
      throw IoError("checkpoint: bad batch-norm state block in " + path);
    for (double& v : snap[i])
      if (!(is >> v)) throw IoError("checkpoint: truncated state in " + path);
  }
  out.model.restore(snap);
  return out;
}

}  // namespace deepssm::model
