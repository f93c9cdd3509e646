#include "deepssm/experiment.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "deepssm/svg.hpp"

namespace deepssm::exp {

namespace fs = std::filesystem;
using nlohmann::json;

const char* benchmark_name(Benchmark b) {
  switch (b) {
    case Benchmark::LinearToy: return "linear-toy";
    case Benchmark::NarendraLi: return "narendra-li";
    case Benchmark::WienerHammerstein: return "wiener-hammerstein";
  }
  return "?";
}

Benchmark parse_benchmark(const std::string& name) {
  for (Benchmark b : {Benchmark::LinearToy, Benchmark::NarendraLi,
                      Benchmark::WienerHammerstein})
    if (name == benchmark_name(b)) return b;
  throw ValueError("unknown benchmark '" + name +
                   "'; expected linear-toy, narendra-li or "
                   "wiener-hammerstein");
}

ExperimentConfig default_config(Benchmark b) {
  ExperimentConfig cfg;
  cfg.benchmark = b;
  switch (b) {
    case Benchmark::LinearToy:
      cfg.model.variant = model::Variant::Storn;
      cfg.model.h_dim = 60;
      cfg.model.z_dim = 5;
      cfg.model.n_layer = 1;
      cfg.model.batchnorm = true;
      cfg.data.n_train = 2000;
      cfg.data.n_val = 2000;
      cfg.data.n_test = 5000;
      cfg.train.chunk_length = 64;
      cfg.train.batch_size = 8;
      break;
    case Benchmark::NarendraLi:
      cfg.model.variant = model::Variant::Storn;
      cfg.model.h_dim = 60;
      cfg.model.z_dim = 10;
      cfg.model.n_layer = 1;
      cfg.model.batchnorm = false;  // none for this benchmark
      cfg.data.n_train = 2000;
      cfg.data.n_val = 5000;
      cfg.data.n_test = 5000;
      cfg.train.chunk_length = 64;
      cfg.train.batch_size = 16;
      break;
    case Benchmark::WienerHammerstein:
      cfg.model.variant = model::Variant::Storn;
      cfg.model.h_dim = 40;
      cfg.model.z_dim = 3;
      cfg.model.n_layer = 3;
      cfg.model.batchnorm = true;
      cfg.train.chunk_length = 2048;
      cfg.train.batch_size = 2;
      break;
  }
  return cfg;
}

namespace {

void merge_model(model::ModelConfig& m, const json& j) {
  if (j.contains("variant"))
    m.variant = model::parse_variant(j.at("variant").get<std::string>());
  m.h_dim = j.value("h_dim", m.h_dim);
  m.z_dim = j.value("z_dim", m.z_dim);
  m.n_layer = j.value("n_layer", m.n_layer);
  m.mixtures = j.value("mixtures", m.mixtures);
  m.batchnorm = j.value("batchnorm", m.batchnorm);
  m.mc_samples = j.value("mc_samples", m.mc_samples);
}

void merge_train(train::TrainLoopConfig& t, const json& j) {
  t.lr = j.value("lr", t.lr);
  t.plateau_factor = j.value("plateau_factor", t.plateau_factor);
  t.plateau_patience = j.value("plateau_patience", t.plateau_patience);
  t.min_lr = j.value("min_lr", t.min_lr);
  t.early_stop_patience = j.value("early_stop_patience", t.early_stop_patience);
  t.max_epochs = j.value("max_epochs", t.max_epochs);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.chunk_length = j.value("chunk_length", t.chunk_length);
  t.grad_clip = j.value("grad_clip", t.grad_clip);
}

void merge_data(DataConfig& d, const json& j) {
  d.n_train = j.value("n_train", d.n_train);
  d.n_val = j.value("n_val", d.n_val);
  d.n_test = j.value("n_test", d.n_test);
  d.test_seed = j.value("test_seed", d.test_seed);
  d.linear_noise_as_variance =
      j.value("linear_noise_as_variance", d.linear_noise_as_variance);
  d.nl_meas_noise_var = j.value("nl_meas_noise_var", d.nl_meas_noise_var);
  d.wh_train_csv = j.value("wh_train_csv", d.wh_train_csv);
  d.wh_val_csv = j.value("wh_val_csv", d.wh_val_csv);
  if (j.contains("wh_test_csvs"))
    for (const auto& [name, path] : j.at("wh_test_csvs").items())
      d.wh_test_csvs.emplace_back(name, path.get<std::string>());
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
  json j = json::parse(text);
  ExperimentConfig cfg =
      default_config(parse_benchmark(j.at("benchmark").get<std::string>()));
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  if (j.contains("model")) merge_model(cfg.model, j.at("model"));
  if (j.contains("train")) merge_train(cfg.train, j.at("train"));
  if (j.contains("data")) merge_data(cfg.data, j.at("data"));
  if (j.contains("seeds")) {
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (cfg.seeds.empty()) throw ValueError("config: seed list is empty");
  }
  cfg.jobs = j.value("jobs", cfg.jobs);
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    if (g.contains("h_dim")) cfg.grid.h_dim = g.at("h_dim").get<std::vector<int>>();
    if (g.contains("z_dim")) cfg.grid.z_dim = g.at("z_dim").get<std::vector<int>>();
    if (g.contains("n_layer"))
      cfg.grid.n_layer = g.at("n_layer").get<std::vector<int>>();
    if (g.contains("n_train"))
      cfg.grid.n_train = g.at("n_train").get<std::vector<std::int64_t>>();
  }
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  try {
    return config_from_json_text(text);
  } catch (const json::exception& e) {
    throw ValueError("config " + path + ": " + e.what());
  }
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
  json j;
  j["benchmark"] = benchmark_name(cfg.benchmark);
  j["output_dir"] = cfg.output_dir;
  j["model"] = json::parse(model::config_to_json(cfg.model));
  j["train"] = {{"lr", cfg.train.lr},
                {"plateau_factor", cfg.train.plateau_factor},
                {"plateau_patience", cfg.train.plateau_patience},
                {"min_lr", cfg.train.min_lr},
                {"early_stop_patience", cfg.train.early_stop_patience},
                {"max_epochs", cfg.train.max_epochs},
                {"batch_size", cfg.train.batch_size},
                {"chunk_length", cfg.train.chunk_length},
                {"grad_clip", cfg.train.grad_clip}};
  j["data"] = {{"n_train", cfg.data.n_train},
               {"n_val", cfg.data.n_val},
               {"n_test", cfg.data.n_test},
               {"test_seed", cfg.data.test_seed},
               {"linear_noise_as_variance", cfg.data.linear_noise_as_variance},
               {"nl_meas_noise_var", cfg.data.nl_meas_noise_var}};
  if (!cfg.data.wh_train_csv.empty()) {
    j["data"]["wh_train_csv"] = cfg.data.wh_train_csv;
    j["data"]["wh_val_csv"] = cfg.data.wh_val_csv;
    json t;
    for (const auto& [name, path] : cfg.data.wh_test_csvs) t[name] = path;
    j["data"]["wh_test_csvs"] = t;
  }
  j["seeds"] = cfg.seeds;
  j["jobs"] = cfg.jobs;
  return j.dump(2);
}

// ----------------------------------------------------------------- data

BenchmarkData make_benchmark_data(const ExperimentConfig& cfg,
                                  std::uint64_t seed) {
  BenchmarkData bd;
  switch (cfg.benchmark) {
    case Benchmark::LinearToy: {
      const data::LinearSystem sys =
          data::toy_linear_system(cfg.data.linear_noise_as_variance);
      Rng u_tr(derive_seed(seed, 100)), n_tr(derive_seed(seed, 101));
      bd.train_raw = data::simulate_linear(
          sys, data::gen_input(data::InputKind::Uniform, cfg.data.n_train, u_tr),
          n_tr, true);
      Rng u_va(derive_seed(seed, 102)), n_va(derive_seed(seed, 103));
      bd.val_raw = data::simulate_linear(
          sys, data::gen_input(data::InputKind::Uniform, cfg.data.n_val, u_va),
          n_va, true);
      Rng dummy(0), n_te(derive_seed(cfg.data.test_seed, 1));
      data::SequenceDataset test = data::simulate_linear(
          sys,
          data::gen_input(data::InputKind::TestSine, cfg.data.n_test, dummy),
          n_te, true);
      test.provenance = "linear-toy-test";
      bd.tests_raw.emplace_back("test", std::move(test));
      break;
    }
    case Benchmark::NarendraLi: {
      const double var = cfg.data.nl_meas_noise_var;
      Rng u_tr(derive_seed(seed, 100)), n_tr(derive_seed(seed, 101));
      bd.train_raw = data::simulate_narendra_li(
          data::gen_input(data::InputKind::Uniform, cfg.data.n_train, u_tr),
          n_tr, var);
      Rng u_va(derive_seed(seed, 102)), n_va(derive_seed(seed, 103));
      bd.val_raw = data::simulate_narendra_li(
          data::gen_input(data::InputKind::Uniform, cfg.data.n_val, u_va),
          n_va, var);
      Rng dummy(0), n_te(derive_seed(cfg.data.test_seed, 1));
      data::SequenceDataset test = data::simulate_narendra_li(
          data::gen_input(data::InputKind::TestSine, cfg.data.n_test, dummy),
          n_te, var);
      test.provenance = "narendra-li-test";
      bd.tests_raw.emplace_back("test", std::move(test));
      break;
    }
    case Benchmark::WienerHammerstein: {
      if (cfg.data.wh_train_csv.empty() || cfg.data.wh_val_csv.empty() ||
          cfg.data.wh_test_csvs.empty())
        throw IoError(
            "wiener-hammerstein needs wh_train_csv, wh_val_csv and "
            "wh_test_csvs in the data config (converted benchmark CSVs)");
      bd.train_raw = data::load_csv_dataset(cfg.data.wh_train_csv, {"u0"}, {"y0"});
      bd.val_raw = data::load_csv_dataset(cfg.data.wh_val_csv, {"u0"}, {"y0"});
      for (const auto& [name, path] : cfg.data.wh_test_csvs)
        bd.tests_raw.emplace_back(name,
                                  data::load_csv_dataset(path, {"u0"}, {"y0"}));
      break;
    }
  }
  bd.stats = data::compute_stats(bd.train_raw);
  return bd;
}

// ------------------------------------------------------------- training

TrainedRun run_training(const ExperimentConfig& cfg, std::uint64_t seed) {
  BenchmarkData bd = make_benchmark_data(cfg, seed);
  model::ModelConfig mcfg = cfg.model;
  mcfg.u_dim = static_cast<int>(bd.train_raw.u_dim);
  mcfg.y_dim = static_cast<int>(bd.train_raw.y_dim);

  TrainedRun out{model::DeepSsm(mcfg), {}, {}};
  Rng init_rng(derive_seed(seed, 2));
  out.model.init_params(init_rng);

  train::TrainLoopConfig tcfg = cfg.train;
  tcfg.seed = seed;
  train::DeepSsmTask task(out.model, data::normalize(bd.train_raw, bd.stats),
                          data::normalize(bd.val_raw, bd.stats), tcfg);
  out.record = train::train(task, tcfg);
  out.record.config_json = config_to_json_text(cfg);

  std::uint64_t eval_stream = 500;
  for (const auto& [name, test_raw] : bd.tests_raw) {
    eval::EvalReport rep = eval::evaluate_open_loop(
        out.model, test_raw, bd.stats, derive_seed(seed, eval_stream++));
    if (out.tests.empty()) {
      out.record.test_rmse = rep.rmse;
      out.record.test_nll = rep.nll;
    }
    out.tests.emplace_back(name, std::move(rep));
  }
  return out;
}

ElboBound check_elbo_bound(model::DeepSsm& m,
                           const data::SequenceDataset& test_raw,
                           const data::NormStats& stats,
                           const data::LinearSystem& sys, int n_samples,
                           std::uint64_t seed) {
  ElboBound out;
  out.kalman_ll = data::kalman_log_likelihood(sys, test_raw.u, test_raw.y);

  data::SequenceDataset test_norm = data::normalize(test_raw, stats);
  model::SeqBatch batch = train::full_batch(test_norm);
  Rng rng(seed);
  std::vector<double> samples = m.elbo_samples(batch, rng, n_samples);

  // change of variables back to raw units: per-step ELBO shifts by
  // -sum_d ln(std_d) when y is de-standardized
  double log_std = 0.0;
  for (double s : stats.y_std) log_std += std::log(s);
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (double v : samples) var += (v - mean) * (v - mean);
  var /= std::max<size_t>(1, samples.size() - 1);
  out.elbo_per_step = mean - log_std;
  out.se = std::sqrt(var / static_cast<double>(samples.size()));
  out.ok = out.elbo_per_step <= out.kalman_ll + 3.0 * out.se;
  return out;
}

void parallel_for_jobs(int jobs, int n, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(jobs));
  for (int w = 0; w < jobs; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[static_cast<size_t>(w)] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ------------------------------------------------------------- commands

namespace {

void ensure_fresh_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!force)
      throw ValueError("output directory " + dir.string() +
                       " already exists; pass --force to overwrite");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
}

std::string stats_json(const data::NormStats& st) {
  json j;
  j["u_mean"] = st.u_mean;
  j["u_std"] = st.u_std;
  j["y_mean"] = st.y_mean;
  j["y_std"] = st.y_std;
  return j.dump();
}

data::NormStats stats_from_json(const json& j) {
  data::NormStats st;
  st.u_mean = j.at("u_mean").get<Vec>();
  st.u_std = j.at("u_std").get<Vec>();
  st.y_mean = j.at("y_mean").get<Vec>();
  st.y_std = j.at("y_std").get<Vec>();
  return st;
}

void write_test_artifacts(const fs::path& dir, const std::string& name,
                          const eval::EvalReport& rep,
                          const model::ModelConfig& mcfg,
                          const data::SequenceDataset& test_raw) {
  {
    std::ofstream os(dir / ("eval_" + name + ".csv"));
    eval::write_eval_csv(os, rep, mcfg);
  }
  {
    std::ofstream os(dir / ("steps_" + name + ".csv"));
    eval::write_steps_csv(os, rep, test_raw);
  }
  // mean with +-3 sigma band over the first output channel
  plot::SeriesPlot sp;
  sp.title = rep.variant + " open loop (" + name + ")";
  const std::int64_t T = rep.T;
  const std::int64_t n = std::min<std::int64_t>(T, 500);  // readable window
  sp.t.resize(static_cast<size_t>(n));
  sp.truth.resize(static_cast<size_t>(n));
  sp.mean.resize(static_cast<size_t>(n));
  sp.lo.resize(static_cast<size_t>(n));
  sp.hi.resize(static_cast<size_t>(n));
  for (std::int64_t t = 0; t < n; ++t) {
    sp.t[static_cast<size_t>(t)] = static_cast<double>(t + 1);
    sp.truth[static_cast<size_t>(t)] =
        test_raw.y[static_cast<size_t>(t * test_raw.y_dim)];
    const double mu = rep.pred_mean[static_cast<size_t>(t)][0];
    const double sd = rep.pred_std[static_cast<size_t>(t)][0];
    sp.mean[static_cast<size_t>(t)] = mu;
    sp.lo[static_cast<size_t>(t)] = mu - 3.0 * sd;
    sp.hi[static_cast<size_t>(t)] = mu + 3.0 * sd;
  }
  plot::write_svg((dir / ("plot_" + name + ".svg")).string(), sp);
}

}  // namespace

int cmd_simulate(const ExperimentConfig& cfg, bool force) {
  if (cfg.benchmark == Benchmark::WienerHammerstein)
    throw ValueError(
        "simulate applies to the synthetic benchmarks only; the "
        "wiener-hammerstein data comes from converted CSV files");
  const fs::path dir = fs::path(cfg.output_dir) / "data";
  ensure_fresh_dir(dir, force);
  write_text(fs::path(cfg.output_dir) / "config.json",
             config_to_json_text(cfg));
  BenchmarkData bd = make_benchmark_data(cfg, cfg.seeds.front());
  data::save_csv(bd.train_raw, (dir / "train.csv").string());
  data::save_csv(bd.val_raw, (dir / "val.csv").string());
  for (const auto& [name, test] : bd.tests_raw)
    data::save_csv(test, (dir / (name + ".csv")).string());
  std::cout << "wrote " << dir.string() << ": train T=" << bd.train_raw.length()
            << ", val T=" << bd.val_raw.length();
  for (const auto& [name, test] : bd.tests_raw)
    std::cout << ", " << name << " T=" << test.length();
  std::cout << '\n';
  return kExitOk;
}

int cmd_train(const ExperimentConfig& cfg, bool force) {
  std::atomic<bool> numeric_abort{false};
  std::mutex io_mutex;
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path sd =
        fs::path(cfg.output_dir) / ("seed_" + std::to_string(seed));
    if (fs::exists(sd)) ensure_fresh_dir(sd, force);
  }
  fs::create_directories(cfg.output_dir);
  write_text(fs::path(cfg.output_dir) / "config.json",
             config_to_json_text(cfg));

  const int n = static_cast<int>(cfg.seeds.size());
  parallel_for_jobs(cfg.jobs, n, [&](int i) {
    const std::uint64_t seed = cfg.seeds[static_cast<size_t>(i)];
    const fs::path dir =
        fs::path(cfg.output_dir) / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    TrainedRun run = run_training(cfg, seed);
    BenchmarkData bd = make_benchmark_data(cfg, seed);

    json meta;
    meta["benchmark"] = benchmark_name(cfg.benchmark);
    meta["seed"] = seed;
    meta["stats"] = json::parse(stats_json(bd.stats));
    model::save_checkpoint((dir / "checkpoint.txt").string(), run.model,
                           meta.dump());
    {
      std::ofstream os(dir / "run.csv");
      run.record.to_csv(os);
    }
    for (const auto& [name, rep] : run.tests) {
      const data::SequenceDataset* test_raw = nullptr;
      for (const auto& [tn, td] : bd.tests_raw)
        if (tn == name) test_raw = &td;
      write_test_artifacts(dir, name, rep, run.model.config(), *test_raw);
    }
    if (run.record.stop_reason == "nan-abort") numeric_abort = true;
    std::lock_guard<std::mutex> lock(io_mutex);
    std::cout << "seed " << seed << ": " << run.record.stop_reason << " after "
              << run.record.stop_epoch << " epochs, best val "
              << run.record.best_val << ", test RMSE " << run.record.test_rmse
              << ", NLL " << run.record.test_nll << '\n';
  });
  return numeric_abort ? kExitNumeric : kExitOk;
}

int cmd_evaluate(const ExperimentConfig& cfg,
                 const std::vector<std::string>& checkpoints,
                 const std::string& data_csv, bool force) {
  if (checkpoints.empty()) throw ValueError("evaluate: no checkpoints given");
  const fs::path dir = fs::path(cfg.output_dir) / "eval";
  ensure_fresh_dir(dir, force);

  // test data: explicit CSV or the benchmark's canonical test set
  std::vector<std::pair<std::string, data::SequenceDataset>> tests;
  if (!data_csv.empty()) {
    const auto& first = model::load_checkpoint(checkpoints.front());
    std::vector<std::string> ucols, ycols;
    for (int d = 0; d < first.model.config().u_dim; ++d)
      ucols.push_back("u" + std::to_string(d));
    for (int d = 0; d < first.model.config().y_dim; ++d)
      ycols.push_back("y" + std::to_string(d));
    tests.emplace_back(fs::path(data_csv).stem().string(),
                       data::load_csv_dataset(data_csv, ucols, ycols));
  } else {
    BenchmarkData bd = make_benchmark_data(cfg, cfg.seeds.front());
    tests = std::move(bd.tests_raw);
  }

  struct Row {
    std::string name;
    eval::EvalReport rep;
    model::ModelConfig mcfg;
  };
  std::vector<Row> rows;
  for (const std::string& ckpt : checkpoints) {
    model::LoadedCheckpoint lc = model::load_checkpoint(ckpt);
    json meta = json::parse(lc.meta_json);
    if (!meta.contains("stats"))
      throw IoError("checkpoint " + ckpt +
                    " carries no normalization statistics");
    data::NormStats stats = stats_from_json(meta.at("stats"));
    const std::uint64_t seed = meta.value("seed", 0ull);
    for (const auto& [name, test_raw] : tests) {
      eval::EvalReport rep = eval::evaluate_open_loop(
          lc.model, test_raw, stats, derive_seed(seed, 900));
      const std::string tag =
          fs::path(ckpt).parent_path().filename().string() + "_" + name;
      write_test_artifacts(dir, tag, rep, lc.model.config(), test_raw);
      rows.push_back({name, std::move(rep), lc.model.config()});
    }
  }

  // combined summary; with several checkpoints append mean/std rows
  std::ofstream os(dir / "eval.csv");
  os << "row,test_set,variant,h_dim,z_dim,n_layer,seed,rmse,nll\n";
  os.precision(17);
  for (const auto& r : rows)
    os << "run," << r.name << ',' << r.rep.variant << ',' << r.mcfg.h_dim
       << ',' << r.mcfg.z_dim << ',' << r.mcfg.n_layer << ',' << r.rep.seed
       << ',' << r.rep.rmse << ',' << r.rep.nll << '\n';
  if (checkpoints.size() > 1) {
    for (const auto& [name, unused] : tests) {
      (void)unused;
      Vec rm, nl;
      for (const auto& r : rows)
        if (r.name == name) {
          rm.push_back(r.rep.rmse);
          nl.push_back(r.rep.nll);
        }
      auto mean_std = [](const Vec& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        s = v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
        return std::pair<double, double>(m, s);
      };
      auto [rm_m, rm_s] = mean_std(rm);
      auto [nl_m, nl_s] = mean_std(nl);
      os << "mean," << name << ",,,,,," << rm_m << ',' << nl_m << '\n';
      os << "std," << name << ",,,,,," << rm_s << ',' << nl_s << '\n';
    }
  }
  std::cout << "wrote " << (dir / "eval.csv").string() << " (" << rows.size()
            << " runs)\n";
  return kExitOk;
}

int cmd_gridsearch(const ExperimentConfig& cfg, bool force) {
  const fs::path dir = fs::path(cfg.output_dir) / "grid";
  ensure_fresh_dir(dir, force);
  write_text(fs::path(cfg.output_dir) / "config.json",
             config_to_json_text(cfg));

  // cartesian product over the listed axes (absent axis = current value)
  const GridSpec& g = cfg.grid;
  if (g.empty())
    throw ValueError("gridsearch: config has no grid axes (grid.h_dim, "
                     "grid.z_dim, grid.n_layer, grid.n_train)");
  std::vector<int> hs = g.h_dim.empty() ? std::vector<int>{cfg.model.h_dim} : g.h_dim;
  std::vector<int> zs = g.z_dim.empty() ? std::vector<int>{cfg.model.z_dim} : g.z_dim;
  std::vector<int> ls =
      g.n_layer.empty() ? std::vector<int>{cfg.model.n_layer} : g.n_layer;
  std::vector<std::int64_t> ns =
      g.n_train.empty() ? std::vector<std::int64_t>{cfg.data.n_train} : g.n_train;

  struct Combo {
    int h, z, l;
    std::int64_t n;
  };
  std::vector<Combo> combos;
  for (int h : hs)
    for (int z : zs)
      for (int l : ls)
        for (std::int64_t n : ns) combos.push_back({h, z, l, n});

  struct JobResult {
    Combo c;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double rmse = 0.0, nll = 0.0, val = 0.0;
    std::string stop;
  };
  const int n_jobs = static_cast<int>(combos.size() * cfg.seeds.size());
  std::vector<JobResult> results(static_cast<size_t>(n_jobs));

  parallel_for_jobs(cfg.jobs, n_jobs, [&](int i) {
    const Combo c = combos[static_cast<size_t>(i) / cfg.seeds.size()];
    const std::uint64_t seed = cfg.seeds[static_cast<size_t>(i) % cfg.seeds.size()];
    JobResult& r = results[static_cast<size_t>(i)];
    r.c = c;
    r.seed = seed;
    try {
      ExperimentConfig jc = cfg;
      jc.model.h_dim = c.h;
      jc.model.z_dim = c.z;
      jc.model.n_layer = c.l;
      jc.data.n_train = c.n;
      TrainedRun run = run_training(jc, seed);
      r.ok = true;
      r.rmse = run.record.test_rmse;
      r.nll = run.record.test_nll;
      r.val = run.record.best_val;
      r.stop = run.record.stop_reason;
      const fs::path jd = dir / ("h" + std::to_string(c.h) + "_z" +
                                 std::to_string(c.z) + "_l" +
                                 std::to_string(c.l) + "_n" +
                                 std::to_string(c.n) + "_seed" +
                                 std::to_string(seed));
      fs::create_directories(jd);
      std::ofstream os(jd / "run.csv");
      run.record.to_csv(os);
      model::save_checkpoint((jd / "checkpoint.txt").string(), run.model);
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();  // job failures recorded, sweep continues
    }
  });

  {
    std::ofstream os(dir / "jobs.csv");
    os << "h_dim,z_dim,n_layer,n_train,seed,status,stop_reason,val_loss,"
          "test_rmse,test_nll,error\n";
    os.precision(17);
    for (const auto& r : results)
      os << r.c.h << ',' << r.c.z << ',' << r.c.l << ',' << r.c.n << ','
         << r.seed << ',' << (r.ok ? "ok" : "failed") << ',' << r.stop << ','
         << r.val << ',' << r.rmse << ',' << r.nll << ',' << r.error << '\n';
  }

  // summary: mean/std over seeds per combo, ranked by mean test RMSE
  struct SummaryRow {
    Combo c;
    double rmse_mean = 0.0, rmse_std = 0.0, nll_mean = 0.0;
    int ok_count = 0;
  };
  std::vector<SummaryRow> summary;
  for (size_t ci = 0; ci < combos.size(); ++ci) {
    SummaryRow s;
    s.c = combos[ci];
    Vec rm, nl;
    for (size_t si = 0; si < cfg.seeds.size(); ++si) {
      const JobResult& r = results[ci * cfg.seeds.size() + si];
      if (!r.ok) continue;
      rm.push_back(r.rmse);
      nl.push_back(r.nll);
    }
    s.ok_count = static_cast<int>(rm.size());
    if (!rm.empty()) {
      for (double v : rm) s.rmse_mean += v;
      s.rmse_mean /= static_cast<double>(rm.size());
      for (double v : rm)
        s.rmse_std += (v - s.rmse_mean) * (v - s.rmse_mean);
      s.rmse_std = rm.size() > 1
                       ? std::sqrt(s.rmse_std / static_cast<double>(rm.size() - 1))
                       : 0.0;
      for (double v : nl) s.nll_mean += v;
      s.nll_mean /= static_cast<double>(nl.size());
    } else {
      s.rmse_mean = std::numeric_limits<double>::infinity();
    }
    summary.push_back(s);
  }
  std::stable_sort(summary.begin(), summary.end(),
                   [](const SummaryRow& a, const SummaryRow& b) {
                     return a.rmse_mean < b.rmse_mean;
                   });
  {
    std::ofstream os(dir / "summary.csv");
    os << "rank,h_dim,z_dim,n_layer,n_train,seeds_ok,rmse_mean,rmse_std,"
          "nll_mean\n";
    os.precision(17);
    int rank = 1;
    for (const auto& s : summary)
      os << rank++ << ',' << s.c.h << ',' << s.c.z << ',' << s.c.l << ','
         << s.c.n << ',' << s.ok_count << ',' << s.rmse_mean << ','
         << s.rmse_std << ',' << s.nll_mean << '\n';
  }
  std::cout << "wrote " << (dir / "summary.csv").string() << " ("
            << summary.size() << " configurations, " << n_jobs << " jobs)\n";
  return kExitOk;
}

int guard_main(const std::function<int()>& body) {
  try {
    return body();
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ValueError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace deepssm::exp
