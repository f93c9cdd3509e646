#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deepssm/experiment.hpp"
#include "deepssm/kernels.hpp"

namespace {

// Relative output directories resolve under $DEEPSSM_OUTPUT_ROOT when set.
std::string resolve_output_dir(const std::string& dir) {
  const char* root = std::getenv("DEEPSSM_OUTPUT_ROOT");
  if (!root || *root == '\0') return dir;
  std::filesystem::path p(dir);
  if (p.is_absolute()) return dir;
  return (std::filesystem::path(root) / p).string();
}

struct CommonArgs {
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  int jobs = 0;
  std::string output;
  bool force = false;
  bool serial_kernels = false;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "experiment config (JSON)")
      ->required();
  sub->add_option("--seed", args.seeds,
                  "override the config's seed list (repeatable)");
  sub->add_option("--jobs", args.jobs, "concurrent training jobs");
  sub->add_option("--output", args.output, "override output directory");
  sub->add_flag("--force", args.force, "overwrite existing outputs");
  sub->add_flag("--serial-kernels", args.serial_kernels,
                "disable the OpenMP kernel paths");
}

deepssm::exp::ExperimentConfig make_config(const CommonArgs& args) {
  auto cfg = deepssm::exp::load_config_file(args.config_path);
  if (!args.seeds.empty()) cfg.seeds = args.seeds;
  if (args.jobs > 0) cfg.jobs = args.jobs;
  if (!args.output.empty()) cfg.output_dir = args.output;
  cfg.output_dir = resolve_output_dir(cfg.output_dir);
  if (args.serial_kernels)
    deepssm::kernels::set_backend(deepssm::kernels::Backend::Serial);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "deepssm - deep state-space models for nonlinear system "
      "identification"};
  app.require_subcommand(1);

  CommonArgs sim_args, train_args, eval_args, grid_args;
  CLI::App* sim = app.add_subcommand(
      "simulate", "generate benchmark datasets as CSV files");
  add_common(sim, sim_args);

  CLI::App* tr = app.add_subcommand(
      "train", "train one model per seed and write checkpoints and records");
  add_common(tr, train_args);

  CLI::App* ev = app.add_subcommand(
      "evaluate", "open-loop evaluation of trained checkpoints");
  add_common(ev, eval_args);
  std::vector<std::string> checkpoints;
  std::string data_csv;
  ev->add_option("--checkpoint", checkpoints,
                 "checkpoint file(s); several enable mean/std rows")
      ->required();
  ev->add_option("--data", data_csv,
                 "test CSV (default: the benchmark's canonical test set)");

  CLI::App* gr = app.add_subcommand(
      "gridsearch",
      "train the cartesian product of grid axes x seeds, ranked by RMSE");
  add_common(gr, grid_args);

  CLI11_PARSE(app, argc, argv);

  return deepssm::exp::guard_main([&]() -> int {
    if (sim->parsed())
      return deepssm::exp::cmd_simulate(make_config(sim_args), sim_args.force);
    if (tr->parsed())
      return deepssm::exp::cmd_train(make_config(train_args), train_args.force);
    if (ev->parsed())
      return deepssm::exp::cmd_evaluate(make_config(eval_args), checkpoints,
                                        data_csv, eval_args.force);
    if (gr->parsed())
      return deepssm::exp::cmd_gridsearch(make_config(grid_args),
                                          grid_args.force);
    return deepssm::exp::kExitConfig;
  });
}
