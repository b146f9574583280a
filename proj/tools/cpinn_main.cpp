// Experiment runner over the cpinn C API: config-driven pipelines, benchmark
// table reproduction and coverage-curve export.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "cpinn/cpinn.h"

namespace {

int fail_with(const char* stage, cpinn_status status) {
  std::fprintf(stderr, "error [%s]: %s (status %d)\n", stage, cpinn_last_error(),
               static_cast<int>(status));
  return 1;
}

struct ExperimentHandle {
  cpinn_experiment* ptr = nullptr;
  ~ExperimentHandle() { cpinn_experiment_free(ptr); }
};

int open_experiment(const std::string& config, const std::string& out_dir, bool fast,
                    bool has_seed, std::uint64_t seed, ExperimentHandle& handle) {
  cpinn_status status = cpinn_experiment_open(config.c_str(), &handle.ptr);
  if (status != CPINN_OK) {
    // fall back to a shipped preset name
    cpinn_experiment* preset = nullptr;
    if (cpinn_experiment_open_builtin(config.c_str(), &preset) == CPINN_OK) {
      handle.ptr = preset;
      status = CPINN_OK;
    }
  }
  if (status != CPINN_OK) return fail_with("config", status);
  if (fast) cpinn_experiment_set_fast(handle.ptr, 1);
  if (has_seed) cpinn_experiment_set_seed(handle.ptr, seed);
  if (!out_dir.empty()) cpinn_experiment_set_output_dir(handle.ptr, out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PINN training with conformal prediction intervals"};
  app.require_subcommand(1);

  std::string config, out_dir, table_id, run_dir;
  bool fast = false;
  bool has_seed = false;
  std::uint64_t seed = 0;
  int threads = 0;

  app.add_flag("--fast", fast, "desk-scale mode: train with epochs / 10");
  app.add_option("--threads", threads, "cap worker threads (default: CPINN_THREADS or 8)");

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    cmd->fallthrough();  // accept --fast / --threads after the subcommand
    if (needs_config) {
      cmd->add_option("--config", config, "experiment config JSON path or preset name")
          ->required();
      cmd->add_option("--out", out_dir, "override the config's output directory");
      cmd->add_option("--seed", seed, "override the dataset seed")
          ->each([&](const std::string&) { has_seed = true; });
    }
  };

  auto* gen = app.add_subcommand("gen-data", "generate and persist the dataset splits");
  add_common(gen, true);
  auto* train = app.add_subcommand("train", "train the configured baseline");
  add_common(train, true);
  auto* calibrate = app.add_subcommand("calibrate", "calibrate prediction intervals");
  add_common(calibrate, true);
  auto* eval = app.add_subcommand("eval", "evaluate metrics and write reports");
  add_common(eval, true);
  auto* run = app.add_subcommand("run", "full pipeline: gen-data, train, calibrate, eval");
  add_common(run, true);

  auto* reproduce = app.add_subcommand("reproduce", "rerun a benchmark table");
  reproduce->add_option("--table", table_id, "table id: allen2d | helm3d | local1d")
      ->required();
  reproduce->add_option("--out", out_dir, "output directory")->default_val("runs/tables");

  auto* curves = app.add_subcommand("export-curves", "render coverage curves for a run");
  curves->add_option("--run", run_dir, "completed run directory")->required();

  auto* presets = app.add_subcommand("presets", "list shipped experiment presets");

  CLI11_PARSE(app, argc, argv);

  if (threads > 0) cpinn_set_threads(threads);

  if (presets->parsed()) {
    char* names = nullptr;
    const cpinn_status status = cpinn_builtin_config_names(&names);
    if (status != CPINN_OK) return fail_with("presets", status);
    std::fputs(names, stdout);
    cpinn_string_free(names);
    return 0;
  }

  if (reproduce->parsed()) {
    const cpinn_status status =
        cpinn_reproduce_table(table_id.c_str(), out_dir.c_str(), fast ? 1 : 0);
    return status == CPINN_OK ? 0 : fail_with("reproduce", status);
  }

  if (curves->parsed()) {
    const cpinn_status status = cpinn_export_curves(run_dir.c_str());
    return status == CPINN_OK ? 0 : fail_with("export-curves", status);
  }

  ExperimentHandle handle;
  if (const int rc = open_experiment(config, out_dir, fast, has_seed, seed, handle); rc != 0) {
    return rc;
  }

  const char* stage = nullptr;
  if (gen->parsed()) stage = "gen-data";
  if (train->parsed()) stage = "train";
  if (calibrate->parsed()) stage = "calibrate";
  if (eval->parsed()) stage = "eval";

  cpinn_status status = CPINN_OK;
  if (run->parsed()) {
    status = cpinn_experiment_run(handle.ptr);
    if (status != CPINN_OK) return fail_with("run", status);
  } else {
    status = cpinn_experiment_run_stage(handle.ptr, stage);
    if (status != CPINN_OK) return fail_with(stage, status);
  }
  return 0;
}
