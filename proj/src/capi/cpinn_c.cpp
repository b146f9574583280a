#include "cpinn/cpinn.h"

#include <cstring>
#include <new>
#include <string>

#include <nlohmann/json.hpp>

#include "core/datagen.hpp"
#include "core/errors.hpp"
#include "core/experiment.hpp"
#include "core/problems.hpp"
#include "core/threading.hpp"

namespace {

thread_local std::string g_last_error;

cpinn_status status_from_code(cpinn::ErrorCode code) {
  switch (code) {
    case cpinn::ErrorCode::invalid_argument: return CPINN_ERR_INVALID_ARGUMENT;
    case cpinn::ErrorCode::dimension_mismatch: return CPINN_ERR_DIMENSION;
    case cpinn::ErrorCode::parse_error: return CPINN_ERR_PARSE;
    case cpinn::ErrorCode::io_error: return CPINN_ERR_IO;
    case cpinn::ErrorCode::numeric_error: return CPINN_ERR_NUMERIC;
    case cpinn::ErrorCode::divergence: return CPINN_ERR_DIVERGENCE;
  }
  return CPINN_ERR_INTERNAL;
}

template <typename Fn>
cpinn_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return CPINN_OK;
  } catch (const cpinn::Error& e) {
    g_last_error = e.what();
    return status_from_code(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CPINN_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return CPINN_ERR_INTERNAL;
  }
}

cpinn_status invalid(const char* message) {
  g_last_error = message;
  return CPINN_ERR_INVALID_ARGUMENT;
}

}  // namespace

struct cpinn_problem {
  cpinn::PdeProblem problem;
};

struct cpinn_split {
  cpinn::LabeledSplit split;
};

struct cpinn_experiment {
  cpinn::ExperimentConfig config;
  bool fast = false;
};

extern "C" {

const char* cpinn_version(void) { return "0.1.0"; }

const char* cpinn_last_error(void) { return g_last_error.c_str(); }

cpinn_status cpinn_set_threads(int n) {
  if (n < 1) return invalid("thread count must be >= 1");
  cpinn::set_thread_count(n);
  return CPINN_OK;
}

cpinn_status cpinn_problem_create(const char* name, cpinn_problem** out) {
  if (!name || !out) return invalid("null argument to cpinn_problem_create");
  return guarded([&] {
    auto* handle = new cpinn_problem{cpinn::make_problem(std::string(name))};
    *out = handle;
  });
}

void cpinn_problem_free(cpinn_problem* problem) { delete problem; }

cpinn_status cpinn_problem_dim(const cpinn_problem* problem, int* out_dim) {
  if (!problem || !out_dim) return invalid("null argument to cpinn_problem_dim");
  *out_dim = problem->problem.dim;
  return CPINN_OK;
}

cpinn_status cpinn_problem_exact_solution(const cpinn_problem* problem, const double* x,
                                          int dim, double* out_value) {
  if (!problem || !x || !out_value) return invalid("null argument");
  return guarded([&] {
    const Eigen::Map<const cpinn::Vec> point(x, dim);
    *out_value = cpinn::exact_solution(problem->problem, point);
  });
}

cpinn_status cpinn_problem_forcing(const cpinn_problem* problem, const double* x, int dim,
                                   double* out_value) {
  if (!problem || !x || !out_value) return invalid("null argument");
  return guarded([&] {
    const Eigen::Map<const cpinn::Vec> point(x, dim);
    *out_value = cpinn::forcing(problem->problem, point);
  });
}

cpinn_status cpinn_split_generate(const cpinn_problem* problem, int n_train, int n_cal,
                                  int n_test, const char* noise_json, uint64_t seed,
                                  cpinn_split** out) {
  if (!problem || !noise_json || !out) return invalid("null argument");
  return guarded([&] {
    cpinn::NoiseModel noise;
    try {
      noise = cpinn::noise_from_json(nlohmann::json::parse(noise_json));
    } catch (const nlohmann::json::exception& e) {
      cpinn::fail(cpinn::ErrorCode::parse_error,
                  std::string("invalid noise JSON: ") + e.what());
    }
    auto* handle = new cpinn_split{
        cpinn::sample_dataset(problem->problem, n_train, n_cal, n_test, noise, seed)};
    *out = handle;
  });
}

cpinn_status cpinn_split_save(const cpinn_split* split, const char* prefix) {
  if (!split || !prefix) return invalid("null argument");
  return guarded([&] { cpinn::save_split(split->split, prefix); });
}

cpinn_status cpinn_split_load(const char* prefix, cpinn_split** out) {
  if (!prefix || !out) return invalid("null argument");
  return guarded([&] {
    auto* handle = new cpinn_split{cpinn::load_split(prefix)};
    *out = handle;
  });
}

cpinn_status cpinn_split_counts(const cpinn_split* split, int* out_train, int* out_cal,
                                int* out_test) {
  if (!split) return invalid("null split handle");
  if (out_train) *out_train = split->split.train.size();
  if (out_cal) *out_cal = split->split.cal.size();
  if (out_test) *out_test = split->split.test.size();
  return CPINN_OK;
}

void cpinn_split_free(cpinn_split* split) { delete split; }

cpinn_status cpinn_experiment_open(const char* config_json_path, cpinn_experiment** out) {
  if (!config_json_path || !out) return invalid("null argument");
  return guarded([&] {
    auto* handle = new cpinn_experiment{cpinn::load_config(config_json_path), false};
    *out = handle;
  });
}

cpinn_status cpinn_experiment_open_builtin(const char* preset_name, cpinn_experiment** out) {
  if (!preset_name || !out) return invalid("null argument");
  return guarded([&] {
    auto* handle = new cpinn_experiment{cpinn::builtin_config(preset_name), false};
    *out = handle;
  });
}

void cpinn_experiment_free(cpinn_experiment* experiment) { delete experiment; }

cpinn_status cpinn_experiment_set_fast(cpinn_experiment* experiment, int fast) {
  if (!experiment) return invalid("null experiment handle");
  experiment->fast = fast != 0;
  return CPINN_OK;
}

cpinn_status cpinn_experiment_set_seed(cpinn_experiment* experiment, uint64_t seed) {
  if (!experiment) return invalid("null experiment handle");
  experiment->config.data.seed = seed;
  return CPINN_OK;
}

cpinn_status cpinn_experiment_set_output_dir(cpinn_experiment* experiment, const char* dir) {
  if (!experiment || !dir) return invalid("null argument");
  experiment->config.output_dir = dir;
  return CPINN_OK;
}

cpinn_status cpinn_experiment_run_stage(cpinn_experiment* experiment, const char* stage) {
  if (!experiment || !stage) return invalid("null argument");
  return guarded([&] {
    cpinn::ExperimentConfig cfg = experiment->config;
    if (experiment->fast) cpinn::apply_fast_mode(cfg);
    cpinn::ExperimentRun run(std::move(cfg));
    run.run_stage(stage);
  });
}

cpinn_status cpinn_experiment_run(cpinn_experiment* experiment) {
  if (!experiment) return invalid("null experiment handle");
  return guarded([&] {
    cpinn::ExperimentConfig cfg = experiment->config;
    if (experiment->fast) cpinn::apply_fast_mode(cfg);
    cpinn::run_experiment(cfg);
  });
}

cpinn_status cpinn_builtin_config_names(char** out) {
  if (!out) return invalid("null output pointer");
  return guarded([&] {
    std::string joined;
    for (const auto& name : cpinn::builtin_config_names()) {
      joined += name;
      joined += '\n';
    }
    char* buffer = new char[joined.size() + 1];
    std::memcpy(buffer, joined.c_str(), joined.size() + 1);
    *out = buffer;
  });
}

void cpinn_string_free(char* s) { delete[] s; }

cpinn_status cpinn_reproduce_table(const char* table_id, const char* out_dir, int fast) {
  if (!table_id || !out_dir) return invalid("null argument");
  return guarded([&] { cpinn::reproduce_table(table_id, out_dir, fast != 0); });
}

cpinn_status cpinn_export_curves(const char* run_dir) {
  if (!run_dir) return invalid("null run directory");
  return guarded([&] { cpinn::export_curves(run_dir); });
}

}  // extern "C"
