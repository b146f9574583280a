/*
 * cpinn — physics-informed network training with conformal interval
 * calibration, behind a C interface.
 *
 * All functions return cpinn_status; on any non-OK status the thread-local
 * message from cpinn_last_error() describes the failure. Objects are opaque
 * handles released with the matching *_free function.
 */
#ifndef CPINN_H
#define CPINN_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cpinn_status {
  CPINN_OK = 0,
  CPINN_ERR_INVALID_ARGUMENT = 1,
  CPINN_ERR_DIMENSION = 2,
  CPINN_ERR_PARSE = 3,
  CPINN_ERR_IO = 4,
  CPINN_ERR_NUMERIC = 5,
  CPINN_ERR_DIVERGENCE = 6,
  CPINN_ERR_INTERNAL = 7
} cpinn_status;

const char* cpinn_version(void);

/* Message for the most recent failure on this thread ("" if none). */
const char* cpinn_last_error(void);

/* Caps worker threads (also settable via the CPINN_THREADS env var). */
cpinn_status cpinn_set_threads(int n);

/* ------------------------------------------------------------------ */
/* Benchmark problems                                                  */
/* ------------------------------------------------------------------ */

typedef struct cpinn_problem cpinn_problem;

/* name: poisson_1d | oscillator_1d | allen_cahn_2d | helmholtz_3d */
cpinn_status cpinn_problem_create(const char* name, cpinn_problem** out);
void cpinn_problem_free(cpinn_problem* problem);

cpinn_status cpinn_problem_dim(const cpinn_problem* problem, int* out_dim);
cpinn_status cpinn_problem_exact_solution(const cpinn_problem* problem, const double* x,
                                          int dim, double* out_value);
cpinn_status cpinn_problem_forcing(const cpinn_problem* problem, const double* x, int dim,
                                   double* out_value);

/* ------------------------------------------------------------------ */
/* Datasets                                                            */
/* ------------------------------------------------------------------ */

typedef struct cpinn_split cpinn_split;

/* noise_json example: {"kind":"homoskedastic","sigma":0.05} */
cpinn_status cpinn_split_generate(const cpinn_problem* problem, int n_train, int n_cal,
                                  int n_test, const char* noise_json, uint64_t seed,
                                  cpinn_split** out);
/* Writes <prefix>.train.csv, .cal.csv, .test.csv and .meta.json. */
cpinn_status cpinn_split_save(const cpinn_split* split, const char* prefix);
cpinn_status cpinn_split_load(const char* prefix, cpinn_split** out);
cpinn_status cpinn_split_counts(const cpinn_split* split, int* out_train, int* out_cal,
                                int* out_test);
void cpinn_split_free(cpinn_split* split);

/* ------------------------------------------------------------------ */
/* Experiments                                                         */
/* ------------------------------------------------------------------ */

typedef struct cpinn_experiment cpinn_experiment;

cpinn_status cpinn_experiment_open(const char* config_json_path, cpinn_experiment** out);
/* Shipped presets; see cpinn_builtin_config_names. */
cpinn_status cpinn_experiment_open_builtin(const char* preset_name, cpinn_experiment** out);
void cpinn_experiment_free(cpinn_experiment* experiment);

/* Desk-scale mode: divides training epochs by 10. Set before running. */
cpinn_status cpinn_experiment_set_fast(cpinn_experiment* experiment, int fast);
/* Overrides the dataset seed from the config. */
cpinn_status cpinn_experiment_set_seed(cpinn_experiment* experiment, uint64_t seed);
cpinn_status cpinn_experiment_set_output_dir(cpinn_experiment* experiment, const char* dir);

/* stage: gen-data | train | calibrate | eval (missing prerequisites are
 * computed or loaded from the output directory automatically). */
cpinn_status cpinn_experiment_run_stage(cpinn_experiment* experiment, const char* stage);
/* The full pipeline: gen-data, train, calibrate, eval. */
cpinn_status cpinn_experiment_run(cpinn_experiment* experiment);

/* Newline-separated preset names; free with cpinn_string_free. */
cpinn_status cpinn_builtin_config_names(char** out);
void cpinn_string_free(char* s);

/* ------------------------------------------------------------------ */
/* Benchmark tables and exports                                        */
/* ------------------------------------------------------------------ */

/* table_id: allen2d | helm3d | local1d. Writes table_<id>.csv plus one run
 * directory per row under out_dir. */
cpinn_status cpinn_reproduce_table(const char* table_id, const char* out_dir, int fast);

/* Renders coverage-curve SVG from a completed run directory. */
cpinn_status cpinn_export_curves(const char* run_dir);

#ifdef __cplusplus
}
#endif

#endif /* CPINN_H */
