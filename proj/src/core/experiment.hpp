#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "core/conformal.hpp"
#include "core/datagen.hpp"
#include "core/problems.hpp"
#include "core/training.hpp"
#include "core/uq_baselines.hpp"

namespace cpinn {

struct DataSpec {
  int n_train = 60;
  int n_cal = 30;
  int n_test = 100;
  NoiseModel noise;
  std::uint64_t seed = 0;
  bool test_on_grid = false;
};

struct ViSpec {
  int epochs = 5000;
  double lr = 1e-3;
  double prior_std = 1.0;
  double rho_init_sigma = 0.05;
  int predict_draws = 200;
  double sigma_lik = 0.0;  // 0: use the data noise sigma when known, else 0.1
};

struct HmcSpec {
  double step_size = 2e-4;
  int n_leapfrog = 10;
  int n_samples = 100;
  int n_burnin = 100;
  int thin = 2;
  int warm_start_epochs = 500;
};

struct BaselineSpec {
  BaselineKind kind = BaselineKind::gd;
  int k_neighbors = 5;
  bool ld_neighbors_in_latent = false;
  double keep_prob = 0.9;
  int n_mc = 100;
  ViSpec vi;
  HmcSpec hmc;
};

enum class CpMode { none, vanilla, scaled, local };

std::string cp_mode_string(CpMode mode);
CpMode parse_cp_mode(const std::string& mode);

struct CpSpec {
  CpMode mode = CpMode::scaled;
  double alpha = 0.05;
  QuantileNetConfig quantile_net;
};

struct ExperimentConfig {
  std::string problem = "poisson_1d";
  DataSpec data;
  std::vector<int> architecture;
  CollocationSpec collocation;
  TrainConfig train;
  BaselineSpec baseline;
  CpSpec cp;
  std::string output_dir = "runs/out";

  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

// Desk-scale mode: epochs / 10 on the deterministic trainer, VI and the HMC
// warm start.
void apply_fast_mode(ExperimentConfig& cfg);

// Pipeline: gen-data -> train -> calibrate -> eval, artifacts under
// cfg.output_dir. Each stage loads missing prerequisites from disk or
// recomputes them (deterministically) when absent.
class ExperimentRun {
 public:
  explicit ExperimentRun(ExperimentConfig cfg);

  void run_stage(const std::string& stage);
  void run_all();

  const ExperimentConfig& config() const { return cfg_; }

  // Evaluation products, available after the respective stages.
  const LabeledSplit& split();
  const UncertaintyModel& model();
  const IntervalPredictor& predictor_before();
  const IntervalPredictor& predictor_after();

 private:
  void ensure_data();
  void ensure_trained();
  void ensure_calibrated();
  void stage_gen_data();
  void stage_train();
  void stage_calibrate();
  void stage_eval();
  double resolved_sigma_lik() const;

  ExperimentConfig cfg_;
  PdeProblem problem_;
  CollocationSet colloc_;
  bool has_split_ = false, has_model_ = false, has_predictors_ = false;
  LabeledSplit split_;
  MlpParameters trained_;           // GD/LD/dropout center network
  UncertaintyModel model_;
  IntervalPredictor before_, after_;
  QuantileNet quantile_net_;
  bool has_quantile_net_ = false;
};

void run_experiment(const ExperimentConfig& cfg);

// Shipped experiment presets (the benchmark rows plus the demo pipelines).
std::vector<std::string> builtin_config_names();
ExperimentConfig builtin_config(const std::string& name);

// Reruns every row of a benchmark table and writes its CSV; returns the CSV
// path. table_id: allen2d | helm3d | local1d.
std::string reproduce_table(const std::string& table_id, const std::string& out_dir,
                            bool fast);

// Renders coverage curves (with the diagonal reference) from a completed
// run directory.
void export_curves(const std::string& run_dir);

}  // namespace cpinn
