#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "core/linalg.hpp"
#include "core/network.hpp"

namespace cpinn {

// Every scale function is floored here: conformal scores divide by sigma,
// so a zero scale is undefined.
inline constexpr double kSigmaFloor = 1e-6;

enum class BaselineKind { gd, ld, dropout, vi, hmc };

std::string baseline_kind_string(BaselineKind kind);
BaselineKind parse_baseline_kind(const std::string& kind);

// Root-mean-square distance from x_new to its K nearest training inputs.
double gd_sigma(const Mat& train_inputs, const Vec& x_new, int k,
                double floor = kSigmaFloor);

// Neighbors found in input space; distances measured in the penultimate-layer
// latent space. `neighbors_in_latent` switches the neighbor search itself to
// latent space.
double ld_sigma(const MlpParameters& params, const Mat& train_inputs, const Vec& x_new,
                int k, double floor = kSigmaFloor, bool neighbors_in_latent = false);

struct DropoutPrediction {
  double mean_mc = 0.0;             // Monte Carlo mean over masked passes
  double sigma = 0.0;               // floored root of the population variance
  double mean_deterministic = 0.0;  // unmasked forward pass
};

DropoutPrediction dropout_predict(const MlpParameters& params, const Vec& x, int n_mc,
                                  double keep_prob, std::uint64_t seed);

// A mean predictor plus a strictly positive scale function. Batched variants
// take column-per-point matrices.
struct UncertaintyModel {
  BaselineKind kind = BaselineKind::gd;
  std::function<double(const Vec&)> mean;
  std::function<double(const Vec&)> sigma;
  std::function<RowVec(const Mat&)> mean_batch;
  std::function<RowVec(const Mat&)> sigma_batch;
  std::string provenance;
};

UncertaintyModel make_gd_model(const MlpParameters& params, Mat train_inputs, int k,
                               std::string provenance = {});
UncertaintyModel make_ld_model(const MlpParameters& params, Mat train_inputs, int k,
                               bool neighbors_in_latent = false,
                               std::string provenance = {});
UncertaintyModel make_dropout_model(const MlpParameters& params, double keep_prob,
                                    int n_mc, std::uint64_t seed,
                                    std::string provenance = {});

}  // namespace cpinn
