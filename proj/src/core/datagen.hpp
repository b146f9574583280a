#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "core/linalg.hpp"
#include "core/problems.hpp"

namespace cpinn {

// Observation noise attached to a dataset. `sigma` is the homoskedastic
// base level; the hetero kinds add a location-dependent component on top
// (zero outside their supports / nominal regions).
struct NoiseModel {
  enum class Kind { none, homoskedastic, hetero_bumps_1d, hetero_regions_2d };

  Kind kind = Kind::none;
  double sigma = 0.0;

  // hetero_bumps_1d: sum of truncated Gaussian bumps
  double bump = 0.3;
  std::vector<double> centers{1.0, 2.0, 3.0};
  std::vector<double> widths{0.2, 0.2, 0.2};

  // hetero_regions_2d: sigmoid-smoothed union of shapes, by scenario
  char scenario = 'A';
  double region_bump = 0.3;
  double sharpness = 8.0;

  bool heteroskedastic() const {
    return kind == Kind::hetero_bumps_1d || kind == Kind::hetero_regions_2d;
  }
};

// Location-dependent noise level: the constant sigma for the homoskedastic
// kind, the spatial component for the hetero kinds, zero for none.
double noise_std(const NoiseModel& model, const Vec& x);

// Signed membership for the 2D scenarios (positive inside the nominal
// elevated-noise shapes), exposed for region metrics.
double region_signed_distance(const NoiseModel& model, const Vec& x);

// Predicate selecting points inside the elevated-noise region.
std::function<bool(const Vec&)> elevated_region_predicate(const NoiseModel& model);

struct LabeledSet {
  Mat X;  // dim x n
  Vec u;  // n
  int size() const { return static_cast<int>(u.size()); }
};

struct LabeledSplit {
  LabeledSet train, cal, test;
  std::string problem;
  NoiseModel noise;
  std::uint64_t seed = 0;
};

struct SampleOptions {
  // Place test inputs on a uniform grid instead of i.i.d. uniform draws
  // (1D problems only); targets stay noisy.
  bool test_on_grid = false;
};

LabeledSplit sample_dataset(const PdeProblem& problem, int n_train, int n_cal,
                            int n_test, const NoiseModel& noise, std::uint64_t seed,
                            const SampleOptions& opts = {});

// Files written: <prefix>.train.csv, <prefix>.cal.csv, <prefix>.test.csv and
// <prefix>.meta.json. CSV header is x1..xd,u.
void save_split(const LabeledSplit& split, const std::string& prefix);
LabeledSplit load_split(const std::string& prefix);

nlohmann::ordered_json noise_to_json(const NoiseModel& model);
NoiseModel noise_from_json(const nlohmann::json& j);

}  // namespace cpinn
