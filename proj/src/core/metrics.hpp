#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "core/conformal.hpp"
#include "core/datagen.hpp"

namespace cpinn {

// The 19 equally spaced miscoverage levels 0.05, 0.10, ..., 0.95.
const std::array<double, 19>& alpha_grid();

double coverage(const IntervalPredictor& predictor, const LabeledSet& test, double alpha);
double acd(const IntervalPredictor& predictor, const LabeledSet& test);
// Mean interval width; +infinity (flagged by callers) if any width is infinite.
double sharpness(const IntervalPredictor& predictor, const LabeledSet& test, double alpha);

LabeledSet region_filter(const LabeledSet& test,
                         const std::function<bool(const Vec&)>& region);

struct MetricsReport {
  std::string region_tag = "global";  // global | partial
  double alpha = 0.05;
  double expected_coverage = 0.95;
  double empirical_coverage = 0.0;
  double acd = 0.0;
  double sharpness = 0.0;
  bool infinite_width = false;
  int n_test = 0;
  std::array<double, 19> per_alpha_coverage{};
  bool absent = false;  // empty region: metrics not computable
};

MetricsReport evaluate_predictor(const IntervalPredictor& predictor, const LabeledSet& test,
                                 double alpha, const std::string& region_tag = "global");

nlohmann::ordered_json metrics_to_json(const MetricsReport& report);
// One CSV line in the table layout: Type, Model, Expected, Empirical, ACD, Sharpness.
std::string metrics_csv_row(const std::string& type, const std::string& model,
                            const MetricsReport& report, bool include_sharpness);

}  // namespace cpinn
