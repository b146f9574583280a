#include "core/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include <nlohmann/json.hpp>

#include "core/errors.hpp"

namespace cpinn {

const std::array<double, 19>& alpha_grid() {
  static const std::array<double, 19> grid = [] {
    std::array<double, 19> g{};
    for (int k = 0; k < 19; ++k) g[static_cast<std::size_t>(k)] = 0.05 * (k + 1);
    return g;
  }();
  return grid;
}

namespace {

double coverage_from_widths(const LabeledSet& test, const RowVec& centers,
                            const RowVec& widths) {
  int covered = 0;
  for (int j = 0; j < test.size(); ++j) {
    const double lo = centers[j] - widths[j];
    const double hi = centers[j] + widths[j];
    if (lo <= test.u[j] && test.u[j] <= hi) ++covered;
  }
  return static_cast<double>(covered) / test.size();
}

}  // namespace

double coverage(const IntervalPredictor& predictor, const LabeledSet& test, double alpha) {
  require(test.size() > 0, ErrorCode::invalid_argument, "coverage over an empty test set");
  const RowVec centers = predictor.centers(test.X);
  const RowVec widths = predictor.width_multiplier(alpha) * predictor.shapes(test.X);
  return coverage_from_widths(test, centers, widths);
}

double acd(const IntervalPredictor& predictor, const LabeledSet& test) {
  require(test.size() > 0, ErrorCode::invalid_argument, "acd over an empty test set");
  const RowVec centers = predictor.centers(test.X);
  const RowVec shapes = predictor.shapes(test.X);
  double acc = 0.0;
  for (double alpha : alpha_grid()) {
    const RowVec widths = predictor.width_multiplier(alpha) * shapes;
    const double c = coverage_from_widths(test, centers, widths);
    acc += std::abs(c - (1.0 - alpha));
  }
  return acc / static_cast<double>(alpha_grid().size());
}

double sharpness(const IntervalPredictor& predictor, const LabeledSet& test, double alpha) {
  require(test.size() > 0, ErrorCode::invalid_argument, "sharpness over an empty test set");
  const RowVec widths = predictor.half_widths(test.X, alpha);
  double acc = 0.0;
  for (int j = 0; j < test.size(); ++j) {
    if (std::isinf(widths[j])) return std::numeric_limits<double>::infinity();
    acc += 2.0 * widths[j];
  }
  return acc / test.size();
}

LabeledSet region_filter(const LabeledSet& test,
                         const std::function<bool(const Vec&)>& region) {
  std::vector<int> keep;
  for (int j = 0; j < test.size(); ++j) {
    if (region(test.X.col(j))) keep.push_back(j);
  }
  LabeledSet out;
  out.X.resize(test.X.rows(), static_cast<Eigen::Index>(keep.size()));
  out.u.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.X.col(static_cast<Eigen::Index>(i)) = test.X.col(keep[i]);
    out.u[static_cast<Eigen::Index>(i)] = test.u[keep[i]];
  }
  return out;
}

MetricsReport evaluate_predictor(const IntervalPredictor& predictor, const LabeledSet& test,
                                 double alpha, const std::string& region_tag) {
  MetricsReport r;
  r.region_tag = region_tag;
  r.alpha = alpha;
  r.expected_coverage = 1.0 - alpha;
  r.n_test = test.size();
  if (test.size() == 0) {
    r.absent = true;
    return r;
  }
  const RowVec centers = predictor.centers(test.X);
  const RowVec shapes = predictor.shapes(test.X);
  double acd_acc = 0.0;
  for (std::size_t k = 0; k < alpha_grid().size(); ++k) {
    const double a = alpha_grid()[k];
    const RowVec widths = predictor.width_multiplier(a) * shapes;
    const double c = coverage_from_widths(test, centers, widths);
    r.per_alpha_coverage[k] = c;
    acd_acc += std::abs(c - (1.0 - a));
  }
  r.acd = acd_acc / static_cast<double>(alpha_grid().size());
  {
    const RowVec widths = predictor.width_multiplier(alpha) * shapes;
    r.empirical_coverage = coverage_from_widths(test, centers, widths);
    double acc = 0.0;
    r.infinite_width = false;
    for (int j = 0; j < test.size(); ++j) {
      if (std::isinf(widths[j])) {
        r.infinite_width = true;
        break;
      }
      acc += 2.0 * widths[j];
    }
    r.sharpness = r.infinite_width ? std::numeric_limits<double>::infinity()
                                   : acc / test.size();
  }
  return r;
}

nlohmann::ordered_json metrics_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["region"] = r.region_tag;
  j["alpha"] = r.alpha;
  j["expected_coverage"] = r.expected_coverage;
  if (r.absent) {
    j["absent"] = true;
    j["n_test"] = r.n_test;
    return j;
  }
  j["empirical_coverage"] = r.empirical_coverage;
  j["acd"] = r.acd;
  if (r.infinite_width) {
    j["sharpness"] = "inf";
    j["infinite_width"] = true;
  } else {
    j["sharpness"] = r.sharpness;
    j["infinite_width"] = false;
  }
  j["n_test"] = r.n_test;
  nlohmann::ordered_json grid = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < alpha_grid().size(); ++k) {
    grid.push_back({{"alpha", alpha_grid()[k]},
                    {"expected", 1.0 - alpha_grid()[k]},
                    {"empirical", r.per_alpha_coverage[k]}});
  }
  j["coverage_curve"] = std::move(grid);
  return j;
}

std::string metrics_csv_row(const std::string& type, const std::string& model,
                            const MetricsReport& r, bool include_sharpness) {
  char buf[256];
  if (r.absent) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.2f,-,-,%s", type.c_str(), model.c_str(),
                  r.expected_coverage, include_sharpness ? "-" : "");
    return buf;
  }
  std::string sharp = "-";
  if (include_sharpness) {
    if (r.infinite_width) {
      sharp = "inf";
    } else {
      char sb[32];
      std::snprintf(sb, sizeof(sb), "%.4f", r.sharpness);
      sharp = sb;
    }
  }
  std::snprintf(buf, sizeof(buf), "%s,%s,%.2f,%.4f,%.4f,%s", type.c_str(), model.c_str(),
                r.expected_coverage, r.empirical_coverage, r.acd, sharp.c_str());
  return buf;
}

}  // namespace cpinn
