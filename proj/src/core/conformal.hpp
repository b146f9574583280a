#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "core/datagen.hpp"
#include "core/linalg.hpp"
#include "core/network.hpp"
#include "core/uq_baselines.hpp"

namespace cpinn {

enum class ScoreSource { vanilla, scaled, localized };
// Data-discipline tag: the quantile network may only see training-set scores
// and the conformal quantile only calibration-set scores.
enum class ScoreProvenance { training, calibration };

struct ScoreSet {
  std::vector<double> sorted;  // ascending, non-negative, finite
  ScoreSource source = ScoreSource::vanilla;
  ScoreProvenance provenance = ScoreProvenance::calibration;
};

ScoreSet make_score_set(std::vector<double> scores, ScoreSource source,
                        ScoreProvenance provenance);

// k-th smallest score with k = ceil((1-alpha)(N_c+1)); +infinity when k
// exceeds the score count.
double conformal_quantile(const ScoreSet& scores, double alpha);

// Scores on a labeled set, tagged with their provenance.
struct TaggedScores {
  Mat inputs;                 // dim x n
  std::vector<double> values;
  ScoreProvenance provenance = ScoreProvenance::training;
};

TaggedScores scaled_scores(const UncertaintyModel& model, const LabeledSet& set,
                           ScoreProvenance provenance);

// Positive conditional-quantile network g(x) = softplus(mlp(x)) + floor.
struct QuantileNet {
  MlpParameters params;
  double target_level = 0.95;  // 1 - alpha
  double floor = 1e-6;

  double eval(const Vec& x) const;
  RowVec eval_batch(const Mat& X) const;
};

struct QuantileNetConfig {
  std::vector<int> hidden{32, 32};
  int steps = 5000;
  double lr = 1e-3;
  double floor = 1e-6;
  std::uint64_t seed = 7;
};

// Pinball-loss regression of the (1-alpha) conditional quantile on
// training-set scores.
QuantileNet fit_quantile_net(const TaggedScores& train_scores, double alpha,
                             const QuantileNetConfig& cfg = {});

// Pinball loss rho_{1-alpha}(t) = (1-alpha) t_+ + alpha (-t)_+.
double pinball_loss(double level, double t);

// Calibrated interval predictor: center(x) +/- quantile(scores, alpha) * shape(x),
// or Gaussian-quantile heuristic bands when uncalibrated.
class IntervalPredictor {
 public:
  enum class Mode { conformal_vanilla, conformal_scaled, conformal_local, gaussian_heuristic };

  static IntervalPredictor conformal(Mode mode, std::function<double(const Vec&)> center,
                                     std::function<double(const Vec&)> shape,
                                     ScoreSet scores, double alpha_primary);
  static IntervalPredictor gaussian(std::function<double(const Vec&)> center,
                                    std::function<double(const Vec&)> sigma);

  double center(const Vec& x) const { return center_(x); }
  double half_width(const Vec& x, double alpha) const;
  std::pair<double, double> interval(const Vec& x, double alpha) const;

  // half_width(x, alpha) factors as width_multiplier(alpha) * shape(x);
  // evaluating shapes once and sweeping alpha avoids re-querying the model.
  double width_multiplier(double alpha) const;
  RowVec shapes(const Mat& X) const;
  RowVec centers(const Mat& X) const;

  // Width profile over many points at one level.
  RowVec half_widths(const Mat& X, double alpha) const;

  Mode mode() const { return mode_; }
  const ScoreSet& scores() const { return scores_; }
  double alpha_primary() const { return alpha_primary_; }

  void set_batch_shapes(std::function<RowVec(const Mat&)> center_batch,
                        std::function<RowVec(const Mat&)> shape_batch);

  nlohmann::ordered_json export_metadata() const;

 private:
  Mode mode_ = Mode::conformal_vanilla;
  std::function<double(const Vec&)> center_;
  std::function<double(const Vec&)> shape_;  // per-x width multiplier
  std::function<RowVec(const Mat&)> center_batch_, shape_batch_;
  ScoreSet scores_;
  double alpha_primary_ = 0.05;
};

IntervalPredictor calibrate_vanilla(const UncertaintyModel& model, const LabeledSet& cal,
                                    double alpha);
IntervalPredictor calibrate_scaled(const UncertaintyModel& model, const LabeledSet& cal,
                                   double alpha);
IntervalPredictor calibrate_local(const UncertaintyModel& model, const QuantileNet& g,
                                  const LabeledSet& cal, double alpha);
IntervalPredictor gaussian_heuristic(const UncertaintyModel& model);

// Inverse standard normal CDF (Acklam's rational approximation).
double normal_quantile(double p);

nlohmann::ordered_json quantile_net_to_json(const QuantileNet& g);
QuantileNet quantile_net_from_json(const nlohmann::json& j);

}  // namespace cpinn
