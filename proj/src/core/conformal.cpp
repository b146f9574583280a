#include "core/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include <nlohmann/json.hpp>

#include "core/diff_engine.hpp"
#include "core/errors.hpp"
#include "core/training.hpp"

namespace cpinn {

namespace {

const char* mode_string(IntervalPredictor::Mode mode) {
  switch (mode) {
    case IntervalPredictor::Mode::conformal_vanilla: return "vanilla";
    case IntervalPredictor::Mode::conformal_scaled: return "scaled";
    case IntervalPredictor::Mode::conformal_local: return "local";
    case IntervalPredictor::Mode::gaussian_heuristic: return "gaussian_heuristic";
  }
  return "unknown";
}

}  // namespace

ScoreSet make_score_set(std::vector<double> scores, ScoreSource source,
                        ScoreProvenance provenance) {
  for (double s : scores) {
    require(std::isfinite(s) && s >= 0.0, ErrorCode::invalid_argument,
            "nonconformity scores must be finite and non-negative");
  }
  std::sort(scores.begin(), scores.end());
  return ScoreSet{std::move(scores), source, provenance};
}

double conformal_quantile(const ScoreSet& scores, double alpha) {
  require(!scores.sorted.empty(), ErrorCode::invalid_argument,
          "conformal quantile of an empty score set");
  require(alpha > 0.0 && alpha < 1.0, ErrorCode::invalid_argument,
          "alpha must lie in (0, 1), got " + std::to_string(alpha));
  const std::size_t n = scores.sorted.size();
  const auto k =
      static_cast<std::size_t>(std::ceil((1.0 - alpha) * (static_cast<double>(n) + 1.0)));
  if (k > n) return std::numeric_limits<double>::infinity();
  return scores.sorted[k - 1];
}

TaggedScores scaled_scores(const UncertaintyModel& model, const LabeledSet& set,
                           ScoreProvenance provenance) {
  TaggedScores out;
  out.inputs = set.X;
  out.provenance = provenance;
  out.values.resize(static_cast<std::size_t>(set.size()));
  const RowVec mean = model.mean_batch(set.X);
  const RowVec sigma = model.sigma_batch(set.X);
  for (int j = 0; j < set.size(); ++j) {
    const double s = std::max(sigma[j], kSigmaFloor);
    out.values[static_cast<std::size_t>(j)] = std::abs(set.u[j] - mean[j]) / s;
  }
  return out;
}

double pinball_loss(double level, double t) {
  return level * std::max(t, 0.0) + (1.0 - level) * std::max(-t, 0.0);
}

double QuantileNet::eval(const Vec& x) const {
  const double z = forward(params, x);
  const double sp = z > 30.0 ? z : std::log1p(std::exp(z));
  return sp + floor;
}

RowVec QuantileNet::eval_batch(const Mat& X) const {
  RowVec z = forward_batch(params, X);
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    z[j] = (z[j] > 30.0 ? z[j] : std::log1p(std::exp(z[j]))) + floor;
  }
  return z;
}

QuantileNet fit_quantile_net(const TaggedScores& train_scores, double alpha,
                             const QuantileNetConfig& cfg) {
  require(train_scores.provenance == ScoreProvenance::training, ErrorCode::invalid_argument,
          "the quantile network must be fit on training-set scores only");
  require(!train_scores.values.empty(), ErrorCode::invalid_argument,
          "cannot fit a quantile network on an empty score set");
  require(alpha > 0.0 && alpha < 1.0, ErrorCode::invalid_argument,
          "alpha must lie in (0, 1)");

  const int dim = static_cast<int>(train_scores.inputs.rows());
  const int n = static_cast<int>(train_scores.values.size());
  const double level = 1.0 - alpha;

  std::vector<int> dims;
  dims.push_back(dim);
  for (int h : cfg.hidden) dims.push_back(h);
  dims.push_back(1);

  QuantileNet g;
  g.params = init_xavier(dims, cfg.seed);
  g.target_level = level;
  g.floor = cfg.floor;

  Vec flat = g.params.flatten();
  AdamOptimizer adam(flat.size());
  Vec grad(flat.size());
  const Mat& X = train_scores.inputs;

  for (int step = 0; step < cfg.steps; ++step) {
    g.params.set_from_flat(flat);
    MlpDerivEngine engine(g.params);
    engine.forward(X, DerivOrder::value);
    const RowVec& z = engine.value();

    RowVec seed(n);
    double loss = 0.0;
    for (int j = 0; j < n; ++j) {
      const double sp = z[j] > 30.0 ? z[j] : std::log1p(std::exp(z[j]));
      const double gx = sp + cfg.floor;
      const double t = train_scores.values[static_cast<std::size_t>(j)] - gx;
      loss += pinball_loss(level, t);
      // d(pinball)/dg = -level on t>0, (1-level) on t<=0; chain through softplus
      const double dldg = t > 0.0 ? -level : (1.0 - level);
      const double dgdz = 1.0 / (1.0 + std::exp(-z[j]));
      seed[j] = dldg * dgdz / n;
    }
    if (!std::isfinite(loss)) {
      fail(ErrorCode::divergence,
           "quantile-net training diverged at step " + std::to_string(step));
    }
    grad.setZero();
    engine.backward(seed, nullptr, nullptr, grad);
    adam.step(flat, grad, cfg.lr);
  }
  g.params.set_from_flat(flat);
  return g;
}

IntervalPredictor IntervalPredictor::conformal(Mode mode,
                                               std::function<double(const Vec&)> center,
                                               std::function<double(const Vec&)> shape,
                                               ScoreSet scores, double alpha_primary) {
  require(mode != Mode::gaussian_heuristic, ErrorCode::invalid_argument,
          "use IntervalPredictor::gaussian for heuristic bands");
  require(scores.provenance == ScoreProvenance::calibration, ErrorCode::invalid_argument,
          "conformal quantiles must be computed from calibration-set scores only");
  IntervalPredictor p;
  p.mode_ = mode;
  p.center_ = std::move(center);
  p.shape_ = std::move(shape);
  p.scores_ = std::move(scores);
  p.alpha_primary_ = alpha_primary;
  return p;
}

IntervalPredictor IntervalPredictor::gaussian(std::function<double(const Vec&)> center,
                                              std::function<double(const Vec&)> sigma) {
  IntervalPredictor p;
  p.mode_ = Mode::gaussian_heuristic;
  p.center_ = std::move(center);
  p.shape_ = std::move(sigma);
  return p;
}

double IntervalPredictor::width_multiplier(double alpha) const {
  if (mode_ == Mode::gaussian_heuristic) {
    return normal_quantile(1.0 - alpha / 2.0);
  }
  return conformal_quantile(scores_, alpha);
}

double IntervalPredictor::half_width(const Vec& x, double alpha) const {
  const double q = width_multiplier(alpha);
  if (std::isinf(q)) return q;
  return q * shape_(x);
}

std::pair<double, double> IntervalPredictor::interval(const Vec& x, double alpha) const {
  const double c = center_(x);
  const double h = half_width(x, alpha);
  return {c - h, c + h};
}

RowVec IntervalPredictor::shapes(const Mat& X) const {
  if (shape_batch_) return shape_batch_(X);
  RowVec s(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) s[j] = shape_(X.col(j));
  return s;
}

RowVec IntervalPredictor::centers(const Mat& X) const {
  if (center_batch_) return center_batch_(X);
  RowVec c(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) c[j] = center_(X.col(j));
  return c;
}

RowVec IntervalPredictor::half_widths(const Mat& X, double alpha) const {
  return width_multiplier(alpha) * shapes(X);
}

void IntervalPredictor::set_batch_shapes(std::function<RowVec(const Mat&)> center_batch,
                                         std::function<RowVec(const Mat&)> shape_batch) {
  center_batch_ = std::move(center_batch);
  shape_batch_ = std::move(shape_batch);
}

nlohmann::ordered_json IntervalPredictor::export_metadata() const {
  nlohmann::ordered_json j;
  j["mode"] = mode_string(mode_);
  if (mode_ != Mode::gaussian_heuristic) {
    j["alpha_primary"] = alpha_primary_;
    j["n_calibration"] = scores_.sorted.size();
    switch (scores_.source) {
      case ScoreSource::vanilla: j["score_source"] = "vanilla"; break;
      case ScoreSource::scaled: j["score_source"] = "scaled"; break;
      case ScoreSource::localized: j["score_source"] = "localized"; break;
    }
    j["quantile_at_alpha_primary"] = conformal_quantile(scores_, alpha_primary_);
    j["scores"] = scores_.sorted;
  }
  return j;
}

IntervalPredictor calibrate_vanilla(const UncertaintyModel& model, const LabeledSet& cal,
                                    double alpha) {
  require(cal.size() > 0, ErrorCode::invalid_argument, "calibration set is empty");
  const RowVec mean = model.mean_batch(cal.X);
  std::vector<double> scores(static_cast<std::size_t>(cal.size()));
  for (int j = 0; j < cal.size(); ++j) {
    scores[static_cast<std::size_t>(j)] = std::abs(cal.u[j] - mean[j]);
  }
  auto center = model.mean;
  IntervalPredictor p = IntervalPredictor::conformal(
      IntervalPredictor::Mode::conformal_vanilla, center, [](const Vec&) { return 1.0; },
      make_score_set(std::move(scores), ScoreSource::vanilla, ScoreProvenance::calibration),
      alpha);
  p.set_batch_shapes(model.mean_batch,
                     [](const Mat& X) { return RowVec::Ones(X.cols()).eval(); });
  return p;
}

IntervalPredictor calibrate_scaled(const UncertaintyModel& model, const LabeledSet& cal,
                                   double alpha) {
  require(cal.size() > 0, ErrorCode::invalid_argument, "calibration set is empty");
  TaggedScores s = scaled_scores(model, cal, ScoreProvenance::calibration);
  IntervalPredictor p = IntervalPredictor::conformal(
      IntervalPredictor::Mode::conformal_scaled, model.mean,
      [sigma = model.sigma](const Vec& x) { return std::max(sigma(x), kSigmaFloor); },
      make_score_set(std::move(s.values), ScoreSource::scaled, ScoreProvenance::calibration),
      alpha);
  p.set_batch_shapes(model.mean_batch, [sigma_batch = model.sigma_batch](const Mat& X) {
    return sigma_batch(X).cwiseMax(kSigmaFloor).eval();
  });
  return p;
}

IntervalPredictor calibrate_local(const UncertaintyModel& model, const QuantileNet& g,
                                  const LabeledSet& cal, double alpha) {
  require(cal.size() > 0, ErrorCode::invalid_argument, "calibration set is empty");
  const RowVec mean = model.mean_batch(cal.X);
  const RowVec sigma = model.sigma_batch(cal.X);
  const RowVec gvals = g.eval_batch(cal.X);
  std::vector<double> scores(static_cast<std::size_t>(cal.size()));
  for (int j = 0; j < cal.size(); ++j) {
    const double denom = gvals[j] * std::max(sigma[j], kSigmaFloor);
    require(denom > 0.0, ErrorCode::numeric_error,
            "quantile network must be strictly positive on the calibration set");
    scores[static_cast<std::size_t>(j)] = std::abs(cal.u[j] - mean[j]) / denom;
  }
  auto gshared = std::make_shared<QuantileNet>(g);
  IntervalPredictor p = IntervalPredictor::conformal(
      IntervalPredictor::Mode::conformal_local, model.mean,
      [gshared, sigma_fn = model.sigma](const Vec& x) {
        return gshared->eval(x) * std::max(sigma_fn(x), kSigmaFloor);
      },
      make_score_set(std::move(scores), ScoreSource::localized, ScoreProvenance::calibration),
      alpha);
  p.set_batch_shapes(model.mean_batch,
                     [gshared, sigma_batch = model.sigma_batch](const Mat& X) {
                       return gshared->eval_batch(X)
                           .cwiseProduct(sigma_batch(X).cwiseMax(kSigmaFloor))
                           .eval();
                     });
  return p;
}

IntervalPredictor gaussian_heuristic(const UncertaintyModel& model) {
  IntervalPredictor p = IntervalPredictor::gaussian(
      model.mean, [sigma = model.sigma](const Vec& x) { return std::max(sigma(x), kSigmaFloor); });
  p.set_batch_shapes(model.mean_batch, [sigma_batch = model.sigma_batch](const Mat& X) {
    return sigma_batch(X).cwiseMax(kSigmaFloor).eval();
  });
  return p;
}

double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, ErrorCode::invalid_argument,
          "normal quantile defined on (0, 1)");
  // Acklam's rational approximation, |relative error| < 1.15e-9.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

nlohmann::ordered_json quantile_net_to_json(const QuantileNet& g) {
  nlohmann::ordered_json j;
  j["target_level"] = g.target_level;
  j["floor"] = g.floor;
  j["params"] = params_to_json(g.params);
  return j;
}

QuantileNet quantile_net_from_json(const nlohmann::json& j) {
  QuantileNet g;
  try {
    g.target_level = j.at("target_level").get<double>();
    g.floor = j.at("floor").get<double>();
    g.params = params_from_json(j.at("params"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse_error, std::string("malformed quantile net: ") + e.what());
  }
  return g;
}

}  // namespace cpinn
