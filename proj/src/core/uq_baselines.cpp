#include "core/uq_baselines.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace cpinn {

namespace {

// Indices of the k nearest columns of `points` to x under the Euclidean norm.
std::vector<int> knn_indices(const Mat& points, const Vec& x, int k) {
  const int n = static_cast<int>(points.cols());
  require(n >= 1, ErrorCode::invalid_argument, "nearest-neighbor query on an empty set");
  require(k >= 1 && k <= n, ErrorCode::invalid_argument,
          "k must lie in [1, " + std::to_string(n) + "], got " + std::to_string(k));
  std::vector<std::pair<double, int>> d(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    d[static_cast<std::size_t>(j)] = {(points.col(j) - x).squaredNorm(), j};
  }
  std::partial_sort(d.begin(), d.begin() + k, d.end());
  std::vector<int> idx(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) idx[static_cast<std::size_t>(j)] = d[static_cast<std::size_t>(j)].second;
  return idx;
}

}  // namespace

std::string baseline_kind_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::gd: return "gd";
    case BaselineKind::ld: return "ld";
    case BaselineKind::dropout: return "dropout";
    case BaselineKind::vi: return "vi";
    case BaselineKind::hmc: return "hmc";
  }
  return "unknown";
}

BaselineKind parse_baseline_kind(const std::string& kind) {
  for (auto c : {BaselineKind::gd, BaselineKind::ld, BaselineKind::dropout,
                 BaselineKind::vi, BaselineKind::hmc}) {
    if (baseline_kind_string(c) == kind) return c;
  }
  fail(ErrorCode::invalid_argument,
       "unknown baseline '" + kind + "'; valid options: gd, ld, dropout, vi, hmc");
}

double gd_sigma(const Mat& train_inputs, const Vec& x_new, int k, double floor) {
  require(x_new.size() == train_inputs.rows(), ErrorCode::dimension_mismatch,
          "query point dimension mismatch in gd_sigma");
  const auto idx = knn_indices(train_inputs, x_new, k);
  double acc = 0.0;
  for (int j : idx) acc += (train_inputs.col(j) - x_new).squaredNorm();
  return std::max(std::sqrt(acc / k), floor);
}

double ld_sigma(const MlpParameters& params, const Mat& train_inputs, const Vec& x_new,
                int k, double floor, bool neighbors_in_latent) {
  require(x_new.size() == train_inputs.rows(), ErrorCode::dimension_mismatch,
          "query point dimension mismatch in ld_sigma");
  const Vec h_new = latent(params, x_new);
  const Mat h_train = latent_batch(params, train_inputs);
  const auto idx = neighbors_in_latent ? knn_indices(h_train, h_new, k)
                                       : knn_indices(train_inputs, x_new, k);
  double acc = 0.0;
  for (int j : idx) acc += (h_train.col(j) - h_new).squaredNorm();
  return std::max(std::sqrt(acc / k), floor);
}

DropoutPrediction dropout_predict(const MlpParameters& params, const Vec& x, int n_mc,
                                  double keep_prob, std::uint64_t seed) {
  require(n_mc >= 1, ErrorCode::invalid_argument, "n_mc must be >= 1");
  DropoutPrediction out;
  out.mean_deterministic = forward(params, x);
  double sum = 0.0, sum_sq = 0.0;
  for (int n = 0; n < n_mc; ++n) {
    const DropoutMask mask =
        sample_dropout_mask(params, keep_prob, derive_seed(seed, "mask", static_cast<std::uint64_t>(n)));
    const double v = forward(params, x, &mask);
    sum += v;
    sum_sq += v * v;
  }
  out.mean_mc = sum / n_mc;
  // population variance (divisor n_mc)
  const double var = std::max(0.0, sum_sq / n_mc - out.mean_mc * out.mean_mc);
  out.sigma = std::max(std::sqrt(var), kSigmaFloor);
  return out;
}

UncertaintyModel make_gd_model(const MlpParameters& params, Mat train_inputs, int k,
                               std::string provenance) {
  UncertaintyModel m;
  m.kind = BaselineKind::gd;
  m.provenance = std::move(provenance);
  auto inputs = std::make_shared<Mat>(std::move(train_inputs));
  auto net = std::make_shared<MlpParameters>(params);
  m.mean = [net](const Vec& x) { return forward(*net, x); };
  m.mean_batch = [net](const Mat& X) { return forward_batch(*net, X); };
  m.sigma = [inputs, k](const Vec& x) { return gd_sigma(*inputs, x, k); };
  m.sigma_batch = [inputs, k](const Mat& X) {
    RowVec s(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) s[j] = gd_sigma(*inputs, X.col(j), k);
    return s;
  };
  return m;
}

UncertaintyModel make_ld_model(const MlpParameters& params, Mat train_inputs, int k,
                               bool neighbors_in_latent, std::string provenance) {
  UncertaintyModel m;
  m.kind = BaselineKind::ld;
  m.provenance = std::move(provenance);
  auto inputs = std::make_shared<Mat>(std::move(train_inputs));
  auto net = std::make_shared<MlpParameters>(params);
  m.mean = [net](const Vec& x) { return forward(*net, x); };
  m.mean_batch = [net](const Mat& X) { return forward_batch(*net, X); };
  m.sigma = [net, inputs, k, neighbors_in_latent](const Vec& x) {
    return ld_sigma(*net, *inputs, x, k, kSigmaFloor, neighbors_in_latent);
  };
  m.sigma_batch = [net, inputs, k, neighbors_in_latent](const Mat& X) {
    RowVec s(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      s[j] = ld_sigma(*net, *inputs, X.col(j), k, kSigmaFloor, neighbors_in_latent);
    }
    return s;
  };
  return m;
}

UncertaintyModel make_dropout_model(const MlpParameters& params, double keep_prob,
                                    int n_mc, std::uint64_t seed,
                                    std::string provenance) {
  require(n_mc >= 2, ErrorCode::invalid_argument,
          "dropout model needs n_mc >= 2 for a variance estimate");
  UncertaintyModel m;
  m.kind = BaselineKind::dropout;
  m.provenance = std::move(provenance);
  auto net = std::make_shared<MlpParameters>(params);
  // The interval center stays the deterministic forward pass; the MC mean is
  // reported by dropout_predict but not used here.
  m.mean = [net](const Vec& x) { return forward(*net, x); };
  m.mean_batch = [net](const Mat& X) { return forward_batch(*net, X); };
  m.sigma = [net, n_mc, keep_prob, seed](const Vec& x) {
    return dropout_predict(*net, x, n_mc, keep_prob, seed).sigma;
  };
  m.sigma_batch = [net, n_mc, keep_prob, seed](const Mat& X) {
    RowVec sum = RowVec::Zero(X.cols());
    RowVec sum_sq = RowVec::Zero(X.cols());
    for (int n = 0; n < n_mc; ++n) {
      const DropoutMask mask = sample_dropout_mask(
          *net, keep_prob, derive_seed(seed, "mask", static_cast<std::uint64_t>(n)));
      const RowVec v = forward_batch(*net, X, &mask);
      sum += v;
      sum_sq += v.cwiseProduct(v);
    }
    const RowVec mean = sum / n_mc;
    return ((sum_sq / n_mc - mean.cwiseProduct(mean)).cwiseMax(0.0))
        .cwiseSqrt()
        .cwiseMax(kSigmaFloor)
        .eval();
  };
  return m;
}

}  // namespace cpinn
