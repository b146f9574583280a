// Test-only reference implementations, kept independent of the library code
// paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "core/linalg.hpp"

namespace cpinn::testing {

// Central-difference gradient of a scalar function of a flat vector.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                       double h = 1e-4) {
  Vec g(x.size());
  Vec p = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    p[i] = x0 + h;
    const double fp = f(p);
    p[i] = x0 - h;
    const double fm = f(p);
    p[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Central second difference along each coordinate.
inline Vec fd_hess_diag(const std::function<double(const Vec&)>& f, const Vec& x,
                        double h = 1e-4) {
  Vec d(x.size());
  Vec p = x;
  const double f0 = f(x);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    p[i] = x0 + h;
    const double fp = f(p);
    p[i] = x0 - h;
    const double fm = f(p);
    p[i] = x0;
    d[i] = (fp - 2.0 * f0 + fm) / (h * h);
  }
  return d;
}

inline double rel_err(double got, double want, double scale_floor = 1e-8) {
  return std::abs(got - want) / std::max(std::abs(want), scale_floor);
}

inline double max_rel_err(const Vec& got, const Vec& want, double scale_floor = 1e-6) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < got.size(); ++i) {
    m = std::max(m, std::abs(got[i] - want[i]) /
                        std::max({std::abs(want[i]), std::abs(got[i]), scale_floor}));
  }
  return m;
}

// Brute-force k-nearest-neighbor mean squared distance (full sort).
inline double brute_knn_rms_distance(const Mat& train, const Vec& query, int k) {
  std::vector<double> d2(static_cast<std::size_t>(train.cols()));
  for (Eigen::Index j = 0; j < train.cols(); ++j) {
    d2[static_cast<std::size_t>(j)] = (train.col(j) - query).squaredNorm();
  }
  std::sort(d2.begin(), d2.end());
  double acc = 0.0;
  for (int j = 0; j < k; ++j) acc += d2[static_cast<std::size_t>(j)];
  return std::sqrt(acc / k);
}

// Sort-and-index conformal quantile: the ceil((1-alpha)(n+1))-th smallest.
inline double brute_conformal_quantile(std::vector<double> scores, double alpha) {
  std::sort(scores.begin(), scores.end());
  const double kd = std::ceil((1.0 - alpha) * (static_cast<double>(scores.size()) + 1.0));
  const auto k = static_cast<std::size_t>(kd);
  if (k > scores.size()) return std::numeric_limits<double>::infinity();
  return scores[k - 1];
}

// Adam reference following the published update equations, scalar loops only.
class ReferenceAdam {
 public:
  explicit ReferenceAdam(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1 * m_[i] + (1.0 - beta1) * grad[i];
      v_[i] = beta2 * v_[i] + (1.0 - beta2) * grad[i] * grad[i];
      const double mhat = m_[i] / (1.0 - std::pow(beta1, t_));
      const double vhat = v_[i] / (1.0 - std::pow(beta2, t_));
      params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }

 private:
  std::vector<double> m_, v_;
  int t_ = 0;
};

}  // namespace cpinn::testing
