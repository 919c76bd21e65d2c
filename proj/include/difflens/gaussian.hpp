#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "difflens/common.hpp"

namespace difflens {

/// Multivariate normal with cached Cholesky factor.
class Gaussian {
 public:
  Gaussian(Vec mean, Mat cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
    if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size())
      throw std::invalid_argument("Gaussian: dimension mismatch");
    llt_.compute(cov_);
    if (llt_.info() != Eigen::Success)
      throw std::invalid_argument("Gaussian: covariance not positive definite");
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < cov_.rows(); ++i)
      log_det += 2.0 * std::log(llt_.matrixL()(i, i));
    log_norm_ = -0.5 * (static_cast<double>(mean_.size()) * kLog2Pi + log_det);
  }

  const Vec& mean() const { return mean_; }
  const Mat& cov() const { return cov_; }
  Eigen::Index dim() const { return mean_.size(); }

  double log_density(const Vec& x) const {
    Vec d = x - mean_;
    Vec w = llt_.matrixL().solve(d);
    return log_norm_ - 0.5 * w.squaredNorm();
  }

  double density(const Vec& x) const { return std::exp(log_density(x)); }

  /// Gradient of the log-density: -C^{-1} (x - m).
  Vec score(const Vec& x) const { return -llt_.solve(x - mean_); }

  Vec sample(std::mt19937_64& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec z(mean_.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
    return mean_ + llt_.matrixL() * z;
  }

  const Eigen::LLT<Mat>& llt() const { return llt_; }

 private:
  Vec mean_;
  Mat cov_;
  Eigen::LLT<Mat> llt_;
  double log_norm_;
};

inline double gaussian_log_density(const Vec& x, const Vec& mean, const Mat& cov) {
  return Gaussian(mean, cov).log_density(x);
}

/// Scalar normal log-density, used on hot paths where building a 1x1
/// matrix object would dominate the cost.
inline double normal_log_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(variance)) - 0.5 * d * d / variance;
}

/// Finite mixture of Gaussians. Weight arithmetic is done in the log
/// domain throughout so far-tail evaluations stay finite.
class GaussianMixture {
 public:
  GaussianMixture(const Vec& weights, std::vector<Gaussian> components)
      : components_(std::move(components)) {
    if (static_cast<std::size_t>(weights.size()) != components_.size())
      throw std::invalid_argument("GaussianMixture: weight/component mismatch");
    if (components_.empty())
      throw std::invalid_argument("GaussianMixture: empty mixture");
    if (weights.minCoeff() < 0.0 || std::abs(weights.sum() - 1.0) > 1e-12)
      throw std::invalid_argument("GaussianMixture: weights must be a distribution");
    log_weights_.resize(weights.size());
    for (Eigen::Index i = 0; i < weights.size(); ++i)
      log_weights_[i] = weights[i] > 0.0 ? std::log(weights[i])
                                         : -std::numeric_limits<double>::infinity();
  }

  /// Build from (possibly unnormalized) log-weights without leaving the log
  /// domain. Weights far below the exp underflow threshold stay exact; they
  /// can still dominate responsibilities in far tails.
  static GaussianMixture from_log_weights(Vec log_weights,
                                          std::vector<Gaussian> components) {
    if (static_cast<std::size_t>(log_weights.size()) != components.size() ||
        components.empty())
      throw std::invalid_argument("GaussianMixture: weight/component mismatch");
    const double lse = log_sum_exp(log_weights);
    if (!std::isfinite(lse))
      throw std::invalid_argument("GaussianMixture: all log-weights are -inf");
    GaussianMixture mix;
    mix.log_weights_ = log_weights.array() - lse;
    mix.components_ = std::move(components);
    return mix;
  }

  std::size_t size() const { return components_.size(); }
  Eigen::Index dim() const { return components_.front().dim(); }
  const Gaussian& component(std::size_t i) const { return components_[i]; }
  Vec weights() const { return softmax(log_weights_); }

  /// log w_i + log N_i(x) for every component.
  Vec component_log_terms(const Vec& x) const {
    Vec terms(static_cast<Eigen::Index>(components_.size()));
    for (std::size_t i = 0; i < components_.size(); ++i)
      terms[static_cast<Eigen::Index>(i)] =
          log_weights_[static_cast<Eigen::Index>(i)] + components_[i].log_density(x);
    return terms;
  }

  double log_density(const Vec& x) const { return log_sum_exp(component_log_terms(x)); }

  double density(const Vec& x) const { return std::exp(log_density(x)); }

  /// Posterior component probabilities given an observation of x.
  Vec responsibilities(const Vec& x) const { return softmax(component_log_terms(x)); }

  /// Mixture score: -sum_i r_i(x) C_i^{-1} (x - m_i).
  Vec score(const Vec& x) const {
    const Vec r = responsibilities(x);
    Vec s = Vec::Zero(dim());
    for (std::size_t i = 0; i < components_.size(); ++i)
      s += r[static_cast<Eigen::Index>(i)] * components_[i].score(x);
    return s;
  }

  /// Hessian of the log-density,
  ///   sum_i r_i (g_i g_i^T - C_i^{-1}) - s s^T,  g_i = -C_i^{-1}(x - m_i).
  Mat score_jacobian(const Vec& x) const {
    const Vec r = responsibilities(x);
    const Eigen::Index n = dim();
    Mat h = Mat::Zero(n, n);
    Vec s = Vec::Zero(n);
    for (std::size_t i = 0; i < components_.size(); ++i) {
      const double ri = r[static_cast<Eigen::Index>(i)];
      Vec gi = components_[i].score(x);
      Mat prec = components_[i].llt().solve(Mat::Identity(n, n));
      h += ri * (gi * gi.transpose() - prec);
      s += ri * gi;
    }
    h -= s * s.transpose();
    return h;
  }

  /// Overall mean and covariance by total expectation/covariance.
  std::pair<Vec, Mat> moments() const {
    const Vec w = weights();
    const Eigen::Index n = dim();
    Vec mean = Vec::Zero(n);
    for (std::size_t i = 0; i < components_.size(); ++i)
      mean += w[static_cast<Eigen::Index>(i)] * components_[i].mean();
    Mat cov = Mat::Zero(n, n);
    for (std::size_t i = 0; i < components_.size(); ++i) {
      const double wi = w[static_cast<Eigen::Index>(i)];
      Vec d = components_[i].mean() - mean;
      cov += wi * (components_[i].cov() + d * d.transpose());
    }
    return {mean, cov};
  }

  Vec sample(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const Vec w = weights();
    double u = unif(rng);
    std::size_t pick = components_.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < components_.size(); ++i) {
      acc += w[static_cast<Eigen::Index>(i)];
      if (u <= acc) {
        pick = i;
        break;
      }
    }
    return components_[pick].sample(rng);
  }

 private:
  GaussianMixture() = default;

  Vec log_weights_;
  std::vector<Gaussian> components_;
};

/// One-dimensional mixture in flat arrays, for grid evaluation loops where
/// the generic matrix types would be allocation-bound.
struct ScalarMixture {
  std::vector<double> log_w, mu, var;

  std::size_t size() const { return log_w.size(); }

  double log_density(double x) const {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < size(); ++i)
      m = std::max(m, log_w[i] + normal_log_pdf(x, mu[i], var[i]));
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i)
      s += std::exp(log_w[i] + normal_log_pdf(x, mu[i], var[i]) - m);
    return m + std::log(s);
  }

  double density(double x) const { return std::exp(log_density(x)); }

  double score(double x) const {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < size(); ++i)
      m = std::max(m, log_w[i] + normal_log_pdf(x, mu[i], var[i]));
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      double e = std::exp(log_w[i] + normal_log_pdf(x, mu[i], var[i]) - m);
      num += e * (-(x - mu[i]) / var[i]);
      den += e;
    }
    return num / den;
  }
};

}  // namespace difflens
