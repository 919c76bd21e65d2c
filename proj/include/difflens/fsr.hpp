#pragma once

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "difflens/common.hpp"
#include "difflens/density_field.hpp"
#include "difflens/gaussian.hpp"
#include "difflens/measurement.hpp"
#include "difflens/prior.hpp"
#include "difflens/schedule.hpp"

namespace difflens {

/// Finite-sample regime over a dataset of N i.i.d. prior draws. The diffused
/// marginal is an equal-weight Gaussian mixture over the scaled dataset, the
/// measurement likelihood is a kernel-weighted finite sum, and the posterior
/// is the same mixture reweighted by the per-atom measurement evidence.
///
/// Everything here is exact at any t > 0, for any measurement operator.
class FsrModel {
 public:
  FsrModel(std::vector<Vec> dataset, NoiseSchedule schedule, MeasurementModel measurement,
           Vec y)
      : dataset_(std::move(dataset)),
        schedule_(schedule),
        measurement_(std::move(measurement)),
        y_(std::move(y)) {
    if (dataset_.empty()) throw std::invalid_argument("FsrModel: empty dataset");
    const Eigen::Index n = static_cast<Eigen::Index>(dataset_.size());
    log_evidence_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
      log_evidence_[i] = measurement_.log_likelihood(y_, dataset_[static_cast<std::size_t>(i)]);
    max_log_evidence_ = log_evidence_.maxCoeff();
    const double lse = log_sum_exp(log_evidence_);
    posterior_log_w_ = log_evidence_.array() - lse;
  }

  int size() const { return static_cast<int>(dataset_.size()); }
  int dim() const { return static_cast<int>(dataset_.front().size()); }
  const std::vector<Vec>& dataset() const { return dataset_; }
  const Vec& log_evidence() const { return log_evidence_; }

  /// Kernel responsibilities w_i(x_t, t) of the diffused dataset.
  Vec weights(double t, const Vec& xt) const {
    const auto [ra, v] = kernel(t);
    Vec lw(static_cast<Eigen::Index>(dataset_.size()));
    for (std::size_t i = 0; i < dataset_.size(); ++i)
      lw[static_cast<Eigen::Index>(i)] = -(xt - ra * dataset_[i]).squaredNorm() / (2.0 * v);
    return softmax(lw);
  }

  /// grad w_i = (sqrt(a) / (1 - a)) * w_i * (x_i - m_{0|t}(x_t)).
  std::vector<Vec> weight_gradients(double t, const Vec& xt) const {
    const auto [ra, v] = kernel(t);
    const Vec w = weights(t, xt);
    Vec m = Vec::Zero(xt.size());
    for (std::size_t i = 0; i < dataset_.size(); ++i)
      m += w[static_cast<Eigen::Index>(i)] * dataset_[i];
    std::vector<Vec> grads;
    grads.reserve(dataset_.size());
    for (std::size_t i = 0; i < dataset_.size(); ++i)
      grads.push_back((ra / v) * w[static_cast<Eigen::Index>(i)] * (dataset_[i] - m));
    return grads;
  }

  double marginal_log_density(double t, const Vec& xt) const {
    const auto [ra, v] = kernel(t);
    const double d = static_cast<double>(xt.size());
    const double log_norm = -0.5 * d * (kLog2Pi + std::log(v));
    const double log_n = std::log(static_cast<double>(dataset_.size()));
    Vec terms(static_cast<Eigen::Index>(dataset_.size()));
    for (std::size_t i = 0; i < dataset_.size(); ++i)
      terms[static_cast<Eigen::Index>(i)] = -(xt - ra * dataset_[i]).squaredNorm() / (2.0 * v);
    return log_sum_exp(terms) + log_norm - log_n;
  }

  double marginal_density(double t, const Vec& xt) const {
    return std::exp(marginal_log_density(t, xt));
  }

  Vec marginal_score(double t, const Vec& xt) const {
    const auto [ra, v] = kernel(t);
    const Vec w = weights(t, xt);
    Vec s = Vec::Zero(xt.size());
    for (std::size_t i = 0; i < dataset_.size(); ++i)
      s += w[static_cast<Eigen::Index>(i)] * (-(xt - ra * dataset_[i]) / v);
    return s;
  }

  DenoiserMoments denoiser_moments(double t, const Vec& xt) const {
    const Vec w = weights(t, xt);
    Vec m = Vec::Zero(xt.size());
    for (std::size_t i = 0; i < dataset_.size(); ++i)
      m += w[static_cast<Eigen::Index>(i)] * dataset_[i];
    Mat c = Mat::Zero(xt.size(), xt.size());
    for (std::size_t i = 0; i < dataset_.size(); ++i) {
      Vec d = dataset_[i] - m;
      c += w[static_cast<Eigen::Index>(i)] * (d * d.transpose());
    }
    return {m, make_psd(c)};
  }

  /// p(y | x_t) = sum_i w_i(x_t, t) N(y; A(x_i), Sigma_y).
  double log_likelihood(double t, const Vec& xt) const {
    const auto [ra, v] = kernel(t);
    Vec terms(static_cast<Eigen::Index>(dataset_.size()));
    for (std::size_t i = 0; i < dataset_.size(); ++i)
      terms[static_cast<Eigen::Index>(i)] = -(xt - ra * dataset_[i]).squaredNorm() / (2.0 * v);
    const double lse_kernel = log_sum_exp(terms);
    terms += log_evidence_;
    return log_sum_exp(terms) - lse_kernel;
  }

  double likelihood(double t, const Vec& xt) const {
    return std::exp(log_likelihood(t, xt));
  }

  double posterior_log_density(double t, const Vec& xt) const {
    require_evidence();
    const auto [ra, v] = kernel(t);
    const double d = static_cast<double>(xt.size());
    const double log_norm = -0.5 * d * (kLog2Pi + std::log(v));
    Vec terms(static_cast<Eigen::Index>(dataset_.size()));
    for (std::size_t i = 0; i < dataset_.size(); ++i)
      terms[static_cast<Eigen::Index>(i)] =
          posterior_log_w_[static_cast<Eigen::Index>(i)] -
          (xt - ra * dataset_[i]).squaredNorm() / (2.0 * v);
    return log_sum_exp(terms) + log_norm;
  }

  double posterior_density(double t, const Vec& xt) const {
    return std::exp(posterior_log_density(t, xt));
  }

  Vec posterior_score(double t, const Vec& xt) const {
    require_evidence();
    const auto [ra, v] = kernel(t);
    Vec lw(static_cast<Eigen::Index>(dataset_.size()));
    for (std::size_t i = 0; i < dataset_.size(); ++i)
      lw[static_cast<Eigen::Index>(i)] =
          posterior_log_w_[static_cast<Eigen::Index>(i)] -
          (xt - ra * dataset_[i]).squaredNorm() / (2.0 * v);
    const Vec q = softmax(lw);
    Vec s = Vec::Zero(xt.size());
    for (std::size_t i = 0; i < dataset_.size(); ++i)
      s += q[static_cast<Eigen::Index>(i)] * (-(xt - ra * dataset_[i]) / v);
    return s;
  }

  /// Posterior density over a full (t, x) grid; rows normalized. 1-d only.
  DensityField posterior_field(const std::vector<double>& t_grid,
                               const std::vector<double>& x_grid) const {
    require_evidence();
    if (dim() != 1) throw unsupported_operation("posterior_field requires 1-d data");
    const std::size_t n = dataset_.size();
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = dataset_[i][0];

    DensityField field;
    field.t_grid = t_grid;
    field.x_grid = x_grid;
    field.values.resize(static_cast<Eigen::Index>(t_grid.size()),
                        static_cast<Eigen::Index>(x_grid.size()));
    parallel_for(static_cast<int>(t_grid.size()), [&](int row) {
      const auto [ra, v] = kernel(t_grid[static_cast<std::size_t>(row)]);
      const double log_norm = -0.5 * (kLog2Pi + std::log(v));
      const double inv2v = 1.0 / (2.0 * v);
      std::vector<double> terms(n);
      for (std::size_t j = 0; j < x_grid.size(); ++j) {
        const double x = x_grid[j];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
          const double d = x - ra * xs[i];
          terms[i] = posterior_log_w_[static_cast<Eigen::Index>(i)] - d * d * inv2v;
          mx = std::max(mx, terms[i]);
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += std::exp(terms[i] - mx);
        field.values(row, static_cast<Eigen::Index>(j)) =
            std::exp(mx + std::log(sum) + log_norm);
      }
    });
    field.normalize_rows();
    return field;
  }

  /// Ancestral draw: pick an atom by evidence weight, then add kernel noise.
  std::vector<Vec> posterior_sample(double t, int n_samples, std::uint64_t seed) const {
    require_evidence();
    const auto [ra, v] = kernel(t);
    const double std_dev = std::sqrt(v);
    const Vec w = softmax(posterior_log_w_);
    Vec cdf(w.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      acc += w[i];
      cdf[i] = acc;
    }
    auto rng = make_engine(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(n_samples));
    for (int k = 0; k < n_samples; ++k) {
      const double u = unif(rng);
      Eigen::Index pick = w.size() - 1;
      for (Eigen::Index i = 0; i < cdf.size(); ++i) {
        if (u <= cdf[i]) {
          pick = i;
          break;
        }
      }
      Vec x = ra * dataset_[static_cast<std::size_t>(pick)];
      for (Eigen::Index d = 0; d < x.size(); ++d) x[d] += std_dev * normal(rng);
      out.push_back(std::move(x));
    }
    return out;
  }

 private:
  std::pair<double, double> kernel(double t) const {
    const double a = schedule_.alpha_bar(t);
    const double v = 1.0 - a;
    if (v <= 0.0)
      throw degenerate_error("finite-sample kernel weights degenerate at t = 0");
    return {std::sqrt(a), v};
  }

  void require_evidence() const {
    // exp underflows to zero for every atom: the measurement is inconsistent
    // with the whole dataset and the posterior weights are unusable.
    if (max_log_evidence_ < -708.0) {
      std::ostringstream msg;
      msg << "degenerate evidence: max log measurement weight " << max_log_evidence_
          << " underflows";
      throw degenerate_evidence_error(msg.str(), max_log_evidence_);
    }
  }

  std::vector<Vec> dataset_;
  NoiseSchedule schedule_;
  MeasurementModel measurement_;
  Vec y_;
  Vec log_evidence_;
  Vec posterior_log_w_;
  double max_log_evidence_;
};

/// Convenience: build the finite-sample model from fresh prior draws.
inline FsrModel make_fsr(const Prior& prior, int n, std::uint64_t seed,
                         const NoiseSchedule& schedule, const MeasurementModel& m,
                         const Vec& y) {
  return FsrModel(sample_prior(prior, n, seed), schedule, m, y);
}

}  // namespace difflens
