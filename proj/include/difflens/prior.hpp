#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "difflens/common.hpp"
#include "difflens/gaussian.hpp"
#include "difflens/schedule.hpp"

namespace difflens {

// ---------------------------------------------------------------------------
// Prior variants
// ---------------------------------------------------------------------------

struct DiscretePrior {
  std::vector<Vec> atoms;
  Vec weights;

  /// Empirical measure of an i.i.d. dataset: uniform weights 1/N.
  static DiscretePrior empirical(std::vector<Vec> dataset) {
    DiscretePrior p;
    p.weights = Vec::Constant(static_cast<Eigen::Index>(dataset.size()),
                              1.0 / static_cast<double>(dataset.size()));
    p.atoms = std::move(dataset);
    return p;
  }

  static DiscretePrior scalar(std::vector<double> locations, std::vector<double> w) {
    DiscretePrior p;
    p.weights = Eigen::Map<Vec>(w.data(), static_cast<Eigen::Index>(w.size()));
    for (double a : locations) p.atoms.push_back(Vec::Constant(1, a));
    return p;
  }
};

struct GaussianPrior {
  Vec mean;
  Mat cov;

  static GaussianPrior scalar(double mean, double variance) {
    return {Vec::Constant(1, mean), Mat::Constant(1, 1, variance)};
  }
};

struct GmmPrior {
  Vec weights;
  std::vector<Vec> means;
  std::vector<Mat> covs;

  static GmmPrior scalar(std::vector<double> w, std::vector<double> means,
                         std::vector<double> variances) {
    GmmPrior p;
    p.weights = Eigen::Map<Vec>(w.data(), static_cast<Eigen::Index>(w.size()));
    for (std::size_t i = 0; i < means.size(); ++i) {
      p.means.push_back(Vec::Constant(1, means[i]));
      p.covs.push_back(Mat::Constant(1, 1, variances[i]));
    }
    return p;
  }
};

using Prior = std::variant<DiscretePrior, GaussianPrior, GmmPrior>;

namespace detail {

inline void check_weights(const Vec& w) {
  if (w.size() == 0) throw std::invalid_argument("prior: empty weight vector");
  if (w.minCoeff() < 0.0) throw std::invalid_argument("prior: negative weight");
  if (std::abs(w.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("prior: weights must sum to 1 within 1e-12");
}

inline void check_spd(const Mat& c) {
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + c.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("prior: covariance not symmetric");
  if (Eigen::LLT<Mat>(c).info() != Eigen::Success)
    throw std::invalid_argument("prior: covariance not positive definite");
}

}  // namespace detail

inline void validate(const Prior& prior) {
  std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DiscretePrior>) {
          detail::check_weights(p.weights);
          if (p.atoms.size() != static_cast<std::size_t>(p.weights.size()))
            throw std::invalid_argument("prior: atom/weight count mismatch");
        } else if constexpr (std::is_same_v<T, GaussianPrior>) {
          detail::check_spd(p.cov);
        } else {
          detail::check_weights(p.weights);
          if (p.means.size() != p.covs.size() ||
              p.means.size() != static_cast<std::size_t>(p.weights.size()))
            throw std::invalid_argument("prior: component count mismatch");
          for (const auto& c : p.covs) detail::check_spd(c);
        }
      },
      prior);
}

inline int dimension(const Prior& prior) {
  return std::visit(
      [](const auto& p) -> int {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DiscretePrior>)
          return static_cast<int>(p.atoms.front().size());
        else if constexpr (std::is_same_v<T, GaussianPrior>)
          return static_cast<int>(p.mean.size());
        else
          return static_cast<int>(p.means.front().size());
      },
      prior);
}

// ---------------------------------------------------------------------------
// Density at time zero
// ---------------------------------------------------------------------------

inline double prior_log_density(const Prior& prior, const Vec& x0) {
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DiscretePrior>) {
          throw unsupported_operation(
              "pointwise density of a discrete prior is undefined");
        } else if constexpr (std::is_same_v<T, GaussianPrior>) {
          return Gaussian(p.mean, p.cov).log_density(x0);
        } else {
          std::vector<Gaussian> comps;
          comps.reserve(p.means.size());
          for (std::size_t i = 0; i < p.means.size(); ++i)
            comps.emplace_back(p.means[i], p.covs[i]);
          return GaussianMixture(p.weights, std::move(comps)).log_density(x0);
        }
      },
      prior);
}

inline double prior_density(const Prior& prior, const Vec& x0) {
  return std::exp(prior_log_density(prior, x0));
}

// ---------------------------------------------------------------------------
// Marginal p_t as a Gaussian mixture
// ---------------------------------------------------------------------------

/// The diffused marginal at time t. Discrete priors give mixtures with
/// kernel variance 1 - alpha_bar(t) around the scaled atoms; Gaussian and
/// GMM priors diffuse componentwise.
inline GaussianMixture marginal_mixture(const Prior& prior, const NoiseSchedule& s,
                                        double t) {
  const double a = s.alpha_bar(t);
  const double ra = std::sqrt(a);
  const double v = 1.0 - a;
  return std::visit(
      [&](const auto& p) -> GaussianMixture {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DiscretePrior>) {
          if (v <= 0.0)
            throw degenerate_error(
                "marginal of a discrete prior has no density at t = 0");
          const Eigen::Index n = p.atoms.front().size();
          std::vector<Gaussian> comps;
          comps.reserve(p.atoms.size());
          for (const auto& atom : p.atoms)
            comps.emplace_back(ra * atom, v * Mat::Identity(n, n));
          return GaussianMixture(p.weights, std::move(comps));
        } else if constexpr (std::is_same_v<T, GaussianPrior>) {
          const Eigen::Index n = p.mean.size();
          std::vector<Gaussian> comps;
          comps.emplace_back(ra * p.mean, a * p.cov + v * Mat::Identity(n, n));
          return GaussianMixture(Vec::Constant(1, 1.0), std::move(comps));
        } else {
          const Eigen::Index n = p.means.front().size();
          std::vector<Gaussian> comps;
          comps.reserve(p.means.size());
          for (std::size_t i = 0; i < p.means.size(); ++i)
            comps.emplace_back(ra * p.means[i], a * p.covs[i] + v * Mat::Identity(n, n));
          return GaussianMixture(p.weights, std::move(comps));
        }
      },
      prior);
}

inline double marginal_log_density(const Prior& prior, const NoiseSchedule& s, double t,
                                   const Vec& xt) {
  return marginal_mixture(prior, s, t).log_density(xt);
}

inline double marginal_density(const Prior& prior, const NoiseSchedule& s, double t,
                               const Vec& xt) {
  return std::exp(marginal_log_density(prior, s, t, xt));
}

inline Vec marginal_score(const Prior& prior, const NoiseSchedule& s, double t,
                          const Vec& xt) {
  return marginal_mixture(prior, s, t).score(xt);
}

inline Mat marginal_score_jacobian(const Prior& prior, const NoiseSchedule& s, double t,
                                   const Vec& xt) {
  return marginal_mixture(prior, s, t).score_jacobian(xt);
}

// ---------------------------------------------------------------------------
// Denoiser moments
// ---------------------------------------------------------------------------

struct DenoiserMoments {
  Vec mean;
  Mat cov;
};

/// Exact mean and covariance of p(x_0 | x_t). Discrete priors average the
/// atoms under the kernel responsibilities; Gaussian and GMM priors use
/// componentwise conjugacy plus the laws of total expectation/covariance.
inline DenoiserMoments denoiser_moments(const Prior& prior, const NoiseSchedule& s,
                                        double t, const Vec& xt) {
  const double a = s.alpha_bar(t);
  const double v = 1.0 - a;
  if (v <= 0.0) throw degenerate_error("denoiser moments require t > 0");
  const double ra = std::sqrt(a);
  const GaussianMixture marginal = marginal_mixture(prior, s, t);
  const Vec r = marginal.responsibilities(xt);

  return std::visit(
      [&](const auto& p) -> DenoiserMoments {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DiscretePrior>) {
          const Eigen::Index n = p.atoms.front().size();
          Vec mean = Vec::Zero(n);
          for (std::size_t i = 0; i < p.atoms.size(); ++i)
            mean += r[static_cast<Eigen::Index>(i)] * p.atoms[i];
          Mat cov = Mat::Zero(n, n);
          for (std::size_t i = 0; i < p.atoms.size(); ++i) {
            Vec d = p.atoms[i] - mean;
            cov += r[static_cast<Eigen::Index>(i)] * (d * d.transpose());
          }
          return {mean, make_psd(cov)};
        } else if constexpr (std::is_same_v<T, GaussianPrior>) {
          const Eigen::Index n = p.mean.size();
          Mat prior_prec = Eigen::LLT<Mat>(p.cov).solve(Mat::Identity(n, n));
          Mat c0t_inv = prior_prec + (a / v) * Mat::Identity(n, n);
          Mat c0t = Eigen::LLT<Mat>(c0t_inv).solve(Mat::Identity(n, n));
          Vec mean = c0t * (prior_prec * p.mean + (ra / v) * xt);
          return {mean, make_psd(c0t)};
        } else {
          const Eigen::Index n = p.means.front().size();
          std::vector<Vec> comp_means(p.means.size());
          std::vector<Mat> comp_covs(p.means.size());
          for (std::size_t i = 0; i < p.means.size(); ++i) {
            Mat prior_prec = Eigen::LLT<Mat>(p.covs[i]).solve(Mat::Identity(n, n));
            Mat c0t_inv = prior_prec + (a / v) * Mat::Identity(n, n);
            comp_covs[i] = Eigen::LLT<Mat>(c0t_inv).solve(Mat::Identity(n, n));
            comp_means[i] = comp_covs[i] * (prior_prec * p.means[i] + (ra / v) * xt);
          }
          Vec mean = Vec::Zero(n);
          for (std::size_t i = 0; i < comp_means.size(); ++i)
            mean += r[static_cast<Eigen::Index>(i)] * comp_means[i];
          Mat cov = Mat::Zero(n, n);
          for (std::size_t i = 0; i < comp_means.size(); ++i) {
            Vec d = comp_means[i] - mean;
            cov += r[static_cast<Eigen::Index>(i)] * (comp_covs[i] + d * d.transpose());
          }
          return {mean, make_psd(cov)};
        }
      },
      prior);
}

/// Recover the denoiser moments from the marginal score and its Jacobian:
///   mean = (x_t + (1 - a) * score) / sqrt(a)
///   cov  = ((1 - a) / a) * (I + (1 - a) * d score / d x_t)
inline DenoiserMoments tweedie_moments_from_score(const NoiseSchedule& s, double t,
                                                  const Vec& xt, const Vec& score,
                                                  const Mat& score_jacobian) {
  const double a = s.alpha_bar(t);
  const double v = 1.0 - a;
  const Eigen::Index n = xt.size();
  Vec mean = (xt + v * score) / std::sqrt(a);
  Mat cov = (v / a) * (Mat::Identity(n, n) + v * score_jacobian);
  return {mean, make_psd(cov)};
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

inline std::vector<Vec> sample_prior(const Prior& prior, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_prior: n must be >= 1");
  auto rng = make_engine(seed);
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(n));
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DiscretePrior>) {
          std::uniform_real_distribution<double> unif(0.0, 1.0);
          for (int k = 0; k < n; ++k) {
            double u = unif(rng);
            double acc = 0.0;
            std::size_t pick = p.atoms.size() - 1;
            for (std::size_t i = 0; i < p.atoms.size(); ++i) {
              acc += p.weights[static_cast<Eigen::Index>(i)];
              if (u <= acc) {
                pick = i;
                break;
              }
            }
            out.push_back(p.atoms[pick]);
          }
        } else if constexpr (std::is_same_v<T, GaussianPrior>) {
          Gaussian g(p.mean, p.cov);
          for (int k = 0; k < n; ++k) out.push_back(g.sample(rng));
        } else {
          std::vector<Gaussian> comps;
          comps.reserve(p.means.size());
          for (std::size_t i = 0; i < p.means.size(); ++i)
            comps.emplace_back(p.means[i], p.covs[i]);
          GaussianMixture mix(p.weights, std::move(comps));
          for (int k = 0; k < n; ++k) out.push_back(mix.sample(rng));
        }
      },
      prior);
  return out;
}

// ---------------------------------------------------------------------------
// Scalar fast path
// ---------------------------------------------------------------------------

/// All per-time quantities of a one-dimensional prior, flattened to plain
/// arrays. Built once per (prior, t) and then evaluated many times; this is
/// what the reverse-SDE loop and the field evaluators run on.
///
/// Marginal component i:  weight exp(log_w[i]), mean mu[i], variance var[i].
/// Denoiser component i:  mean den_a[i] + den_b[i] * x, variance den_c[i].
struct ScalarPriorSlice {
  std::vector<double> log_w, mu, var;
  std::vector<double> den_a, den_b, den_c;
  double sqrt_alpha = 1.0;
  double one_minus_alpha = 0.0;

  std::size_t size() const { return log_w.size(); }

  double marginal_log_density(double x) const {
    double m = -std::numeric_limits<double>::infinity();
    double terms[kStackComps];
    std::vector<double> heap;
    double* buf = scratch(terms, heap);
    for (std::size_t i = 0; i < size(); ++i) {
      buf[i] = log_w[i] + normal_log_pdf(x, mu[i], var[i]);
      m = std::max(m, buf[i]);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < size(); ++i) sum += std::exp(buf[i] - m);
    return m + std::log(sum);
  }

  /// Component responsibilities; r must hold size() doubles.
  void responsibilities(double x, double* r) const {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < size(); ++i) {
      r[i] = log_w[i] + normal_log_pdf(x, mu[i], var[i]);
      m = std::max(m, r[i]);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      r[i] = std::exp(r[i] - m);
      sum += r[i];
    }
    for (std::size_t i = 0; i < size(); ++i) r[i] /= sum;
  }

  double marginal_score(double x) const {
    double terms[kStackComps];
    std::vector<double> heap;
    double* r = scratch(terms, heap);
    responsibilities(x, r);
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) s += r[i] * (-(x - mu[i]) / var[i]);
    return s;
  }

  double marginal_score_jacobian(double x) const {
    double terms[kStackComps];
    std::vector<double> heap;
    double* r = scratch(terms, heap);
    responsibilities(x, r);
    double s = 0.0, h = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      double g = -(x - mu[i]) / var[i];
      s += r[i] * g;
      h += r[i] * (g * g - 1.0 / var[i]);
    }
    return h - s * s;
  }

  void denoiser_moments(double x, double& mean, double& variance) const {
    double terms[kStackComps];
    std::vector<double> heap;
    double* r = scratch(terms, heap);
    responsibilities(x, r);
    mean = 0.0;
    for (std::size_t i = 0; i < size(); ++i) mean += r[i] * (den_a[i] + den_b[i] * x);
    variance = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      double d = den_a[i] + den_b[i] * x - mean;
      variance += r[i] * (den_c[i] + d * d);
    }
  }

 private:
  static constexpr std::size_t kStackComps = 16;
  double* scratch(double* stack, std::vector<double>& heap) const {
    if (size() <= kStackComps) return stack;
    heap.resize(size());
    return heap.data();
  }
};

inline ScalarPriorSlice make_scalar_slice(const Prior& prior, const NoiseSchedule& s,
                                          double t) {
  if (dimension(prior) != 1)
    throw unsupported_operation("ScalarPriorSlice requires a one-dimensional prior");
  const double a = s.alpha_bar(t);
  const double v = 1.0 - a;
  if (v <= 0.0) throw degenerate_error("scalar slice requires t > 0");
  const double ra = std::sqrt(a);

  ScalarPriorSlice slice;
  slice.sqrt_alpha = ra;
  slice.one_minus_alpha = v;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DiscretePrior>) {
          for (std::size_t i = 0; i < p.atoms.size(); ++i) {
            double w = p.weights[static_cast<Eigen::Index>(i)];
            slice.log_w.push_back(w > 0 ? std::log(w)
                                        : -std::numeric_limits<double>::infinity());
            slice.mu.push_back(ra * p.atoms[i][0]);
            slice.var.push_back(v);
            slice.den_a.push_back(p.atoms[i][0]);
            slice.den_b.push_back(0.0);
            slice.den_c.push_back(0.0);
          }
        } else if constexpr (std::is_same_v<T, GaussianPrior>) {
          const double c = p.cov(0, 0);
          slice.log_w.push_back(0.0);
          slice.mu.push_back(ra * p.mean[0]);
          slice.var.push_back(a * c + v);
          const double c0t = 1.0 / (1.0 / c + a / v);
          slice.den_a.push_back(c0t * p.mean[0] / c);
          slice.den_b.push_back(c0t * ra / v);
          slice.den_c.push_back(c0t);
        } else {
          for (std::size_t i = 0; i < p.means.size(); ++i) {
            double w = p.weights[static_cast<Eigen::Index>(i)];
            double c = p.covs[i](0, 0);
            slice.log_w.push_back(w > 0 ? std::log(w)
                                        : -std::numeric_limits<double>::infinity());
            slice.mu.push_back(ra * p.means[i][0]);
            slice.var.push_back(a * c + v);
            const double c0t = 1.0 / (1.0 / c + a / v);
            slice.den_a.push_back(c0t * p.means[i][0] / c);
            slice.den_b.push_back(c0t * ra / v);
            slice.den_c.push_back(c0t);
          }
        }
      },
      prior);
  return slice;
}

}  // namespace difflens
