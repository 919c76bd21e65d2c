#pragma once

#include <cmath>
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

/// A Bayesian inverse problem with an observed measurement. Closed-form
/// conditionals exist exactly when the prior is discrete (any operator) or
/// the operator is affine (Gaussian or GMM prior).
struct ConditionalProblem {
  Prior prior;
  MeasurementModel measurement;
  Vec y;
  NoiseSchedule schedule;
};

inline bool is_tractable(const ConditionalProblem& cp) {
  if (std::holds_alternative<DiscretePrior>(cp.prior)) return true;
  return cp.measurement.affine();
}

namespace detail {

inline void require_tractable(const ConditionalProblem& cp) {
  if (!is_tractable(cp))
    throw intractable_error(
        "no closed-form conditional for a continuous prior with a nonlinear operator");
}

inline Mat noise_cov(const MeasurementModel& m, Eigen::Index out_dim) {
  return m.noise_std * m.noise_std * Mat::Identity(out_dim, out_dim);
}

/// Evidence log-weights of a discrete prior: log p_i + log N(y; A(x_i), S).
inline Vec discrete_evidence_log_weights(const DiscretePrior& p,
                                         const MeasurementModel& m, const Vec& y) {
  Vec lw(static_cast<Eigen::Index>(p.atoms.size()));
  for (std::size_t i = 0; i < p.atoms.size(); ++i) {
    const double w = p.weights[static_cast<Eigen::Index>(i)];
    lw[static_cast<Eigen::Index>(i)] =
        (w > 0 ? std::log(w) : -std::numeric_limits<double>::infinity()) +
        m.log_likelihood(y, p.atoms[i]);
  }
  return lw;
}

struct AffineConditioned {
  Vec log_pi;               // posterior component log-weights (unnormalized ok)
  std::vector<Vec> m_post;  // at t: sqrt(a) * m_cond_i
  std::vector<Mat> c_post;  // at t: a * C_cond_i + (1-a) I
};

/// Condition each prior component on y through the affine operator.
/// Returns the time-independent pieces: conditioned means/covs at t = 0 and
/// the y-marginal log-weights.
inline AffineConditioned condition_components(const std::vector<Vec>& means,
                                              const std::vector<Mat>& covs,
                                              const Vec& log_prior_w,
                                              const MeasurementModel& m, const Vec& y) {
  const auto& aff = std::get<AffineOp>(m.op);
  const Mat& A = aff.gain;
  const Vec& b = aff.offset;
  const Mat S = noise_cov(m, A.rows());
  AffineConditioned out;
  out.log_pi.resize(static_cast<Eigen::Index>(means.size()));
  for (std::size_t i = 0; i < means.size(); ++i) {
    const Mat marg_cov = A * covs[i] * A.transpose() + S;
    const Vec marg_mean = A * means[i] + b;
    out.log_pi[static_cast<Eigen::Index>(i)] =
        log_prior_w[static_cast<Eigen::Index>(i)] +
        Gaussian(marg_mean, marg_cov).log_density(y);
    Eigen::LLT<Mat> llt(marg_cov);
    const Mat gain = covs[i] * A.transpose() * llt.solve(Mat::Identity(A.rows(), A.rows()));
    out.m_post.push_back(means[i] + gain * (y - marg_mean));
    out.c_post.push_back(make_psd(covs[i] - gain * A * covs[i]));
  }
  return out;
}

inline AffineConditioned condition_prior(const ConditionalProblem& cp) {
  return std::visit(
      [&](const auto& p) -> AffineConditioned {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GaussianPrior>) {
          return condition_components({p.mean}, {p.cov}, Vec::Zero(1), cp.measurement,
                                      cp.y);
        } else if constexpr (std::is_same_v<T, GmmPrior>) {
          Vec lw(p.weights.size());
          for (Eigen::Index i = 0; i < p.weights.size(); ++i)
            lw[i] = p.weights[i] > 0 ? std::log(p.weights[i])
                                     : -std::numeric_limits<double>::infinity();
          return condition_components(p.means, p.covs, lw, cp.measurement, cp.y);
        } else {
          throw intractable_error("condition_prior: discrete prior takes the finite-sum path");
        }
      },
      cp.prior);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Posterior p(x_t | y)
// ---------------------------------------------------------------------------

/// The exact posterior at time t as a Gaussian mixture.
inline GaussianMixture posterior_mixture(const ConditionalProblem& cp, double t) {
  detail::require_tractable(cp);
  const double a = cp.schedule.alpha_bar(t);
  const double ra = std::sqrt(a);
  const double v = 1.0 - a;

  if (const auto* dp = std::get_if<DiscretePrior>(&cp.prior)) {
    if (v <= 0.0)
      throw degenerate_error("discrete posterior has no density at t = 0");
    const Eigen::Index n = dp->atoms.front().size();
    std::vector<Gaussian> comps;
    comps.reserve(dp->atoms.size());
    for (const auto& atom : dp->atoms)
      comps.emplace_back(ra * atom, v * Mat::Identity(n, n));
    return GaussianMixture::from_log_weights(
        detail::discrete_evidence_log_weights(*dp, cp.measurement, cp.y),
        std::move(comps));
  }

  const auto cond = detail::condition_prior(cp);
  const Eigen::Index n = cond.m_post.front().size();
  std::vector<Gaussian> comps;
  comps.reserve(cond.m_post.size());
  for (std::size_t i = 0; i < cond.m_post.size(); ++i)
    comps.emplace_back(ra * cond.m_post[i],
                       a * cond.c_post[i] + v * Mat::Identity(n, n));
  return GaussianMixture::from_log_weights(cond.log_pi, std::move(comps));
}

inline double analytic_posterior_log_density(const ConditionalProblem& cp, double t,
                                             const Vec& xt) {
  return posterior_mixture(cp, t).log_density(xt);
}

inline double analytic_posterior_density(const ConditionalProblem& cp, double t,
                                         const Vec& xt) {
  return std::exp(analytic_posterior_log_density(cp, t, xt));
}

inline Vec analytic_posterior_score(const ConditionalProblem& cp, double t,
                                    const Vec& xt) {
  return posterior_mixture(cp, t).score(xt);
}

// ---------------------------------------------------------------------------
// Likelihood p(y | x_t)
// ---------------------------------------------------------------------------

inline double analytic_log_likelihood(const ConditionalProblem& cp, double t,
                                      const Vec& xt) {
  detail::require_tractable(cp);
  const double a = cp.schedule.alpha_bar(t);
  const double v = 1.0 - a;
  if (v <= 0.0) throw degenerate_error("likelihood requires t > 0");

  if (const auto* dp = std::get_if<DiscretePrior>(&cp.prior)) {
    // responsibilities kept in the log domain: log r_i = clt_i - lse(clt)
    const Vec clt = marginal_mixture(cp.prior, cp.schedule, t).component_log_terms(xt);
    Vec terms(clt.size());
    for (std::size_t i = 0; i < dp->atoms.size(); ++i)
      terms[static_cast<Eigen::Index>(i)] =
          clt[static_cast<Eigen::Index>(i)] +
          cp.measurement.log_likelihood(cp.y, dp->atoms[i]);
    return std::max(log_sum_exp(terms) - log_sum_exp(clt), kLogDensityFloor);
  }

  const auto& aff = std::get<AffineOp>(cp.measurement.op);
  const Mat S = detail::noise_cov(cp.measurement, aff.gain.rows());

  if (const auto* gp = std::get_if<GaussianPrior>(&cp.prior)) {
    const DenoiserMoments dm = denoiser_moments(cp.prior, cp.schedule, t, xt);
    (void)gp;
    return Gaussian(aff.gain * dm.mean + aff.offset,
                    aff.gain * dm.cov * aff.gain.transpose() + S)
        .log_density(cp.y);
  }

  // GMM: mixture over per-component denoisers with marginal responsibilities.
  const auto& gmm = std::get<GmmPrior>(cp.prior);
  const double ra = std::sqrt(a);
  const Vec clt = marginal_mixture(cp.prior, cp.schedule, t).component_log_terms(xt);
  const Eigen::Index n = gmm.means.front().size();
  Vec terms(clt.size());
  for (std::size_t i = 0; i < gmm.means.size(); ++i) {
    Mat prior_prec = Eigen::LLT<Mat>(gmm.covs[i]).solve(Mat::Identity(n, n));
    Mat c0t_inv = prior_prec + (a / v) * Mat::Identity(n, n);
    Mat c0t = Eigen::LLT<Mat>(c0t_inv).solve(Mat::Identity(n, n));
    Vec m0t = c0t * (prior_prec * gmm.means[i] + (ra / v) * xt);
    terms[static_cast<Eigen::Index>(i)] =
        clt[static_cast<Eigen::Index>(i)] +
        Gaussian(aff.gain * m0t + aff.offset,
                 aff.gain * c0t * aff.gain.transpose() + S)
            .log_density(cp.y);
  }
  return std::max(log_sum_exp(terms) - log_sum_exp(clt), kLogDensityFloor);
}

inline double analytic_likelihood(const ConditionalProblem& cp, double t, const Vec& xt) {
  return std::exp(analytic_log_likelihood(cp, t, xt));
}

/// log p(y): the measurement evidence of the clean-signal prior. Finite sum
/// for discrete priors, componentwise y-marginals for affine problems.
inline double analytic_log_evidence(const ConditionalProblem& cp) {
  detail::require_tractable(cp);
  if (const auto* dp = std::get_if<DiscretePrior>(&cp.prior))
    return log_sum_exp(detail::discrete_evidence_log_weights(*dp, cp.measurement, cp.y));
  return log_sum_exp(detail::condition_prior(cp).log_pi);
}

inline Vec analytic_likelihood_score(const ConditionalProblem& cp, double t,
                                     const Vec& xt) {
  detail::require_tractable(cp);
  const double a = cp.schedule.alpha_bar(t);
  const double ra = std::sqrt(a);
  const double v = 1.0 - a;
  if (v <= 0.0) throw degenerate_error("likelihood score requires t > 0");

  if (const auto* dp = std::get_if<DiscretePrior>(&cp.prior)) {
    // Only the kernel responsibilities depend on x_t; the score is the
    // reweighted kernel pull minus the marginal pull.
    const Vec clt = marginal_mixture(cp.prior, cp.schedule, t).component_log_terms(xt);
    Vec lq(clt.size());
    for (std::size_t i = 0; i < dp->atoms.size(); ++i)
      lq[static_cast<Eigen::Index>(i)] =
          clt[static_cast<Eigen::Index>(i)] +
          cp.measurement.log_likelihood(cp.y, dp->atoms[i]);
    const Vec r = softmax(clt);
    const Vec q = softmax(lq);
    Vec score = Vec::Zero(xt.size());
    for (std::size_t i = 0; i < dp->atoms.size(); ++i) {
      const Eigen::Index ii = static_cast<Eigen::Index>(i);
      score += (r[ii] - q[ii]) * (xt - ra * dp->atoms[i]) / v;
    }
    return score;
  }

  if (std::holds_alternative<GaussianPrior>(cp.prior)) {
    const auto& aff = std::get<AffineOp>(cp.measurement.op);
    const Mat S = detail::noise_cov(cp.measurement, aff.gain.rows());
    const DenoiserMoments dm = denoiser_moments(cp.prior, cp.schedule, t, xt);
    const Mat like_cov = aff.gain * dm.cov * aff.gain.transpose() + S;
    const Vec resid = cp.y - aff.gain * dm.mean - aff.offset;
    return (ra / v) * dm.cov * aff.gain.transpose() *
           Eigen::LLT<Mat>(like_cov).solve(resid);
  }

  // GMM: define the likelihood score by subtracting the marginal score from
  // the posterior score.
  return analytic_posterior_score(cp, t, xt) - marginal_score(cp.prior, cp.schedule, t, xt);
}

// ---------------------------------------------------------------------------
// Field evaluation
// ---------------------------------------------------------------------------

/// Posterior mixture parameters at time t for a 1-d problem.
inline ScalarMixture scalar_posterior_slice(const ConditionalProblem& cp, double t) {
  detail::require_tractable(cp);
  if (dimension(cp.prior) != 1)
    throw unsupported_operation("scalar_posterior_slice requires 1-d problems");
  const double a = cp.schedule.alpha_bar(t);
  const double ra = std::sqrt(a);
  const double v = 1.0 - a;
  ScalarMixture mix;

  if (const auto* dp = std::get_if<DiscretePrior>(&cp.prior)) {
    if (v <= 0.0)
      throw degenerate_error("discrete posterior has no density at t = 0");
    Vec lw = detail::discrete_evidence_log_weights(*dp, cp.measurement, cp.y);
    const double lse = log_sum_exp(lw);
    for (std::size_t i = 0; i < dp->atoms.size(); ++i) {
      mix.log_w.push_back(lw[static_cast<Eigen::Index>(i)] - lse);
      mix.mu.push_back(ra * dp->atoms[i][0]);
      mix.var.push_back(v);
    }
    return mix;
  }

  const auto cond = detail::condition_prior(cp);
  const double lse = log_sum_exp(cond.log_pi);
  for (std::size_t i = 0; i < cond.m_post.size(); ++i) {
    mix.log_w.push_back(cond.log_pi[static_cast<Eigen::Index>(i)] - lse);
    mix.mu.push_back(ra * cond.m_post[i][0]);
    mix.var.push_back(a * cond.c_post[i](0, 0) + v);
  }
  return mix;
}

inline DensityField analytic_posterior_field(const ConditionalProblem& cp,
                                             const std::vector<double>& t_grid,
                                             const std::vector<double>& x_grid) {
  detail::require_tractable(cp);
  DensityField field;
  field.t_grid = t_grid;
  field.x_grid = x_grid;
  field.values.resize(static_cast<Eigen::Index>(t_grid.size()),
                      static_cast<Eigen::Index>(x_grid.size()));
  parallel_for(static_cast<int>(t_grid.size()), [&](int i) {
    const ScalarMixture mix = scalar_posterior_slice(cp, t_grid[static_cast<std::size_t>(i)]);
    for (std::size_t j = 0; j < x_grid.size(); ++j)
      field.values(i, static_cast<Eigen::Index>(j)) = mix.density(x_grid[j]);
  });
  field.normalize_rows();
  return field;
}

}  // namespace difflens
