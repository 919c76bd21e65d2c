#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "difflens/common.hpp"
#include "difflens/measurement.hpp"
#include "difflens/prior.hpp"
#include "difflens/schedule.hpp"

namespace difflens {

enum class Method { sigma_dps, zeta_dps, pgdm, tmpd };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::sigma_dps: return "sigma_dps";
    case Method::zeta_dps: return "zeta_dps";
    case Method::pgdm: return "pgdm";
    case Method::tmpd: return "tmpd";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "sigma_dps") return Method::sigma_dps;
  if (s == "zeta_dps") return Method::zeta_dps;
  if (s == "pgdm") return Method::pgdm;
  if (s == "tmpd") return Method::tmpd;
  throw std::invalid_argument("unknown sampler method: " + s);
}

/// True when the method's likelihood approximation only simplifies for
/// affine operators (the Gaussian denoiser approximations).
inline bool requires_affine(Method m) {
  return m == Method::pgdm || m == Method::tmpd;
}

struct SamplerSpec {
  Method method = Method::sigma_dps;
  double zeta = 0.1;                        // zeta_dps only
  std::function<double(double)> r_squared;  // pgdm only; empty = 1 - alpha_bar(t)
  int n_steps = 399;
  double t_start = 1.0;
  double t_end = 1e-3;
  int trajectories = 20000;
  std::uint64_t seed = 0;
  bool record_trajectory = true;
  bool zero_diffusion = false;  // suppress the noise term (deterministic mode)
  double max_divergence_fraction = 0.01;
};

inline void validate(const SamplerSpec& spec, const MeasurementModel& m) {
  if (!(spec.t_start > spec.t_end && spec.t_end > 0.0))
    throw std::invalid_argument("SamplerSpec: need t_start > t_end > 0");
  if (spec.trajectories < 1) throw std::invalid_argument("SamplerSpec: K >= 1");
  if (spec.n_steps < 1) throw std::invalid_argument("SamplerSpec: n_steps >= 1");
  if (requires_affine(spec.method) && !m.affine())
    throw unsupported_operation(to_string(spec.method) +
                                " requires an affine measurement operator");
}

inline double default_r_squared(const NoiseSchedule& s, double t) {
  return 1.0 - s.alpha_bar(t);
}

// ---------------------------------------------------------------------------
// Approximate likelihood scores
// ---------------------------------------------------------------------------

/// The moment-matched likelihood score at (t, x_t), given the exact denoiser
/// moments there. The common prefactor sqrt(a)/(1-a) * C_{0|t} is the
/// Jacobian of the denoiser mean.
inline Vec approx_likelihood_score(const SamplerSpec& spec, const NoiseSchedule& s,
                                   double t, const DenoiserMoments& dm,
                                   const MeasurementModel& m, const Vec& y) {
  if (requires_affine(spec.method) && !m.affine())
    throw unsupported_operation(to_string(spec.method) +
                                " requires an affine measurement operator");
  const double a = s.alpha_bar(t);
  const double v = 1.0 - a;
  const double sigma2 = m.noise_std * m.noise_std;
  const Mat mean_jac = (std::sqrt(a) / v) * dm.cov;

  switch (spec.method) {
    case Method::sigma_dps: {
      const Vec r = y - m.apply(dm.mean);
      return mean_jac * m.jacobian(dm.mean).transpose() * (r / sigma2);
    }
    case Method::zeta_dps: {
      const Vec r = y - m.apply(dm.mean);
      const double norm = r.norm();
      if (norm == 0.0) return Vec::Zero(dm.mean.size());
      return (2.0 * spec.zeta / norm) * (mean_jac * m.jacobian(dm.mean).transpose() * r);
    }
    case Method::pgdm: {
      const auto& aff = std::get<AffineOp>(m.op);
      const double rt2 = spec.r_squared ? spec.r_squared(t) : default_r_squared(s, t);
      const Eigen::Index md = aff.gain.rows();
      const Mat like_cov =
          sigma2 * Mat::Identity(md, md) + rt2 * aff.gain * aff.gain.transpose();
      const Vec r = y - aff.gain * dm.mean - aff.offset;
      return mean_jac * aff.gain.transpose() * Eigen::LLT<Mat>(like_cov).solve(r);
    }
    case Method::tmpd: {
      const auto& aff = std::get<AffineOp>(m.op);
      const Eigen::Index md = aff.gain.rows();
      const Mat like_cov = sigma2 * Mat::Identity(md, md) +
                           aff.gain * dm.cov * aff.gain.transpose();
      const Vec r = y - aff.gain * dm.mean - aff.offset;
      return mean_jac * aff.gain.transpose() * Eigen::LLT<Mat>(like_cov).solve(r);
    }
  }
  return Vec::Zero(dm.mean.size());
}

inline Vec approx_likelihood_score(const SamplerSpec& spec, const Prior& prior,
                                   const NoiseSchedule& s, const MeasurementModel& m,
                                   const Vec& y, double t, const Vec& xt) {
  return approx_likelihood_score(spec, s, t, denoiser_moments(prior, s, t, xt), m, y);
}

namespace detail {

/// Scalar version used inside the trajectory loop.
inline double scalar_approx_score(const SamplerSpec& spec, const NoiseSchedule& s,
                                  double t, double ra, double v, double den_mean,
                                  double den_var, const MeasurementModel& m, double y) {
  const double sigma2 = m.noise_std * m.noise_std;
  const double mean_jac = (ra / v) * den_var;
  switch (spec.method) {
    case Method::sigma_dps: {
      const Vec mx = Vec::Constant(1, den_mean);
      const double r = y - difflens::apply(m.op, mx)[0];
      return mean_jac * difflens::jacobian(m.op, mx)(0, 0) * r / sigma2;
    }
    case Method::zeta_dps: {
      const Vec mx = Vec::Constant(1, den_mean);
      const double r = y - difflens::apply(m.op, mx)[0];
      if (r == 0.0) return 0.0;
      const double sign = r > 0.0 ? 1.0 : -1.0;
      return 2.0 * spec.zeta * mean_jac * difflens::jacobian(m.op, mx)(0, 0) * sign;
    }
    case Method::pgdm: {
      const auto& aff = std::get<AffineOp>(m.op);
      const double a0 = aff.gain(0, 0), b0 = aff.offset[0];
      const double rt2 = spec.r_squared ? spec.r_squared(t) : default_r_squared(s, t);
      return mean_jac * a0 * (y - a0 * den_mean - b0) / (sigma2 + rt2 * a0 * a0);
    }
    case Method::tmpd: {
      const auto& aff = std::get<AffineOp>(m.op);
      const double a0 = aff.gain(0, 0), b0 = aff.offset[0];
      return mean_jac * a0 * (y - a0 * den_mean - b0) / (sigma2 + den_var * a0 * a0);
    }
  }
  return 0.0;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Reverse-time Euler-Maruyama
// ---------------------------------------------------------------------------

/// One reverse step of size dt > 0 (toward smaller t):
///   x <- x - [-(beta/2) x - beta * score] dt + sqrt(beta dt) * noise.
inline Vec reverse_sde_step(const Vec& x, double t, double dt, const Vec& posterior_score,
                            const NoiseSchedule& s, const Vec& noise) {
  const double b = s.beta(t);
  return x + (0.5 * b * x + b * posterior_score) * dt + std::sqrt(b * dt) * noise;
}

struct SampleEnsemble {
  std::vector<double> times;        // recorded nodes, descending from t_start
  std::vector<Mat> states;          // one K x dim matrix per node
  std::vector<std::uint8_t> diverged;

  int trajectories() const { return static_cast<int>(diverged.size()); }
  int divergence_count() const {
    int c = 0;
    for (auto d : diverged) c += d;
    return c;
  }
  const Mat& terminal() const { return states.back(); }
};

/// Integrate K reverse trajectories from t_start to t_end under an arbitrary
/// posterior score, recording the state at every node. Each trajectory owns
/// an independent seeded stream, so the result does not depend on the thread
/// count. Trajectories that become non-finite are frozen and flagged.
inline SampleEnsemble run_reverse_sde(
    const std::function<Vec(double, const Vec&)>& posterior_score, int dim,
    const NoiseSchedule& s, const SamplerSpec& spec) {
  const int nodes = spec.n_steps + 1;
  std::vector<double> times = linspace(spec.t_start, spec.t_end, nodes);

  SampleEnsemble out;
  out.times = spec.record_trajectory ? times : std::vector<double>{times.back()};
  out.states.assign(out.times.size(),
                    Mat::Zero(spec.trajectories, dim));
  out.diverged.assign(static_cast<std::size_t>(spec.trajectories), 0);

  parallel_for(spec.trajectories, [&](int k) {
    auto rng = make_engine(spec.seed, static_cast<std::uint64_t>(k));
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec x(dim);
    for (int d = 0; d < dim; ++d) x[d] = normal(rng);
    bool dead = false;
    auto record = [&](int node, const Vec& value) {
      if (!spec.record_trajectory && node + 1 != nodes) return;
      const int slot = spec.record_trajectory ? node : 0;
      for (int d = 0; d < dim; ++d) out.states[static_cast<std::size_t>(slot)](k, d) = value[d];
    };
    record(0, x);
    Vec noise(dim);
    for (int step = 0; step < spec.n_steps; ++step) {
      const double t = times[static_cast<std::size_t>(step)];
      const double dt = t - times[static_cast<std::size_t>(step + 1)];
      for (int d = 0; d < dim; ++d) noise[d] = normal(rng);
      if (spec.zero_diffusion) noise.setZero();
      if (!dead) {
        Vec score = posterior_score(t, x);
        Vec next = reverse_sde_step(x, t, dt, score, s, noise);
        if (score.allFinite() && next.allFinite()) {
          x = next;
        } else {
          dead = true;
          out.diverged[static_cast<std::size_t>(k)] = 1;
        }
      }
      record(step + 1, x);
    }
  });

  const int bad = out.divergence_count();
  if (bad > spec.max_divergence_fraction * spec.trajectories) {
    std::ostringstream msg;
    msg << bad << " of " << spec.trajectories << " trajectories diverged";
    throw divergence_error(msg.str(), bad, spec.trajectories);
  }
  return out;
}

/// Run one moment-matching sampler against an analytic prior. The drift uses
/// the exact marginal score plus the method's approximate likelihood score.
inline SampleEnsemble run_sampler(const SamplerSpec& spec, const Prior& prior,
                                  const MeasurementModel& m, const Vec& y,
                                  const NoiseSchedule& s) {
  validate(spec, m);
  const int dim = dimension(prior);

  if (dim == 1) {
    // Scalar fast path: precompute one prior slice per node, then run the
    // trajectory loop on plain doubles.
    const int nodes = spec.n_steps + 1;
    std::vector<double> times = linspace(spec.t_start, spec.t_end, nodes);
    std::vector<ScalarPriorSlice> slices;
    slices.reserve(static_cast<std::size_t>(spec.n_steps));
    for (int step = 0; step < spec.n_steps; ++step)
      slices.push_back(make_scalar_slice(prior, s, times[static_cast<std::size_t>(step)]));
    const double y0 = y[0];

    SampleEnsemble out;
    out.times = spec.record_trajectory ? times : std::vector<double>{times.back()};
    out.states.assign(out.times.size(), Mat::Zero(spec.trajectories, 1));
    out.diverged.assign(static_cast<std::size_t>(spec.trajectories), 0);

    parallel_for(spec.trajectories, [&](int k) {
      auto rng = make_engine(spec.seed, static_cast<std::uint64_t>(k));
      std::normal_distribution<double> normal(0.0, 1.0);
      std::vector<double> scratch(slices.front().size());
      double x = normal(rng);
      bool dead = false;
      auto record = [&](int node, double value) {
        if (!spec.record_trajectory && node + 1 != nodes) return;
        const int slot = spec.record_trajectory ? node : 0;
        out.states[static_cast<std::size_t>(slot)](k, 0) = value;
      };
      record(0, x);
      for (int step = 0; step < spec.n_steps; ++step) {
        const double t = times[static_cast<std::size_t>(step)];
        const double dt = t - times[static_cast<std::size_t>(step + 1)];
        double noise = normal(rng);
        if (spec.zero_diffusion) noise = 0.0;
        if (!dead) {
          const auto& slice = slices[static_cast<std::size_t>(step)];
          slice.responsibilities(x, scratch.data());
          double prior_score = 0.0, den_mean = 0.0;
          for (std::size_t i = 0; i < slice.size(); ++i) {
            prior_score += scratch[i] * (-(x - slice.mu[i]) / slice.var[i]);
            den_mean += scratch[i] * (slice.den_a[i] + slice.den_b[i] * x);
          }
          double den_var = 0.0;
          for (std::size_t i = 0; i < slice.size(); ++i) {
            const double d = slice.den_a[i] + slice.den_b[i] * x - den_mean;
            den_var += scratch[i] * (slice.den_c[i] + d * d);
          }
          const double like_score = detail::scalar_approx_score(
              spec, s, t, slice.sqrt_alpha, slice.one_minus_alpha, den_mean, den_var, m,
              y0);
          const double score = prior_score + like_score;
          const double b = s.beta(t);
          const double next = x + (0.5 * b * x + b * score) * dt + std::sqrt(b * dt) * noise;
          if (std::isfinite(score) && std::isfinite(next)) {
            x = next;
          } else {
            dead = true;
            out.diverged[static_cast<std::size_t>(k)] = 1;
          }
        }
        record(step + 1, x);
      }
    });

    const int bad = out.divergence_count();
    if (bad > spec.max_divergence_fraction * spec.trajectories) {
      std::ostringstream msg;
      msg << bad << " of " << spec.trajectories << " trajectories diverged ("
          << to_string(spec.method) << ")";
      throw divergence_error(msg.str(), bad, spec.trajectories);
    }
    return out;
  }

  auto score_fn = [&](double t, const Vec& x) -> Vec {
    const DenoiserMoments dm = denoiser_moments(prior, s, t, x);
    return marginal_score(prior, s, t, x) + approx_likelihood_score(spec, s, t, dm, m, y);
  };
  return run_reverse_sde(score_fn, dim, s, spec);
}

}  // namespace difflens
