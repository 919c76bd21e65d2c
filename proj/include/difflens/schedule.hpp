#pragma once

#include <cmath>
#include <stdexcept>

#include "difflens/common.hpp"

namespace difflens {

/// Parameters of the Gaussian forward transition p(x_t | x_0) at one time:
/// x_t ~ N(scale * x_0, variance * I).
struct ForwardKernel {
  double scale;
  double variance;
};

/// Linear-rate variance-preserving noise schedule on t in [0, 1].
///
/// beta(t) = beta0 + t * (beta1 - beta0), and alpha_bar(t) is the
/// closed-form exponential of the negated rate integral, so alpha_bar(0)
/// is exactly 1 and alpha_bar is strictly decreasing.
struct NoiseSchedule {
  double beta0 = 0.1;
  double beta1 = 20.0;

  NoiseSchedule() = default;
  NoiseSchedule(double b0, double b1) : beta0(b0), beta1(b1) {
    if (!(beta0 > 0.0) || !(beta1 >= beta0))
      throw std::invalid_argument("NoiseSchedule requires 0 < beta0 <= beta1");
  }

  double beta(double t) const {
    check_time(t);
    return beta0 + t * (beta1 - beta0);
  }

  double alpha_bar(double t) const {
    check_time(t);
    return std::exp(-beta0 * t - 0.5 * (beta1 - beta0) * t * t);
  }

  ForwardKernel forward_kernel(double t) const {
    // variance derived from the scale so scale^2 + variance == 1 holds
    // exactly in floating point
    const double scale = std::sqrt(alpha_bar(t));
    return {scale, 1.0 - scale * scale};
  }

 private:
  static void check_time(double t) {
    if (!(t >= 0.0 && t <= 1.0))
      throw std::domain_error("schedule time outside [0, 1]");
  }
};

}  // namespace difflens
