#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <variant>
#include <vector>

#include "difflens/common.hpp"
#include "difflens/gaussian.hpp"

namespace difflens {

struct AffineOp {
  Mat gain;
  Vec offset;

  static AffineOp identity(int dim = 1) {
    return {Mat::Identity(dim, dim), Vec::Zero(dim)};
  }
  static AffineOp scalar(double a, double b) {
    AffineOp op;
    op.gain = Mat::Constant(1, 1, a);
    op.offset = Vec::Constant(1, b);
    return op;
  }
};

/// Elementwise x^2.
struct QuadraticOp {};

/// Elementwise x^3.
struct CubicOp {};

/// Elementwise amplitude * sin(frequency * x).
struct SineOp {
  double amplitude = 1.0;
  double frequency = 1.0;
};

/// Scalar operator given by samples (x_k, f(x_k)); evaluated by linear
/// interpolation, differentiated by central differences.
struct TabulatedOp {
  std::vector<double> x;
  std::vector<double> f;
};

using Operator = std::variant<AffineOp, QuadraticOp, CubicOp, SineOp, TabulatedOp>;

inline bool is_affine(const Operator& op) {
  return std::holds_alternative<AffineOp>(op);
}

namespace detail {

inline double interp_tabulated(const TabulatedOp& op, double x) {
  if (op.x.size() < 2 || op.x.size() != op.f.size())
    throw std::invalid_argument("TabulatedOp: need matching x/f tables with >= 2 rows");
  const auto& xs = op.x;
  if (x <= xs.front()) {
    double s = (op.f[1] - op.f[0]) / (xs[1] - xs[0]);
    return op.f[0] + s * (x - xs[0]);
  }
  if (x >= xs.back()) {
    std::size_t n = xs.size();
    double s = (op.f[n - 1] - op.f[n - 2]) / (xs[n - 1] - xs[n - 2]);
    return op.f[n - 1] + s * (x - xs[n - 1]);
  }
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  std::size_t hi = static_cast<std::size_t>(it - xs.begin());
  std::size_t lo = hi - 1;
  double u = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return op.f[lo] + u * (op.f[hi] - op.f[lo]);
}

}  // namespace detail

inline Vec apply(const Operator& op, const Vec& x) {
  return std::visit(
      [&](const auto& o) -> Vec {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, AffineOp>) {
          return o.gain * x + o.offset;
        } else if constexpr (std::is_same_v<T, QuadraticOp>) {
          return x.array().square();
        } else if constexpr (std::is_same_v<T, CubicOp>) {
          return x.array().cube();
        } else if constexpr (std::is_same_v<T, SineOp>) {
          return o.amplitude * (o.frequency * x.array()).sin();
        } else {
          if (x.size() != 1)
            throw unsupported_operation("TabulatedOp is scalar-only");
          return Vec::Constant(1, detail::interp_tabulated(o, x[0]));
        }
      },
      op);
}

inline Mat jacobian(const Operator& op, const Vec& x) {
  return std::visit(
      [&](const auto& o) -> Mat {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, AffineOp>) {
          return o.gain;
        } else if constexpr (std::is_same_v<T, QuadraticOp>) {
          return (2.0 * x.array()).matrix().asDiagonal();
        } else if constexpr (std::is_same_v<T, CubicOp>) {
          return (3.0 * x.array().square()).matrix().asDiagonal();
        } else if constexpr (std::is_same_v<T, SineOp>) {
          return (o.amplitude * o.frequency * (o.frequency * x.array()).cos())
              .matrix()
              .asDiagonal();
        } else {
          if (x.size() != 1)
            throw unsupported_operation("TabulatedOp is scalar-only");
          double span = o.x.back() - o.x.front();
          double h = 1e-6 * (span > 0 ? span : 1.0);
          double d = (detail::interp_tabulated(o, x[0] + h) -
                      detail::interp_tabulated(o, x[0] - h)) /
                     (2.0 * h);
          return Mat::Constant(1, 1, d);
        }
      },
      op);
}

struct MeasurementModel {
  Operator op;
  double noise_std;

  MeasurementModel(Operator o, double sigma) : op(std::move(o)), noise_std(sigma) {
    if (!(noise_std > 0.0))
      throw std::invalid_argument("MeasurementModel: noise_std must be positive");
  }

  Vec apply(const Vec& x) const { return difflens::apply(op, x); }
  Mat jacobian(const Vec& x) const { return difflens::jacobian(op, x); }
  bool affine() const { return is_affine(op); }

  /// log N(y; A(x0), sigma^2 I).
  double log_likelihood(const Vec& y, const Vec& x0) const {
    const Vec r = y - apply(x0);
    const double v = noise_std * noise_std;
    return -0.5 * static_cast<double>(y.size()) * (kLog2Pi + std::log(v)) -
           0.5 * r.squaredNorm() / v;
  }

  double likelihood(const Vec& y, const Vec& x0) const {
    return std::exp(log_likelihood(y, x0));
  }

  Vec simulate(const Vec& x0, std::uint64_t seed) const {
    auto rng = make_engine(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec y = apply(x0);
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += noise_std * normal(rng);
    return y;
  }
};

}  // namespace difflens
