#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace difflens {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Error types
// ---------------------------------------------------------------------------

/// Requested operation is not defined for the given object (e.g. pointwise
/// density of a discrete measure).
struct unsupported_operation : std::logic_error {
  using std::logic_error::logic_error;
};

/// The requested conditional object has no closed form for this
/// prior/operator combination.
struct intractable_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A density or weight vector degenerates (e.g. zero-variance kernel at t=0).
struct degenerate_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Every measurement weight underflowed; the observation is inconsistent
/// with the whole dataset.
struct degenerate_evidence_error : std::runtime_error {
  degenerate_evidence_error(const std::string& what, double max_log_weight)
      : std::runtime_error(what), max_log_weight(max_log_weight) {}
  double max_log_weight;
};

/// More than the tolerated fraction of trajectories left the finite domain.
struct divergence_error : std::runtime_error {
  divergence_error(const std::string& what, int diverged, int total)
      : std::runtime_error(what), diverged(diverged), total(total) {}
  int diverged;
  int total;
};

// ---------------------------------------------------------------------------
// Numerics
// ---------------------------------------------------------------------------

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kLogDensityFloor = -690.77552789821368;  // log(1e-300)

inline double log_sum_exp(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

inline double log_sum_exp(const std::vector<double>& v) {
  return log_sum_exp(v.data(), v.size());
}

inline double log_sum_exp(const Eigen::VectorXd& v) {
  return log_sum_exp(v.data(), static_cast<std::size_t>(v.size()));
}

/// Normalized exponentials of log-weights, computed with max subtraction.
/// Uses scalar std::exp: the vectorized exp clamps very negative inputs to
/// a denormal instead of flushing to zero.
inline Eigen::VectorXd softmax(const Eigen::VectorXd& logw) {
  const double lse = log_sum_exp(logw);
  Eigen::VectorXd out(logw.size());
  for (Eigen::Index i = 0; i < logw.size(); ++i) out[i] = std::exp(logw[i] - lse);
  return out;
}

inline std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + step * i;
  out.back() = hi;
  return out;
}

/// Composite trapezoid rule on an arbitrarily spaced grid.
template <typename F, typename = std::enable_if_t<std::is_invocable_r_v<double, F, double>>>
double trapezoid(const std::vector<double>& x, F&& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i)
    acc += 0.5 * (x[i + 1] - x[i]) * (f(x[i]) + f(x[i + 1]));
  return acc;
}

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i)
    acc += 0.5 * (x[i + 1] - x[i]) * (y[i] + y[i + 1]);
  return acc;
}

/// Symmetrize and clamp negative eigenvalues at zero. Only intended for
/// matrices that are PSD up to roundoff.
inline Mat make_psd(Mat c) {
  c = 0.5 * (c + c.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es(c);
  if (es.eigenvalues().minCoeff() >= 0.0) return c;
  Vec ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// ---------------------------------------------------------------------------
// Seeded random streams
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derive an independent stream seed from a base seed and a stream index.
/// Used so parallel trajectories draw identical noise regardless of the
/// thread count or evaluation order.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed;
  (void)splitmix64(s);
  s ^= 0xD1B54A32D192ED03ULL * (stream + 1);
  return splitmix64(s);
}

inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
  return std::mt19937_64(stream_seed(seed, stream));
}

// ---------------------------------------------------------------------------
// Row-parallel helper
// ---------------------------------------------------------------------------

/// Run fn(i) for i in [0, n) across hardware threads. Each index is
/// processed exactly once; fn must not share mutable state across indices.
template <typename F>
void parallel_for(int n, F&& fn) {
  unsigned hw = std::thread::hardware_concurrency();
  int workers = static_cast<int>(hw == 0 ? 1 : hw);
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  workers = std::min(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([=, &fn]() {
      for (int i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace difflens
