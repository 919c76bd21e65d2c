#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "difflens/measurement.hpp"
#include "difflens/prior.hpp"

namespace difflens {

// ---------------------------------------------------------------------------
// Named priors
// ---------------------------------------------------------------------------

inline Prior make_prior(const std::string& name) {
  if (name == "tri_equal")
    return DiscretePrior::scalar({-1.8, 0.2, 2.2}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  if (name == "pent_asym")
    return DiscretePrior::scalar({-2.7, -0.7, 0.3, 1.3, 3.3},
                                 {0.10, 0.25, 0.30, 0.25, 0.10});
  if (name == "wild")
    return DiscretePrior::scalar({-4.0, -1.2, -0.8, 2.5, 5.5},
                                 {0.05, 0.50, 0.30, 0.10, 0.05});
  if (name == "narrow") return GaussianPrior::scalar(0.6, 0.5);
  if (name == "wide") return GaussianPrior::scalar(1.5, 2.0);
  if (name == "gmm_tri_equal")
    return GmmPrior::scalar({1.0 / 3, 1.0 / 3, 1.0 / 3}, {-2.6, 0.4, 3.4},
                            {0.25, 0.25, 0.25});
  if (name == "bi_asym")
    return GmmPrior::scalar({0.30, 0.70}, {-1.7, 2.3}, {0.16, 0.36});
  throw std::invalid_argument("unknown prior name: " + name);
}

// ---------------------------------------------------------------------------
// Named operators
// ---------------------------------------------------------------------------

inline Operator make_operator(const std::string& name) {
  if (name == "identity") return AffineOp::scalar(1.0, 0.0);
  if (name == "gain_shift") return AffineOp::scalar(0.7, -0.4);
  if (name == "gain") return AffineOp::scalar(0.6, 0.0);
  if (name == "quadratic") return QuadraticOp{};
  if (name == "cubic") return CubicOp{};
  if (name == "sine") return SineOp{1.0, 1.0};
  throw std::invalid_argument("unknown operator name: " + name);
}

// ---------------------------------------------------------------------------
// Bundled targets
// ---------------------------------------------------------------------------

struct TargetSpec {
  std::string prior;
  std::string op;
  double noise_std;
  double y;
};

inline std::string target_dir_name(const TargetSpec& target) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.4f", target.y);
  return target.prior + "__" + target.op + "__y=" + buf;
}

/// The full testbed: every (prior, operator, sigma, y) triple, three
/// measurements per operator, plus the nonlinear continuous-prior panels
/// that only the finite-sample route can resolve.
inline const std::vector<TargetSpec>& bundled_targets() {
  static const std::vector<TargetSpec> table = {
      // tri_equal (discrete), sigma = 0.3
      {"tri_equal", "identity", 0.3, -1.8},
      {"tri_equal", "identity", 0.3, 0.2},
      {"tri_equal", "identity", 0.3, 2.2},
      {"tri_equal", "quadratic", 0.3, 0.04},
      {"tri_equal", "quadratic", 0.3, 3.24},
      {"tri_equal", "quadratic", 0.3, 4.04},
      {"tri_equal", "cubic", 0.3, -5.83},
      {"tri_equal", "cubic", 0.3, 0.008},
      {"tri_equal", "cubic", 0.3, 10.65},
      // pent_asym (discrete), sigma = 0.3
      {"pent_asym", "identity", 0.3, -2.7},
      {"pent_asym", "identity", 0.3, 0.3},
      {"pent_asym", "identity", 0.3, 3.3},
      {"pent_asym", "quadratic", 0.3, 0.09},
      {"pent_asym", "quadratic", 0.3, 1.09},
      {"pent_asym", "quadratic", 0.3, 9.09},
      {"pent_asym", "cubic", 0.3, -19.7},
      {"pent_asym", "cubic", 0.3, 0.027},
      {"pent_asym", "cubic", 0.3, 35.9},
      // wild (discrete), sigma = 0.3
      {"wild", "identity", 0.3, -4.0},
      {"wild", "identity", 0.3, -1.0},
      {"wild", "identity", 0.3, 5.5},
      {"wild", "quadratic", 0.3, 1.0},
      {"wild", "quadratic", 0.3, 6.25},
      {"wild", "quadratic", 0.3, 16.0},
      {"wild", "cubic", 0.3, -64.0},
      {"wild", "cubic", 0.3, -1.0},
      {"wild", "cubic", 0.3, 15.6},
      // narrow (Gaussian), sigma = 0.3
      {"narrow", "identity", 0.3, -2.0},
      {"narrow", "identity", 0.3, 0.5},
      {"narrow", "identity", 0.3, 1.5},
      {"narrow", "gain_shift", 0.3, -2.0},
      {"narrow", "gain_shift", 0.3, 0.5},
      {"narrow", "gain_shift", 0.3, 1.5},
      // wide (Gaussian), sigma = 0.3
      {"wide", "identity", 0.3, -2.0},
      {"wide", "identity", 0.3, 0.5},
      {"wide", "identity", 0.3, 1.5},
      {"wide", "gain_shift", 0.3, -2.0},
      {"wide", "gain_shift", 0.3, 0.5},
      {"wide", "gain_shift", 0.3, 1.5},
      // gmm_tri_equal, low-noise identity and high-noise gain
      {"gmm_tri_equal", "identity", 0.2, -2.6},
      {"gmm_tri_equal", "identity", 0.2, 0.4},
      {"gmm_tri_equal", "identity", 0.2, 3.4},
      {"gmm_tri_equal", "gain", 1.5, 0.24},
      {"gmm_tri_equal", "gain", 1.5, 1.0},
      {"gmm_tri_equal", "gain", 1.5, 1.7},
      // bi_asym, low-noise identity and high-noise gain
      {"bi_asym", "identity", 0.2, -1.7},
      {"bi_asym", "identity", 0.2, 0.3},
      {"bi_asym", "identity", 0.2, 2.3},
      {"bi_asym", "gain", 1.5, -1.3},
      {"bi_asym", "gain", 1.5, 0.18},
      {"bi_asym", "gain", 1.5, 1.0},
      // nonlinear operators on continuous priors (intractable analytic cell)
      {"gmm_tri_equal", "cubic", 0.3, -1.14},
      {"wide", "cubic", 0.3, -1.12},
      {"wide", "sine", 0.3, 0.0},
      {"wide", "sine", 0.3, 0.25},
  };
  return table;
}

inline const TargetSpec& find_target(const std::string& dir_name) {
  for (const auto& t : bundled_targets())
    if (target_dir_name(t) == dir_name) return t;
  throw std::invalid_argument("unknown target: " + dir_name);
}

}  // namespace difflens
