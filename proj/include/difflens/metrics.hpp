#pragma once

#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "difflens/common.hpp"
#include "difflens/density_field.hpp"
#include "difflens/samplers.hpp"

namespace difflens {

/// Total variation distance between two densities tabulated on a shared
/// grid: half the L1 distance after renormalizing each row. A row without
/// mass (flagged) is maximally far from any density.
inline double tv_distance(const std::vector<double>& p, const std::vector<double>& q,
                          const std::vector<double>& x_grid) {
  if (p.size() != x_grid.size() || q.size() != x_grid.size())
    throw std::invalid_argument("tv_distance: grid size mismatch");
  const double zp = trapezoid(x_grid, p);
  const double zq = trapezoid(x_grid, q);
  const bool p_empty = !(zp > 0.0) || !std::isfinite(zp);
  const bool q_empty = !(zq > 0.0) || !std::isfinite(zq);
  if (p_empty && q_empty) return 0.0;
  if (p_empty || q_empty) return 1.0;
  std::vector<double> diff(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) diff[i] = std::abs(p[i] / zp - q[i] / zq);
  return std::min(1.0, 0.5 * trapezoid(x_grid, diff));
}

inline std::vector<double> field_row(const DensityField& f, int row) {
  std::vector<double> out(static_cast<std::size_t>(f.n_x()));
  for (int j = 0; j < f.n_x(); ++j) out[static_cast<std::size_t>(j)] = f.values(row, j);
  return out;
}

/// Per-timestep TV between two fields on identical grids.
inline std::vector<double> tv_curve(const DensityField& a, const DensityField& b) {
  auto same = [](const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size()) return false;
    for (std::size_t i = 0; i < u.size(); ++i)
      if (std::abs(u[i] - v[i]) > 1e-9) return false;
    return true;
  };
  if (!same(a.t_grid, b.t_grid) || !same(a.x_grid, b.x_grid))
    throw std::invalid_argument("tv_curve: fields live on different grids");
  std::vector<double> tv(static_cast<std::size_t>(a.n_t()));
  for (int i = 0; i < a.n_t(); ++i)
    tv[static_cast<std::size_t>(i)] = tv_distance(field_row(a, i), field_row(b, i), a.x_grid);
  return tv;
}

// ---------------------------------------------------------------------------
// Ensemble -> density field
// ---------------------------------------------------------------------------

/// Histogram the ensemble onto the spatial grid at every recorded node.
/// Bins are centered on the grid nodes; diverged trajectories are skipped.
/// With smoothing, rows are convolved with a one-bin-width Gaussian kernel
/// (renormalized at the edges so row mass is preserved).
inline DensityField ensemble_density(const SampleEnsemble& ensemble,
                                     const std::vector<double>& x_grid,
                                     bool smooth = true) {
  if (ensemble.trajectories() < 100)
    throw std::invalid_argument("ensemble_density: need at least 100 trajectories");
  // Reverse-time ensembles are recorded from t_start down; fields keep
  // ascending time.
  const bool flip = ensemble.times.size() > 1 && ensemble.times.front() > ensemble.times.back();
  const int n_x = static_cast<int>(x_grid.size());
  const double dx = x_grid[1] - x_grid[0];
  const double lo = x_grid.front() - 0.5 * dx;
  const double hi = x_grid.back() + 0.5 * dx;

  DensityField field;
  field.t_grid = ensemble.times;
  if (flip) std::reverse(field.t_grid.begin(), field.t_grid.end());
  field.x_grid = x_grid;
  field.values = Mat::Zero(static_cast<Eigen::Index>(ensemble.times.size()), n_x);
  field.flagged.assign(ensemble.times.size(), 0);

  std::vector<double> kernel;
  if (smooth) {
    for (int j = -4; j <= 4; ++j) kernel.push_back(std::exp(-0.5 * j * j));
  }

  for (std::size_t row = 0; row < ensemble.times.size(); ++row) {
    const std::size_t node = flip ? ensemble.times.size() - 1 - row : row;
    const Mat& s = ensemble.states[node];
    std::vector<double> counts(static_cast<std::size_t>(n_x), 0.0);
    long total = 0;
    for (int k = 0; k < ensemble.trajectories(); ++k) {
      if (ensemble.diverged[static_cast<std::size_t>(k)]) continue;
      const double x = s(k, 0);
      if (!(x >= lo && x < hi)) continue;
      int bin = static_cast<int>(std::floor((x - lo) / dx));
      bin = std::min(std::max(bin, 0), n_x - 1);
      counts[static_cast<std::size_t>(bin)] += 1.0;
      ++total;
    }
    if (total == 0) {
      field.flagged[row] = 1;
      continue;
    }
    std::vector<double> smoothed(counts);
    if (smooth) {
      for (int j = 0; j < n_x; ++j) {
        double acc = 0.0, norm = 0.0;
        for (int o = -4; o <= 4; ++o) {
          const int src = j + o;
          if (src < 0 || src >= n_x) continue;
          const double w = kernel[static_cast<std::size_t>(o + 4)];
          acc += w * counts[static_cast<std::size_t>(src)];
          norm += w;
        }
        smoothed[static_cast<std::size_t>(j)] = acc / norm;
      }
    }
    for (int j = 0; j < n_x; ++j)
      field.values(static_cast<Eigen::Index>(row), j) =
          smoothed[static_cast<std::size_t>(j)] / (static_cast<double>(total) * dx);
  }
  field.normalize_rows();
  return field;
}

// ---------------------------------------------------------------------------
// Monte-Carlo rate fit
// ---------------------------------------------------------------------------

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;  // log-space intercept
  int points_used = 0;
};

/// Least-squares line through (log N, log TV). Nonpositive TV entries are
/// excluded with a warning.
inline RateFit mc_rate_fit(const std::vector<std::pair<double, double>>& points) {
  std::vector<double> lx, ly;
  for (const auto& [n, tv] : points) {
    if (!(tv > 0.0) || !(n > 0.0)) {
      std::cerr << "mc_rate_fit: dropping nonpositive point (" << n << ", " << tv << ")\n";
      continue;
    }
    lx.push_back(std::log(n));
    ly.push_back(std::log(tv));
  }
  if (lx.size() < 2) throw std::invalid_argument("mc_rate_fit: need >= 2 positive points");
  const double n = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  RateFit fit;
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / n;
  fit.points_used = static_cast<int>(lx.size());
  return fit;
}

}  // namespace difflens
