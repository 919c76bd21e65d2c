#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "difflens/common.hpp"
#include "difflens/prior.hpp"

namespace difflens {

/// Density values on a (time x space) grid. Each row is one time slice,
/// normalized to integrate to 1 over x_grid by the trapezoid rule.
/// A flagged row carries no mass (e.g. every sample fell off the grid).
struct DensityField {
  std::vector<double> t_grid;
  std::vector<double> x_grid;
  Mat values;  // n_t x n_x
  std::vector<std::uint8_t> flagged;

  int n_t() const { return static_cast<int>(t_grid.size()); }
  int n_x() const { return static_cast<int>(x_grid.size()); }

  double row_integral(int row) const {
    std::vector<double> y(x_grid.size());
    for (int j = 0; j < n_x(); ++j) y[static_cast<std::size_t>(j)] = values(row, j);
    return trapezoid(x_grid, y);
  }

  void normalize_rows() {
    if (flagged.empty()) flagged.assign(t_grid.size(), 0);
    for (int i = 0; i < n_t(); ++i) {
      double z = row_integral(i);
      if (z > 0.0 && std::isfinite(z)) {
        values.row(i) /= z;
      } else {
        values.row(i).setZero();
        flagged[static_cast<std::size_t>(i)] = 1;
      }
    }
  }
};

/// Evaluate fn(t, x) over the grid, row-parallel, and normalize the rows.
template <typename F>
DensityField evaluate_field(const std::vector<double>& t_grid,
                            const std::vector<double>& x_grid, F&& fn) {
  DensityField field;
  field.t_grid = t_grid;
  field.x_grid = x_grid;
  field.values.resize(static_cast<Eigen::Index>(t_grid.size()),
                      static_cast<Eigen::Index>(x_grid.size()));
  parallel_for(static_cast<int>(t_grid.size()), [&](int i) {
    const double t = t_grid[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < x_grid.size(); ++j)
      field.values(i, static_cast<Eigen::Index>(j)) = fn(t, x_grid[j]);
  });
  field.normalize_rows();
  return field;
}

// ---------------------------------------------------------------------------
// Grid construction
// ---------------------------------------------------------------------------

inline std::vector<double> time_grid(int n = 400, double t_min = 1e-3, double t_max = 1.0) {
  return linspace(t_min, t_max, n);
}

/// Spatial span bracketing the prior support at every diffusion time:
/// component locations shrink toward 0 as t grows while the kernel standard
/// deviation stays below max(1, largest prior component std).
inline std::pair<double, double> spatial_span(const Prior& prior, double k_sigma = 4.0) {
  if (dimension(prior) != 1)
    throw unsupported_operation("spatial_span requires a one-dimensional prior");
  double lo = 0.0, hi = 0.0, s = 1.0;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DiscretePrior>) {
          for (const auto& a : p.atoms) {
            lo = std::min(lo, a[0]);
            hi = std::max(hi, a[0]);
          }
        } else if constexpr (std::is_same_v<T, GaussianPrior>) {
          lo = std::min(lo, p.mean[0]);
          hi = std::max(hi, p.mean[0]);
          s = std::max(s, std::sqrt(p.cov(0, 0)));
        } else {
          for (std::size_t i = 0; i < p.means.size(); ++i) {
            lo = std::min(lo, p.means[i][0]);
            hi = std::max(hi, p.means[i][0]);
            s = std::max(s, std::sqrt(p.covs[i](0, 0)));
          }
        }
      },
      prior);
  return {lo - k_sigma * s, hi + k_sigma * s};
}

inline std::vector<double> spatial_grid(const Prior& prior, int n = 600,
                                        double k_sigma = 4.0) {
  auto [lo, hi] = spatial_span(prior, k_sigma);
  return linspace(lo, hi, n);
}

// ---------------------------------------------------------------------------
// Serialization: line 1 = t grid, line 2 = x grid, then one row per time.
// ---------------------------------------------------------------------------

inline void save_field(const DensityField& field, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.precision(17);
  auto write_row = [&out](const double* v, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j) out << ',';
      out << v[j];
    }
    out << '\n';
  };
  write_row(field.t_grid.data(), field.t_grid.size());
  write_row(field.x_grid.data(), field.x_grid.size());
  std::vector<double> row(field.x_grid.size());
  for (int i = 0; i < field.n_t(); ++i) {
    for (int j = 0; j < field.n_x(); ++j) row[static_cast<std::size_t>(j)] = field.values(i, j);
    write_row(row.data(), row.size());
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline DensityField load_field(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  auto parse_row = [&path](const std::string& line) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      // strtod instead of stod: subnormal densities in far tails must not
      // raise out_of_range
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str())
        throw std::runtime_error("non-numeric token in field file: " + path);
      row.push_back(v);
    }
    return row;
  };
  std::string line;
  DensityField field;
  if (!std::getline(in, line)) throw std::runtime_error("truncated field file: " + path);
  field.t_grid = parse_row(line);
  if (!std::getline(in, line)) throw std::runtime_error("truncated field file: " + path);
  field.x_grid = parse_row(line);
  field.values.resize(static_cast<Eigen::Index>(field.t_grid.size()),
                      static_cast<Eigen::Index>(field.x_grid.size()));
  for (int i = 0; i < field.n_t(); ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated field file: " + path);
    auto row = parse_row(line);
    if (row.size() != field.x_grid.size())
      throw std::runtime_error("row width mismatch in field file: " + path);
    for (int j = 0; j < field.n_x(); ++j) field.values(i, j) = row[static_cast<std::size_t>(j)];
  }
  field.flagged.assign(field.t_grid.size(), 0);
  return field;
}

}  // namespace difflens
