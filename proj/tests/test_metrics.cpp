#include <catch_amalgamated.hpp>

#include "difflens/metrics.hpp"
#include "oracles.hpp"

using namespace difflens;

namespace {
std::vector<double> gaussian_row(const std::vector<double>& grid, double mean, double var) {
  std::vector<double> row(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j)
    row[j] = oracles::normal_pdf(grid[j], mean, var);
  return row;
}
}  // namespace

TEST_CASE("tv distance basics") {
  auto grid = linspace(-8.0, 8.0, 2001);
  auto p = gaussian_row(grid, 0.0, 1.0);

  SECTION("identical densities") { CHECK(tv_distance(p, p, grid) == 0.0); }

  SECTION("disjoint unit boxes") {
    std::vector<double> a(grid.size(), 0.0), b(grid.size(), 0.0);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      if (grid[j] > -6.0 && grid[j] < -5.0) a[j] = 1.0;
      if (grid[j] > 5.0 && grid[j] < 6.0) b[j] = 1.0;
    }
    CHECK(tv_distance(a, b, grid) == Catch::Approx(1.0).margin(1e-2));
  }

  SECTION("shifted gaussians against the closed form") {
    auto q = gaussian_row(grid, 0.5, 1.0);
    CHECK(tv_distance(p, q, grid) ==
          Catch::Approx(oracles::gaussian_tv_equal_var(0.0, 0.5, 1.0)).margin(1e-6));
    CHECK(oracles::gaussian_tv_equal_var(0.0, 0.5, 1.0) ==
          Catch::Approx(0.1974).margin(2e-4));
  }

  SECTION("invariant under rescaling of either argument") {
    auto q = gaussian_row(grid, 0.7, 0.6);
    const double base = tv_distance(p, q, grid);
    auto q3 = q;
    for (auto& v : q3) v *= 3.7;
    CHECK(tv_distance(p, q3, grid) == Catch::Approx(base).epsilon(1e-12));
  }

  SECTION("grid mismatch is an error") {
    auto small = linspace(-8.0, 8.0, 100);
    CHECK_THROWS_AS(tv_distance(p, p, small), std::invalid_argument);
  }
}

TEST_CASE("tv satisfies the triangle inequality on random mixtures") {
  auto grid = linspace(-8.0, 8.0, 801);
  auto rng = oracles::rng(55);
  std::uniform_real_distribution<double> um(-3.0, 3.0), uv(0.2, 2.0), uw(0.0, 1.0);
  auto random_density = [&]() {
    const double w = uw(rng);
    auto a = gaussian_row(grid, um(rng), uv(rng));
    auto b = gaussian_row(grid, um(rng), uv(rng));
    std::vector<double> mix(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) mix[j] = w * a[j] + (1 - w) * b[j];
    return mix;
  };
  for (int k = 0; k < 100; ++k) {
    auto p = random_density(), q = random_density(), r = random_density();
    CHECK(tv_distance(p, r, grid) <=
          tv_distance(p, q, grid) + tv_distance(q, r, grid) + 1e-12);
  }
}

TEST_CASE("ensemble density") {
  auto grid = linspace(-5.0, 5.0, 600);

  SECTION("a million unit-normal draws land within TV 0.01") {
    SampleEnsemble e;
    e.times = {0.5};
    e.states.emplace_back(1000000, 1);
    auto rng = oracles::rng(60);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int k = 0; k < 1000000; ++k) e.states[0](k, 0) = normal(rng);
    e.diverged.assign(1000000, 0);
    DensityField f = ensemble_density(e, grid, false);
    CHECK(tv_distance(field_row(f, 0), gaussian_row(grid, 0.0, 1.0), grid) <= 0.01);
  }

  SECTION("constant ensemble is a single spike") {
    SampleEnsemble e;
    e.times = {0.5};
    e.states.emplace_back(Mat::Constant(500, 1, 1.25));
    e.diverged.assign(500, 0);
    DensityField f = ensemble_density(e, grid, false);
    int nonzero = 0;
    for (int j = 0; j < f.n_x(); ++j) nonzero += f.values(0, j) > 0.0;
    CHECK(nonzero == 1);
    CHECK(f.row_integral(0) == Catch::Approx(1.0).margin(1e-9));
  }

  SECTION("smoothing preserves row mass") {
    SampleEnsemble e;
    e.times = {0.5};
    e.states.emplace_back(2000, 1);
    auto rng = oracles::rng(61);
    std::normal_distribution<double> normal(0.5, 0.8);
    for (int k = 0; k < 2000; ++k) e.states[0](k, 0) = normal(rng);
    e.diverged.assign(2000, 0);
    DensityField f = ensemble_density(e, grid, true);
    CHECK(f.row_integral(0) == Catch::Approx(1.0).margin(1e-6));
  }

  SECTION("off-grid ensembles flag the row and read as TV 1") {
    SampleEnsemble e;
    e.times = {0.5};
    e.states.emplace_back(Mat::Constant(500, 1, 100.0));
    e.diverged.assign(500, 0);
    DensityField f = ensemble_density(e, grid, false);
    CHECK(f.flagged[0] == 1);
    CHECK(tv_distance(field_row(f, 0), gaussian_row(grid, 0.0, 1.0), grid) == 1.0);
  }

  SECTION("too few trajectories rejected") {
    SampleEnsemble e;
    e.times = {0.5};
    e.states.emplace_back(Mat::Zero(50, 1));
    e.diverged.assign(50, 0);
    CHECK_THROWS_AS(ensemble_density(e, grid, false), std::invalid_argument);
  }
}

TEST_CASE("mc rate fit") {
  SECTION("exact inverse square root data") {
    std::vector<std::pair<double, double>> pts;
    for (double n : {16.0, 64.0, 256.0, 1024.0, 4096.0}) pts.push_back({n, 3.1 / std::sqrt(n)});
    auto fit = mc_rate_fit(pts);
    CHECK(fit.slope == Catch::Approx(-0.5).margin(1e-10));
    CHECK(std::exp(fit.intercept) == Catch::Approx(3.1).epsilon(1e-10));
    CHECK(fit.points_used == 5);
  }

  SECTION("constant data has zero slope") {
    std::vector<std::pair<double, double>> pts = {{16, 0.2}, {64, 0.2}, {256, 0.2}, {1024, 0.2}};
    CHECK(mc_rate_fit(pts).slope == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("nonpositive values are dropped") {
    std::vector<std::pair<double, double>> pts = {
        {16, 0.5}, {64, 0.25}, {256, 0.125}, {1024, 0.0}};
    auto fit = mc_rate_fit(pts);
    CHECK(fit.points_used == 3);
    CHECK(fit.slope == Catch::Approx(-0.5).margin(1e-10));
  }
}
