#include <catch_amalgamated.hpp>

#include "difflens/analytic.hpp"
#include "difflens/fsr.hpp"
#include "difflens/metrics.hpp"
#include "difflens/targets.hpp"
#include "oracles.hpp"

using namespace difflens;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }
const NoiseSchedule kSched;

std::vector<Vec> to_dataset(const std::vector<double>& xs) {
  std::vector<Vec> out;
  for (double x : xs) out.push_back(v1(x));
  return out;
}

FsrModel tri_model(double sigma = 0.3, double y = 2.2) {
  return FsrModel(to_dataset({-1.8, 0.2, 2.2}), kSched,
                  MeasurementModel(make_operator("identity"), sigma), v1(y));
}

}  // namespace

TEST_CASE("kernel weights: limits and symmetry") {
  auto m = tri_model();

  SECTION("weights sum to one") {
    Vec w = m.weights(0.37, v1(0.7));
    CHECK(std::abs(w.sum() - 1.0) < 1e-12);
    CHECK(w.minCoeff() >= 0.0);
  }

  SECTION("uniform at large t under a hot schedule") {
    FsrModel hot(to_dataset({-1.8, 0.2, 2.2}), NoiseSchedule(0.1, 80.0),
                 MeasurementModel(make_operator("identity"), 0.3), v1(2.2));
    Vec w = hot.weights(1.0, v1(0.4));
    for (int i = 0; i < 3; ++i) CHECK(w[i] == Catch::Approx(1.0 / 3).margin(1e-6));
  }

  SECTION("collapses onto the tracked atom as t -> 0") {
    const double t = 2e-3;
    const double a = kSched.alpha_bar(t);
    Vec w = m.weights(t, v1(std::sqrt(a) * 2.2));
    CHECK(w[2] > 1.0 - 1e-12);
  }

  SECTION("two symmetric atoms split evenly at the midpoint") {
    FsrModel pair(to_dataset({-1.0, 1.0}), kSched,
                  MeasurementModel(make_operator("identity"), 0.3), v1(0.0));
    Vec w = pair.weights(0.41, v1(0.0));
    CHECK(w[0] == Catch::Approx(0.5).margin(1e-14));
    CHECK(w[1] == Catch::Approx(0.5).margin(1e-14));
  }

  SECTION("degenerate at t = 0") {
    CHECK_THROWS_AS(m.weights(0.0, v1(0.0)), degenerate_error);
  }
}

TEST_CASE("weight gradients") {
  auto m = tri_model();

  SECTION("sum to zero") {
    auto grads = m.weight_gradients(0.3, v1(0.9));
    double total = 0.0;
    for (const auto& g : grads) total += g[0];
    CHECK(std::abs(total) < 1e-14);
  }

  SECTION("match finite differences on random points") {
    auto rng = oracles::rng(31);
    std::uniform_real_distribution<double> ut(0.01, 1.0), ux(-4.0, 4.0);
    for (int k = 0; k < 100; ++k) {
      const double t = ut(rng), x = ux(rng);
      auto grads = m.weight_gradients(t, v1(x));
      for (int i = 0; i < m.size(); ++i) {
        auto wi = [&](double u) { return m.weights(t, v1(u))[i]; };
        const double fd = oracles::central_diff5(wi, x, 1e-5);
        CHECK(std::abs(grads[static_cast<std::size_t>(i)][0] - fd) < 1e-6);
      }
    }
  }

  SECTION("uniform regime gradient points from the mean to the atom") {
    FsrModel hot(to_dataset({-1.8, 0.2, 2.2}), NoiseSchedule(0.1, 80.0),
                 MeasurementModel(make_operator("identity"), 0.3), v1(2.2));
    const double t = 1.0;
    const double a = NoiseSchedule(0.1, 80.0).alpha_bar(t);
    auto grads = hot.weight_gradients(t, v1(0.5));
    const double mean = (-1.8 + 0.2 + 2.2) / 3.0;
    for (int i = 0; i < 3; ++i) {
      const double atom = hot.dataset()[static_cast<std::size_t>(i)][0];
      const double want = std::sqrt(a) / (1.0 - a) * (1.0 / 3) * (atom - mean);
      CHECK(grads[static_cast<std::size_t>(i)][0] ==
            Catch::Approx(want).epsilon(1e-4).margin(1e-12));
    }
  }
}

TEST_CASE("finite-sample marginal and denoiser") {
  SECTION("single atom: one gaussian, zero denoiser spread") {
    FsrModel one(to_dataset({1.3}), kSched,
                 MeasurementModel(make_operator("identity"), 0.3), v1(1.3));
    const double t = 0.5;
    const double a = kSched.alpha_bar(t);
    CHECK(one.marginal_density(t, v1(0.2)) ==
          Catch::Approx(oracles::normal_pdf(0.2, std::sqrt(a) * 1.3, 1 - a)).epsilon(1e-12));
    auto dm = one.denoiser_moments(t, v1(0.2));
    CHECK(dm.mean[0] == 1.3);
    CHECK(dm.cov(0, 0) == 0.0);
  }

  SECTION("moments are consistent with the score through the Tweedie map") {
    auto m = tri_model();
    Prior as_prior = DiscretePrior::empirical(to_dataset({-1.8, 0.2, 2.2}));
    for (double t : {0.1, 0.4, 0.9}) {
      for (double x : {-1.0, 0.5, 2.0}) {
        auto via_score = tweedie_moments_from_score(
            kSched, t, v1(x), m.marginal_score(t, v1(x)),
            marginal_score_jacobian(as_prior, kSched, t, v1(x)));
        auto direct = m.denoiser_moments(t, v1(x));
        CHECK(std::abs(via_score.mean[0] - direct.mean[0]) < 1e-9);
        CHECK(std::abs(via_score.cov(0, 0) - direct.cov(0, 0)) < 1e-9);
      }
    }
  }

  SECTION("marginal score matches finite differences") {
    auto m = tri_model();
    for (double t : {0.05, 0.5}) {
      for (double x : {-2.0, 0.1, 1.9}) {
        auto logp = [&](double u) { return m.marginal_log_density(t, v1(u)); };
        const double fd = oracles::central_diff5(logp, x, 1e-5);
        CHECK(oracles::rel_err(m.marginal_score(t, v1(x))[0], fd) < 1e-5);
      }
    }
  }
}

TEST_CASE("finite-sample likelihood") {
  auto m = tri_model(0.3, 2.2);

  SECTION("equals the finite-sum oracle exactly") {
    const double t = 0.33;
    for (double x : {-1.5, 0.4, 2.0}) {
      Vec w = m.weights(t, v1(x));
      double want = 0.0;
      for (int i = 0; i < m.size(); ++i)
        want += w[i] *
                oracles::normal_pdf(2.2, m.dataset()[static_cast<std::size_t>(i)][0], 0.09);
      CHECK(m.likelihood(t, v1(x)) == Catch::Approx(want).epsilon(1e-12));
    }
  }

  SECTION("single atom: constant in x_t") {
    FsrModel one(to_dataset({1.3}), kSched,
                 MeasurementModel(make_operator("identity"), 0.3), v1(0.9));
    CHECK(one.likelihood(0.4, v1(-3.0)) ==
          Catch::Approx(oracles::normal_pdf(0.9, 1.3, 0.09)).epsilon(1e-12));
    CHECK(one.likelihood(0.4, v1(3.0)) ==
          Catch::Approx(one.likelihood(0.4, v1(-3.0))).epsilon(1e-12));
  }

  SECTION("uniform-weight regime: flat in x_t") {
    FsrModel hot(to_dataset({-1.8, 0.2, 2.2}), NoiseSchedule(0.1, 80.0),
                 MeasurementModel(make_operator("identity"), 0.3), v1(2.2));
    const double base = hot.likelihood(1.0, v1(0.0));
    for (double x : {-2.0, 1.0, 2.0})
      CHECK(oracles::rel_err(hot.likelihood(1.0, v1(x)), base) < 1e-6);
  }
}

TEST_CASE("finite-sample posterior") {
  SECTION("equals the discrete-prior conditional path to 1e-12") {
    // same atoms, two derivations
    const std::vector<double> xs = {-1.8, 0.2, 2.2};
    auto m = tri_model(0.3, 2.2);
    ConditionalProblem cp{DiscretePrior::empirical(to_dataset(xs)),
                          MeasurementModel(make_operator("identity"), 0.3), v1(2.2),
                          kSched};
    for (double t : {0.02, 0.3, 0.95}) {
      for (double x = -5.0; x <= 5.0; x += 0.5) {
        const double a = m.posterior_density(t, v1(x));
        const double b = analytic_posterior_density(cp, t, v1(x));
        CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)));
      }
    }
  }

  SECTION("huge measurement noise recovers the unconditional marginal") {
    FsrModel flat(to_dataset({-1.8, 0.2, 2.2}), kSched,
                  MeasurementModel(make_operator("identity"), 1e6), v1(0.3));
    for (double x : {-2.0, 0.0, 2.0})
      CHECK(oracles::rel_err(flat.posterior_density(0.4, v1(x)),
                             flat.marginal_density(0.4, v1(x))) < 1e-9);
  }

  SECTION("informative measurement concentrates mass on one branch") {
    auto m = tri_model(0.3, 2.2);
    // brute-force Bayes over the atoms: evidence weight of the 2.2 branch
    double z = 0.0;
    std::vector<double> bayes;
    for (double atom : {-1.8, 0.2, 2.2}) {
      const double li = std::exp(-0.5 * (2.2 - atom) * (2.2 - atom) / 0.09);
      bayes.push_back(li);
      z += li;
    }
    CHECK(bayes[2] / z > 0.999);
    CHECK(std::exp(m.log_evidence()[2] - log_sum_exp(m.log_evidence())) ==
          Catch::Approx(bayes[2] / z).epsilon(1e-12));
    // at small t the branches separate spatially: the tracked branch holds
    // the same share of the row mass
    const double t = 0.05;
    const double a = kSched.alpha_bar(t);
    auto x_grid = linspace(-6.0, 6.5, 2000);
    std::vector<double> row(x_grid.size());
    for (std::size_t j = 0; j < x_grid.size(); ++j)
      row[j] = m.posterior_density(t, v1(x_grid[j]));
    const double cut = std::sqrt(a) * 1.2;  // midpoint of the top two branches
    std::vector<double> masked(row);
    for (std::size_t j = 0; j < x_grid.size(); ++j)
      if (x_grid[j] < cut) masked[j] = 0.0;
    CHECK(trapezoid(x_grid, masked) / trapezoid(x_grid, row) > 0.999);
  }

  SECTION("posterior score matches finite differences and the conditional path") {
    auto m = tri_model(0.3, 2.2);
    ConditionalProblem cp{DiscretePrior::empirical(to_dataset({-1.8, 0.2, 2.2})),
                          MeasurementModel(make_operator("identity"), 0.3), v1(2.2),
                          kSched};
    for (double t : {0.1, 0.6}) {
      for (double x : {-1.0, 0.8, 2.1}) {
        auto logp = [&](double u) { return m.posterior_log_density(t, v1(u)); };
        const double fd = oracles::central_diff5(logp, x, 1e-5);
        CHECK(oracles::rel_err(m.posterior_score(t, v1(x))[0], fd) < 1e-5);
        CHECK(m.posterior_score(t, v1(x))[0] ==
              Catch::Approx(analytic_posterior_score(cp, t, v1(x))[0]).margin(1e-10));
      }
    }
  }
}

TEST_CASE("large datasets track the analytic marginal closely") {
  Prior prior = make_prior("narrow");
  auto dataset = sample_prior(prior, 4096, 21);
  FsrModel m(dataset, kSched, MeasurementModel(make_operator("identity"), 0.3), v1(0.5));
  const double t = 0.3;
  auto x_grid = spatial_grid(prior, 600);
  std::vector<double> fsr_row(x_grid.size()), ref_row(x_grid.size());
  for (std::size_t j = 0; j < x_grid.size(); ++j) {
    fsr_row[j] = m.marginal_density(t, v1(x_grid[j]));
    ref_row[j] = marginal_density(prior, kSched, t, v1(x_grid[j]));
  }
  CHECK(tv_distance(fsr_row, ref_row, x_grid) <= 0.05);
}

TEST_CASE("posterior field rows are normalized and finite") {
  Prior prior = make_prior("bi_asym");
  auto dataset = sample_prior(prior, 512, 5);
  FsrModel m(dataset, kSched, MeasurementModel(make_operator("identity"), 0.2), v1(-1.7));
  auto t_grid = time_grid(40);
  auto x_grid = spatial_grid(prior, 300);
  DensityField field = m.posterior_field(t_grid, x_grid);
  CHECK(field.values.allFinite());
  for (int i = 0; i < field.n_t(); ++i)
    CHECK(field.row_integral(i) == Catch::Approx(1.0).margin(1e-9));
  // field values agree with the pointwise evaluator
  CHECK(field.values(7, 123) ==
        Catch::Approx(m.posterior_density(t_grid[7], v1(x_grid[123])) /
                      field.row_integral(7))
            .epsilon(1e-9));
}

TEST_CASE("ancestral posterior samples reproduce the density") {
  auto m = tri_model(0.3, 2.2);
  const double t = 0.3;

  SECTION("deterministic per seed") {
    auto a = m.posterior_sample(t, 100, 3);
    auto b = m.posterior_sample(t, 100, 3);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i][0] == b[i][0]);
  }

  SECTION("histogram of a million draws is close in TV") {
    auto draws = m.posterior_sample(t, 1000000, 77);
    auto x_grid = linspace(-6.0, 6.5, 600);
    const double dx = x_grid[1] - x_grid[0];
    std::vector<double> hist(x_grid.size(), 0.0);
    for (const auto& s : draws) {
      const int bin =
          static_cast<int>(std::floor((s[0] - (x_grid.front() - 0.5 * dx)) / dx));
      if (bin >= 0 && bin < static_cast<int>(hist.size()))
        hist[static_cast<std::size_t>(bin)] += 1.0;
    }
    for (auto& h : hist) h /= draws.size() * dx;
    std::vector<double> dens(x_grid.size());
    for (std::size_t j = 0; j < x_grid.size(); ++j)
      dens[j] = m.posterior_density(t, v1(x_grid[j]));
    CHECK(tv_distance(hist, dens, x_grid) <= 0.01);
  }

  SECTION("one dominating atom gives a unimodal cloud around it") {
    const double a = kSched.alpha_bar(t);
    auto draws = m.posterior_sample(t, 20000, 11);
    double mean = 0.0;
    for (const auto& s : draws) mean += s[0];
    mean /= static_cast<double>(draws.size());
    CHECK(mean == Catch::Approx(std::sqrt(a) * 2.2).margin(0.05));
  }
}

TEST_CASE("degenerate evidence is reported with the max log weight") {
  auto dataset = to_dataset({0.0, 0.1, -0.1});
  FsrModel m(dataset, kSched, MeasurementModel(make_operator("identity"), 0.1), v1(500.0));
  CHECK_THROWS_AS(m.posterior_density(0.3, v1(0.0)), degenerate_evidence_error);
  try {
    m.posterior_sample(0.3, 10, 1);
    FAIL("expected degenerate_evidence_error");
  } catch (const degenerate_evidence_error& e) {
    CHECK(e.max_log_weight < -708.0);
    CHECK(std::string(e.what()).find("underflow") != std::string::npos);
  }
  // weights and marginals are still usable
  CHECK(std::isfinite(m.marginal_density(0.3, v1(0.0))));
}
