#include <catch_amalgamated.hpp>

#include "difflens/prior.hpp"
#include "difflens/targets.hpp"
#include "oracles.hpp"

using namespace difflens;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }
const NoiseSchedule kSched;

// t with alpha_bar(t) = a for the default schedule.
double time_for_alpha(double a) {
  const double c = -std::log(a);
  const double half = 0.5 * (20.0 - 0.1);
  return (-0.1 + std::sqrt(0.01 + 4.0 * half * c)) / (2.0 * half);
}

double quad_denoiser_moment(const Prior& prior, double t, double xt, int power) {
  const double a = kSched.alpha_bar(t);
  auto kernel = [&](double x0) {
    return oracles::normal_pdf(xt, std::sqrt(a) * x0, 1.0 - a) *
           prior_density(prior, v1(x0));
  };
  const double z = oracles::quad(kernel, 0.0, 14.0);
  auto weighted = [&](double x0) { return std::pow(x0, power) * kernel(x0); };
  return oracles::quad(weighted, 0.0, 14.0) / z;
}

}  // namespace

TEST_CASE("prior density point values") {
  CHECK(prior_density(make_prior("narrow"), v1(0.6)) ==
        Catch::Approx(0.5642).margin(1e-4));
  CHECK(prior_density(make_prior("bi_asym"), v1(-1.7)) ==
        Catch::Approx(0.2992).margin(1e-4));
  CHECK_THROWS_AS(prior_density(make_prior("tri_equal"), v1(0.0)),
                  unsupported_operation);
}

TEST_CASE("continuous prior densities integrate to one") {
  for (const char* name : {"narrow", "wide", "gmm_tri_equal", "bi_asym"}) {
    Prior p = make_prior(name);
    const double mass =
        oracles::quad([&](double x) { return prior_density(p, v1(x)); }, 0.0, 16.0, 8001);
    CHECK(mass == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("prior validation rejects bad inputs") {
  CHECK_THROWS_AS(validate(Prior(DiscretePrior::scalar({0.0, 1.0}, {0.6, 0.6}))),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate(Prior(GaussianPrior::scalar(0.0, -1.0))),
                  std::invalid_argument);
}

TEST_CASE("gaussian marginal is the conjugate normal") {
  const double t = time_for_alpha(0.25);
  REQUIRE(kSched.alpha_bar(t) == Catch::Approx(0.25).epsilon(1e-12));
  Prior p = make_prior("narrow");  // N(0.6, 0.5)
  for (double x : {-2.0, -0.3, 0.3, 1.4, 3.0}) {
    CHECK(marginal_density(p, kSched, t, v1(x)) ==
          Catch::Approx(oracles::normal_pdf(x, 0.3, 0.875)).epsilon(1e-12));
  }
}

TEST_CASE("gaussian marginal matches forward-noised Monte Carlo draws") {
  const double t = time_for_alpha(0.25);
  Prior p = make_prior("narrow");
  const int n = 1000000;
  auto draws = sample_prior(p, n, 99);
  auto rng = oracles::rng(100);
  std::normal_distribution<double> normal(0.0, 1.0);
  double sum = 0.0, sum2 = 0.0;
  for (const auto& x0 : draws) {
    const double xt = 0.5 * x0[0] + std::sqrt(0.75) * normal(rng);
    sum += xt;
    sum2 += xt * xt;
  }
  const double mean = sum / n, var = sum2 / n - mean * mean;
  CHECK(mean == Catch::Approx(0.3).margin(4 * std::sqrt(0.875 / n)));
  CHECK(var == Catch::Approx(0.875).epsilon(0.01));
}

TEST_CASE("every bundled prior diffuses to the standard normal at t = 1") {
  for (const char* name :
       {"tri_equal", "pent_asym", "wild", "narrow", "wide", "gmm_tri_equal", "bi_asym"}) {
    Prior p = make_prior(name);
    auto diff = [&](double x) {
      return std::abs(marginal_density(p, kSched, 1.0, v1(x)) -
                      oracles::normal_pdf(x, 0.0, 1.0));
    };
    const double tv = 0.5 * oracles::quad(diff, 0.0, 14.0, 4001);
    CHECK(tv <= 0.02);
  }
}

TEST_CASE("discrete marginal is the scaled-atom mixture") {
  Prior p = make_prior("tri_equal");
  const double t = 0.4;
  const double a = kSched.alpha_bar(t);
  for (double x : {-2.0, 0.0, 0.7, 2.5}) {
    double want = 0.0;
    for (double atom : {-1.8, 0.2, 2.2})
      want += oracles::normal_pdf(x, std::sqrt(a) * atom, 1.0 - a) / 3.0;
    CHECK(marginal_density(p, kSched, t, v1(x)) == Catch::Approx(want).epsilon(1e-12));
  }
  CHECK_THROWS_AS(marginal_density(p, kSched, 0.0, v1(0.0)), degenerate_error);
}

TEST_CASE("marginal scores match finite differences") {
  auto rng = oracles::rng(5);
  std::uniform_real_distribution<double> ut(1e-3, 1.0), ux(-6.0, 6.0);
  for (const char* name : {"pent_asym", "wide", "bi_asym"}) {
    Prior p = make_prior(name);
    for (int k = 0; k < 40; ++k) {
      const double t = ut(rng), x = ux(rng);
      if (marginal_density(p, kSched, t, v1(x)) < 1e-12) continue;
      auto logp = [&](double u) { return marginal_log_density(p, kSched, t, v1(u)); };
      const double fd = oracles::central_diff5(logp, x, 1e-5 * 12.0);
      CHECK(oracles::rel_err(marginal_score(p, kSched, t, v1(x))[0], fd) < 1e-5);
    }
  }
}

TEST_CASE("symmetric mixture has zero score at the midpoint") {
  Prior p = GmmPrior::scalar({0.5, 0.5}, {-1.3, 1.3}, {0.4, 0.4});
  CHECK(std::abs(marginal_score(p, kSched, 0.37, v1(0.0))[0]) < 1e-13);
}

TEST_CASE("gaussian prior score closed form") {
  Prior p = make_prior("wide");  // N(1.5, 2.0)
  const double t = 0.52;
  const double a = kSched.alpha_bar(t);
  const double var = a * 2.0 + (1.0 - a);
  for (double x : {-1.0, 0.5, 2.7}) {
    const double want = -(x - std::sqrt(a) * 1.5) / var;
    CHECK(marginal_score(p, kSched, t, v1(x))[0] == Catch::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("scores stay finite over the whole working box") {
  for (const char* name : {"tri_equal", "wild", "bi_asym", "narrow"}) {
    Prior p = make_prior(name);
    for (double t : {1e-3, 0.05, 0.4, 1.0}) {
      for (double x = -10.0; x <= 10.0; x += 2.5) {
        CHECK(std::isfinite(marginal_log_density(p, kSched, t, v1(x))));
        CHECK(std::isfinite(marginal_score(p, kSched, t, v1(x))[0]));
      }
    }
  }
}

TEST_CASE("discrete denoiser collapses to the nearest atom as t -> 0") {
  Prior p = make_prior("tri_equal");
  const double t = 2e-3;
  const double a = kSched.alpha_bar(t);
  auto dm = denoiser_moments(p, kSched, t, v1(std::sqrt(a) * 2.2));
  CHECK(dm.mean[0] == Catch::Approx(2.2).margin(1e-8));
  CHECK(dm.cov(0, 0) == Catch::Approx(0.0).margin(1e-6));
}

TEST_CASE("denoiser mean approaches the prior mean at large t") {
  Prior p = make_prior("pent_asym");
  const double prior_mean = 0.1 * -2.7 + 0.25 * -0.7 + 0.3 * 0.3 + 0.25 * 1.3 + 0.1 * 3.3;
  // the responsibilities flatten as alpha_bar -> 0; a hot schedule reaches
  // the uniform regime within t <= 1
  NoiseSchedule hot(0.1, 80.0);
  auto dm = denoiser_moments(p, hot, 1.0, v1(0.3));
  CHECK(dm.mean[0] == Catch::Approx(prior_mean).margin(1e-3));
  auto warm = denoiser_moments(p, kSched, 1.0, v1(0.3));
  CHECK(warm.mean[0] == Catch::Approx(prior_mean).margin(0.05));
}

TEST_CASE("gmm denoiser moments match quadrature") {
  Prior p = make_prior("gmm_tri_equal");
  for (double t : {0.1, 0.3, 0.7}) {
    for (double x : {-1.2, 0.0, 2.4}) {
      auto dm = denoiser_moments(p, kSched, t, v1(x));
      const double m1 = quad_denoiser_moment(p, t, x, 1);
      const double m2 = quad_denoiser_moment(p, t, x, 2);
      CHECK(std::abs(dm.mean[0] - m1) < 1e-6);
      CHECK(std::abs(dm.cov(0, 0) - (m2 - m1 * m1)) < 1e-6);
    }
  }
}

TEST_CASE("tweedie identity: moments from the score") {
  auto rng = oracles::rng(17);
  std::uniform_real_distribution<double> ut(1e-3, 1.0), ux(-6.0, 6.0);

  SECTION("gaussian prior, 200 random points, 1e-8") {
    Prior p = make_prior("narrow");
    for (int k = 0; k < 200; ++k) {
      const double t = ut(rng), x = ux(rng);
      auto direct = denoiser_moments(p, kSched, t, v1(x));
      auto via_score = tweedie_moments_from_score(
          kSched, t, v1(x), marginal_score(p, kSched, t, v1(x)),
          marginal_score_jacobian(p, kSched, t, v1(x)));
      CHECK(std::abs(direct.mean[0] - via_score.mean[0]) < 1e-8);
      CHECK(std::abs(direct.cov(0, 0) - via_score.cov(0, 0)) < 1e-8);
    }
  }

  SECTION("gmm prior, 200 random points, 1e-6") {
    Prior p = make_prior("bi_asym");
    for (int k = 0; k < 200; ++k) {
      const double t = ut(rng), x = ux(rng);
      auto direct = denoiser_moments(p, kSched, t, v1(x));
      auto via_score = tweedie_moments_from_score(
          kSched, t, v1(x), marginal_score(p, kSched, t, v1(x)),
          marginal_score_jacobian(p, kSched, t, v1(x)));
      CHECK(std::abs(direct.mean[0] - via_score.mean[0]) < 1e-6);
      CHECK(std::abs(direct.cov(0, 0) - via_score.cov(0, 0)) < 1e-6);
    }
  }

  SECTION("zero-noise identity at t = 0") {
    auto dm = tweedie_moments_from_score(kSched, 0.0, v1(1.7), v1(0.0), Mat::Zero(1, 1));
    CHECK(dm.mean[0] == 1.7);
    CHECK(dm.cov(0, 0) == 0.0);
  }
}

TEST_CASE("denoiser covariance equals the scaled mean jacobian") {
  for (const char* name : {"tri_equal", "narrow", "bi_asym"}) {
    Prior p = make_prior(name);
    for (double t : {0.1, 0.5}) {
      const double a = kSched.alpha_bar(t);
      for (double x : {-0.8, 0.9}) {
        auto mean_at = [&](double u) {
          return denoiser_moments(p, kSched, t, v1(u)).mean[0];
        };
        const double jac = oracles::central_diff5(mean_at, x, 1e-4);
        const double want = (1.0 - a) / std::sqrt(a) * jac;
        CHECK(std::abs(denoiser_moments(p, kSched, t, v1(x)).cov(0, 0) - want) < 1e-6);
      }
    }
  }
}

TEST_CASE("prior sampling is seeded and statistically sound") {
  Prior d = make_prior("tri_equal");
  auto a = sample_prior(d, 1000, 7);
  auto b = sample_prior(d, 1000, 7);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i][0] == b[i][0]);

  const int n = 100000;
  auto draws = sample_prior(d, n, 8);
  int hits = 0;
  for (const auto& x : draws) hits += (x[0] == 2.2);
  const double p_hat = static_cast<double>(hits) / n;
  CHECK(p_hat == Catch::Approx(1.0 / 3).margin(4 * std::sqrt((1.0 / 3) * (2.0 / 3) / n)));

  Prior g = make_prior("narrow");
  auto gdraws = sample_prior(g, 1000000, 9);
  double mean = 0.0;
  for (const auto& x : gdraws) mean += x[0];
  mean /= 1e6;
  CHECK(mean == Catch::Approx(0.6).margin(0.003));
}

TEST_CASE("scalar slice agrees with the generic path") {
  for (const char* name : {"pent_asym", "wide", "bi_asym"}) {
    Prior p = make_prior(name);
    for (double t : {1e-3, 0.2, 0.9}) {
      auto slice = make_scalar_slice(p, kSched, t);
      for (double x : {-4.0, -0.5, 1.1, 5.0}) {
        CHECK(slice.marginal_log_density(x) ==
              Catch::Approx(marginal_log_density(p, kSched, t, v1(x))).margin(1e-11));
        CHECK(slice.marginal_score(x) ==
              Catch::Approx(marginal_score(p, kSched, t, v1(x))[0]).margin(1e-9));
        CHECK(slice.marginal_score_jacobian(x) ==
              Catch::Approx(marginal_score_jacobian(p, kSched, t, v1(x))(0, 0))
                  .margin(1e-8));
        double m, c;
        slice.denoiser_moments(x, m, c);
        auto dm = denoiser_moments(p, kSched, t, v1(x));
        CHECK(m == Catch::Approx(dm.mean[0]).margin(1e-10));
        CHECK(c == Catch::Approx(dm.cov(0, 0)).margin(1e-10));
      }
    }
  }
}
