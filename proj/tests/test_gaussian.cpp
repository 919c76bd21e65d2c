#include <catch_amalgamated.hpp>

#include "difflens/gaussian.hpp"
#include "oracles.hpp"

using namespace difflens;

namespace {

GaussianMixture test_mixture() {
  Vec w(3);
  w << 0.2, 0.5, 0.3;
  std::vector<Gaussian> comps;
  comps.emplace_back(Vec::Constant(1, -1.5), Mat::Constant(1, 1, 0.3));
  comps.emplace_back(Vec::Constant(1, 0.4), Mat::Constant(1, 1, 0.8));
  comps.emplace_back(Vec::Constant(1, 2.0), Mat::Constant(1, 1, 0.2));
  return GaussianMixture(w, std::move(comps));
}

}  // namespace

TEST_CASE("gaussian log density matches the scalar formula") {
  Gaussian g(Vec::Constant(1, 0.6), Mat::Constant(1, 1, 0.5));
  CHECK(g.density(Vec::Constant(1, 0.6)) ==
        Catch::Approx(1.0 / std::sqrt(2 * M_PI * 0.5)).epsilon(1e-12));
  CHECK(g.log_density(Vec::Constant(1, 2.0)) ==
        Catch::Approx(std::log(oracles::normal_pdf(2.0, 0.6, 0.5))).epsilon(1e-12));
}

TEST_CASE("2-d gaussian density and score") {
  Vec m(2);
  m << 1.0, -0.5;
  Mat c(2, 2);
  c << 1.2, 0.3, 0.3, 0.7;
  Gaussian g(m, c);
  Vec x(2);
  x << 0.2, 0.9;
  const double quad_form = (x - m).transpose() * c.inverse() * (x - m);
  const double expected =
      std::exp(-0.5 * quad_form) / (2 * M_PI * std::sqrt(c.determinant()));
  CHECK(g.density(x) == Catch::Approx(expected).epsilon(1e-12));
  Vec score = g.score(x);
  Vec want = -c.inverse() * (x - m);
  CHECK((score - want).norm() < 1e-12);
}

TEST_CASE("mixture density integrates to one") {
  auto mix = test_mixture();
  const double mass = oracles::quad(
      [&](double x) { return mix.density(Vec::Constant(1, x)); }, 0.0, 12.0, 4001);
  CHECK(mass == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("mixture score and hessian match finite differences") {
  auto mix = test_mixture();
  auto logp = [&](double x) { return mix.log_density(Vec::Constant(1, x)); };
  for (double x : {-2.3, -0.7, 0.1, 1.4, 2.8}) {
    const double fd = oracles::central_diff5(logp, x, 1e-4);
    CHECK(oracles::rel_err(mix.score(Vec::Constant(1, x))[0], fd) < 1e-8);
    const double fd2 = oracles::second_diff(logp, x, 2e-4);
    CHECK(oracles::rel_err(mix.score_jacobian(Vec::Constant(1, x))(0, 0), fd2) < 1e-5);
  }
}

TEST_CASE("mixture responsibilities stay finite in the far tail") {
  auto mix = test_mixture();
  Vec r = mix.responsibilities(Vec::Constant(1, 40.0));
  CHECK(r.allFinite());
  CHECK(r.sum() == Catch::Approx(1.0).margin(1e-12));
  CHECK(std::isfinite(mix.score(Vec::Constant(1, 40.0))[0]));
}

TEST_CASE("mixture moments match quadrature") {
  auto mix = test_mixture();
  auto [mean, cov] = mix.moments();
  const double m1 = oracles::quad(
      [&](double x) { return x * mix.density(Vec::Constant(1, x)); }, 0.0, 12.0, 4001);
  const double m2 = oracles::quad(
      [&](double x) { return x * x * mix.density(Vec::Constant(1, x)); }, 0.0, 12.0,
      4001);
  CHECK(mean[0] == Catch::Approx(m1).margin(1e-9));
  CHECK(cov(0, 0) == Catch::Approx(m2 - m1 * m1).margin(1e-8));
}

TEST_CASE("scalar mixture agrees with the generic mixture") {
  auto mix = test_mixture();
  ScalarMixture s;
  s.log_w = {std::log(0.2), std::log(0.5), std::log(0.3)};
  s.mu = {-1.5, 0.4, 2.0};
  s.var = {0.3, 0.8, 0.2};
  for (double x : {-3.0, -1.0, 0.0, 0.5, 2.5, 7.0}) {
    CHECK(s.log_density(x) ==
          Catch::Approx(mix.log_density(Vec::Constant(1, x))).epsilon(1e-13));
    CHECK(s.score(x) == Catch::Approx(mix.score(Vec::Constant(1, x))[0]).epsilon(1e-12));
  }
}

TEST_CASE("mixture rejects malformed weights") {
  Vec w(2);
  w << 0.7, 0.7;
  std::vector<Gaussian> comps;
  comps.emplace_back(Vec::Zero(1), Mat::Identity(1, 1));
  comps.emplace_back(Vec::Ones(1), Mat::Identity(1, 1));
  CHECK_THROWS_AS(GaussianMixture(w, std::move(comps)), std::invalid_argument);
}
