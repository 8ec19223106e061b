#include "shiftel/divergence.hpp"
#include "shiftel/error.hpp"
#include "shiftel/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace shiftel;

namespace {

const DivergenceId kCatalogue[] = { DivergenceId::KL,
                                    DivergenceId::ReverseKL,
                                    DivergenceId::PearsonChi2,
                                    DivergenceId::SquaredHellinger };

} // namespace

TEST_CASE("loss pairs satisfy l1' = r l2'")
{
  for (DivergenceId id : kCatalogue) {
    const auto spec = DivergenceSpec::make(id);
    const auto& lp = spec.loss_pair();
    for (double r : { 0.05, 0.3, 1.0, 2.5, 17.0 }) {
      CAPTURE(spec.name());
      CAPTURE(r);
      CHECK(lp.ell1_deriv(r) == doctest::Approx(r * lp.ell2_deriv(r)));
      // derivatives against central differences
      const double h = 1e-6 * r;
      CHECK(lp.ell1_deriv(r) ==
            doctest::Approx((lp.ell1(r + h) - lp.ell1(r - h)) / (2 * h)).epsilon(1e-6));
      CHECK(lp.ell2_deriv2(r) ==
            doctest::Approx((lp.ell2_deriv(r + h) - lp.ell2_deriv(r - h)) / (2 * h))
              .epsilon(1e-6));
    }
  }
}

TEST_CASE("linked losses differentiate through the link")
{
  for (DivergenceId id : kCatalogue) {
    const auto spec = DivergenceSpec::make(id);
    for (double o : { -1.3, 0.2, 0.9 }) {
      const double h = 1e-6;
      const auto s = spec.source_loss(o);
      const auto t = spec.target_loss(o);
      CAPTURE(spec.name());
      CHECK(s.deriv == doctest::Approx((spec.source_loss(o + h).value -
                                        spec.source_loss(o - h).value) / (2 * h))
                         .epsilon(1e-6));
      CHECK(t.deriv2 == doctest::Approx((spec.target_loss(o + h).deriv -
                                         spec.target_loss(o - h).deriv) / (2 * h))
                          .epsilon(1e-5));
    }
  }
}

TEST_CASE("default links and domains")
{
  CHECK(DivergenceSpec::make(DivergenceId::KL).link() == Link::Exp);
  CHECK(DivergenceSpec::make(DivergenceId::PearsonChi2).link() == Link::Identity);
  CHECK(DivergenceSpec::make(DivergenceId::KL, Link::Identity).link() == Link::Identity);
  CHECK_THROWS_AS(DivergenceSpec::make(DivergenceId::KL).losses(0.0), DomainError);
  CHECK_THROWS_AS(DivergenceSpec::make(DivergenceId::ReverseKL).losses(-1.0), DomainError);
  CHECK_NOTHROW(DivergenceSpec::make(DivergenceId::PearsonChi2).losses(0.0));
  CHECK_THROWS_AS(DivergenceSpec::make(DivergenceId::SquaredHellinger).losses(1e-9),
                  DomainError);
  CHECK_THROWS_AS(divergence_from_name("tv"), ConfigError);
  CHECK(divergence_from_name("reverse-kl").id() == DivergenceId::ReverseKL);

  // identity link floors the ratio for log-type losses
  const auto kl_id = DivergenceSpec::make(DivergenceId::KL, Link::Identity);
  const auto floored = kl_id.target_loss(-0.5);
  CHECK(std::isfinite(floored.value));
  CHECK(floored.deriv == 0.0);
}

TEST_CASE("divergence at the true ratio of two Gaussians")
{
  // P = N(0,1), Q = N(mu,1), r(x) = exp(mu x - mu^2 / 2)
  constexpr double mu = 0.6;
  Rng rng(2024);
  std::normal_distribution<double> z(0.0, 1.0);
  constexpr int n = 400000;
  std::vector<double> rs(n);
  std::vector<double> rt(n);
  for (int i = 0; i < n; ++i) {
    rs[i] = std::exp(mu * z(rng) - 0.5 * mu * mu);
    rt[i] = std::exp(mu * (z(rng) + mu) - 0.5 * mu * mu);
  }
  const double kl = 0.5 * mu * mu;
  const double pearson = std::exp(mu * mu) - 1.0;
  const double hellinger = 2.0 - 2.0 * std::exp(-mu * mu / 8.0);
  const auto est = [&](DivergenceId id) {
    const auto spec = DivergenceSpec::make(id);
    return divergence_estimate(spec, population_objective(spec, rs, rt));
  };
  CHECK(est(DivergenceId::KL) == doctest::Approx(kl).epsilon(0.03));
  CHECK(est(DivergenceId::ReverseKL) == doctest::Approx(kl).epsilon(0.03));
  CHECK(est(DivergenceId::PearsonChi2) == doctest::Approx(pearson).epsilon(0.05));
  CHECK(est(DivergenceId::SquaredHellinger) == doctest::Approx(hellinger).epsilon(0.05));
}

TEST_CASE("divergences vanish at P = Q")
{
  const std::vector<double> ones(10, 1.0);
  for (DivergenceId id : kCatalogue) {
    const auto spec = DivergenceSpec::make(id);
    CHECK(divergence_estimate(spec, population_objective(spec, ones, ones)) ==
          doctest::Approx(0.0));
  }
  CHECK_THROWS_AS(population_objective(DivergenceSpec::make(DivergenceId::KL), {}, ones),
                  ConfigError);
}

TEST_CASE("custom loss pairs")
{
  LossPair lp{ [](double r) { return r * r - 1.0; },
               [](double r) { return 2.0 * (r - 1.0); },
               [](double r) { return 2.0 * r; },
               [](double) { return 2.0; },
               {},
               {} };
  const auto spec = DivergenceSpec::custom("chi2", lp, Link::Identity, 0.0, 0.0);
  CHECK(spec.id() == DivergenceId::Custom);
  CHECK(spec.name() == "chi2");
  CHECK(spec.source_loss(2.0).deriv2 == 0.0);
  CHECK_THROWS_AS(DivergenceSpec::custom("bad", LossPair{}, Link::Exp, 0.0, 0.0), ConfigError);
}
