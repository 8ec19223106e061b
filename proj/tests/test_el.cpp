#include "designs.hpp"

#include "shiftel/el.hpp"
#include "shiftel/error.hpp"
#include "shiftel/optimize.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace shiftel;

namespace {

// maximiser of sum log(1 + l psi_i) over a grid of the feasible interval
double grid_lambda(const Eigen::VectorXd& psi, double resolution)
{
  const double lo = -1.0 / psi.maxCoeff();
  const double hi = -1.0 / psi.minCoeff();
  double best = 0.0, best_v = -std::numeric_limits<double>::infinity();
  for (double l = lo + resolution; l < hi; l += resolution) {
    const double v = (1.0 + l * psi.array()).log().sum();
    if (v > best_v) {
      best_v = v;
      best = l;
    }
  }
  return best;
}

Eigen::MatrixXd column(std::initializer_list<double> v)
{
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v)
    m(i++, 0) = x;
  return m;
}

} // namespace

TEST_CASE("solve_lambda on a symmetric sample")
{
  const auto sol = solve_lambda(column({ -2.0, -1.0, 1.0, 2.0 }));
  CHECK(sol.converged);
  CHECK(sol.lambda(0) == doctest::Approx(0.0));
  CHECK(sol.log_el == doctest::Approx(0.0));
  for (Eigen::Index i = 0; i < 4; ++i)
    CHECK(sol.weights(i) == doctest::Approx(0.25));
}

TEST_CASE("solve_lambda against the grid oracle")
{
  const Eigen::MatrixXd psi = column({ -1.0, 0.5, 0.5, 0.5 });
  const auto sol = solve_lambda(psi);
  CHECK(sol.converged);
  // stationarity: 1 / (1 - l) = 1.5 / (1 + l / 2), so l = 1/4
  CHECK(sol.lambda(0) == doctest::Approx(0.25).epsilon(1e-10));
  CHECK(std::abs(sol.lambda(0) - grid_lambda(psi.col(0), 1e-4)) <= 1e-4);

  Rng rng(21);
  std::normal_distribution<double> nd(0.3, 1.0);
  int hull = 0;
  for (int rep = 0; rep < 30; ++rep) {
    const Eigen::Index rows = 3 + static_cast<Eigen::Index>(rng() % 18);
    Eigen::MatrixXd p(rows, 1);
    for (Eigen::Index i = 0; i < rows; ++i)
      p(i, 0) = nd(rng);
    const bool inside = p.minCoeff() < 0.0 && p.maxCoeff() > 0.0;
    if (!inside) {
      ++hull;
      CHECK_THROWS_AS(solve_lambda(p), ConvexHullViolation);
      continue;
    }
    const auto s = solve_lambda(p);
    CHECK(s.converged);
    CHECK(std::abs(s.lambda(0) - grid_lambda(p.col(0), 1e-4)) <= 1e-3);
  }
  CHECK(hull < 30);
}

TEST_CASE("solve_lambda detects zero outside the hull")
{
  CHECK_THROWS_AS(solve_lambda(column({ 0.1, 0.4, 2.0 })), ConvexHullViolation);
  CHECK_THROWS_AS(solve_lambda(column({ 0.0, 0.4, 2.0 })), ConvexHullViolation);

  Eigen::MatrixXd v(5, 2);
  v << 1, 0, 2, 1, 1, -1, 3, 2, 0.5, 0.5;
  CHECK_THROWS_AS(solve_lambda(v), ConvexHullViolation);

  Eigen::MatrixXd collinear(4, 2);
  collinear << -1, -2, 1, 2, -2, -4, 3, 6;
  CHECK_THROWS_AS(solve_lambda(collinear), NumericError);
  CHECK_THROWS_AS(solve_lambda(column({ 1.0 })), ConfigError);

  const auto zero = solve_lambda(Eigen::MatrixXd::Zero(5, 1));
  CHECK(zero.converged);
  CHECK(zero.ell() == 0.0);
}

TEST_CASE("solver invariants on vector moments")
{
  Rng rng(22);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::MatrixXd psi(40, 3);
    for (Eigen::Index i = 0; i < psi.rows(); ++i)
      for (Eigen::Index k = 0; k < 3; ++k)
        psi(i, k) = nd(rng) + 0.2 * static_cast<double>(k);
    const auto sol = solve_lambda(psi);
    REQUIRE(sol.converged);

    // weight identity
    CHECK((sol.weights.array() > 0.0).all());
    CHECK(sol.weights.sum() == doctest::Approx(1.0).epsilon(1e-8));
    CHECK((psi.transpose() * sol.weights).lpNorm<Eigen::Infinity>() < 1e-8);
    const Eigen::VectorXd z = (psi * sol.lambda).array() + 1.0;
    for (Eigen::Index i = 0; i < psi.rows(); ++i)
      CHECK(sol.weights(i) == doctest::Approx(1.0 / (40.0 * z(i))).epsilon(1e-12));

    // dual objective never decreases
    for (std::size_t k = 1; k < sol.dual_path.size(); ++k)
      CHECK(sol.dual_path[k] >= sol.dual_path[k - 1] - 1e-12 * (1.0 + std::abs(sol.dual_path[k])));

    // self-normalisation under an invertible linear map of the rows
    Eigen::Matrix3d a;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        a(i, j) = nd(rng) + (i == j ? 2.0 : 0.0);
    const auto mapped = solve_lambda(Eigen::MatrixXd(psi * a));
    CHECK(mapped.ell() == doctest::Approx(sol.ell()).epsilon(1e-6));
  }
}

TEST_CASE("profile likelihood on a weighted mean")
{
  const Dataset data = testing::linear_shift(300, 150, 23);
  Nuisances nu;
  nu.source_ratio = Eigen::VectorXd::Ones(data.n());
  const auto g = EstimatingFunction::mean();
  const auto res = maximize_el(data, nu, g, MomentKind::Drw);
  // unit weights give the classical EL mean
  CHECK(res.theta_hat(0) == doctest::Approx(data.source_y().mean()).epsilon(1e-6));
  CHECK(res.ell_hat == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(res.r_n(res.theta_hat) == 0.0);
  CHECK(res.r_n(res.theta_hat(0) + 0.3) > 0.0);
  CHECK(std::isinf(res.r_n(100.0)));
  const Eigen::VectorXd t = Eigen::VectorXd::Constant(1, 0.1);
  CHECK(res.ell(t) == res.ell(t));
  CHECK_THROWS_AS(wilks_ci(res, 0.95), ContractError);
}

TEST_CASE("chi-squared calibration helpers")
{
  CHECK(chi_squared_quantile(0.95, 1) == doctest::Approx(3.841458820694124));
  CHECK(chi_squared_quantile(0.95, 2) == doctest::Approx(5.991464547107979));
  CHECK_THROWS_AS(chi_squared_quantile(1.0, 1), ConfigError);
}

TEST_CASE("Wilks interval in the quadratic case")
{
  InferenceResult res;
  res.kind = MomentKind::Orthogonal;
  res.theta_hat = Eigen::VectorXd::Constant(1, 0.7);
  res.ell_hat = 0.0;
  res.bracket = { -1.0, 3.0 };
  const double N = 500.0, s = 1.3;
  res.ell = [&](const Eigen::VectorXd& t) { return 0.5 * N * std::pow(t(0) - 0.7, 2) / (s * s); };
  const auto ci = wilks_ci(res, 0.95);
  const double half = std::sqrt(chi_squared_quantile(0.95, 1)) * s / std::sqrt(N);
  CHECK(ci.lo == doctest::Approx(0.7 - half).epsilon(1e-4));
  CHECK(ci.hi == doctest::Approx(0.7 + half).epsilon(1e-4));
  CHECK(std::abs(res.r_n(ci.hi) - 3.841458820694124) <= 1e-3);

  res.ell = [](const Eigen::VectorXd&) { return 0.0; };
  CHECK_THROWS_AS(wilks_ci(res, 0.95), InferenceError);
}

TEST_CASE("bootstrap percentile interval")
{
  const Dataset data = testing::linear_shift(80, 40, 24);
  const auto mean_y = [](const Dataset& d, std::uint64_t) { return d.source_y().mean(); };
  const auto a = bootstrap_ci(data, mean_y, 200, 0.9, 5);
  const auto b = bootstrap_ci(data, mean_y, 200, 0.9, 5, 2);
  CHECK(a.estimates == b.estimates);
  CHECK(a.failures == 0);
  CHECK(a.interval.contains(data.source_y().mean()));

  RowMatrix xs = data.source_x();
  const Dataset flat(xs, Eigen::VectorXd::Constant(data.n(), 1.5), data.target_x());
  const auto g = EstimatingFunction::mean();
  const auto drw = [&](const Dataset& d, std::uint64_t) {
    Nuisances w;
    w.source_ratio = Eigen::VectorXd::Ones(d.n());
    return maximize_el(d, w, g, MomentKind::Drw).theta_hat(0);
  };
  const auto z = bootstrap_ci(flat, drw, 50, 0.95, 6);
  CHECK(z.interval.lo == 1.5);
  CHECK(z.interval.hi == 1.5);

  const auto flaky = [](const Dataset&, std::uint64_t seed) -> double {
    if (seed % 2 == 0)
      throw NumericError("boom");
    return 0.0;
  };
  CHECK_THROWS_AS(bootstrap_ci(data, flaky, 60, 0.95, 7), InferenceError);
  CHECK_THROWS_AS(bootstrap_ci(data, mean_y, 49, 0.95, 7), ConfigError);
}

TEST_CASE("scalar and simplex minimisers")
{
  const auto q = golden_section([](double x) { return (x - 1.3) * (x - 1.3); }, -5.0, 5.0, 1e-9);
  CHECK(q.x == doctest::Approx(1.3).epsilon(1e-7));

  const auto inf_edge = golden_section(
    [](double x) { return x < 0.2 ? std::numeric_limits<double>::infinity() : std::abs(x - 0.5); }, 0.0, 1.0, 1e-9);
  CHECK(inf_edge.x == doctest::Approx(0.5).epsilon(1e-6));

  const auto rosen = [](const Eigen::VectorXd& v) {
    return 100.0 * std::pow(v(1) - v(0) * v(0), 2) + std::pow(1.0 - v(0), 2);
  };
  const auto nm = nelder_mead(rosen, Eigen::Vector2d(-1.2, 1.0), Eigen::Vector2d(0.5, 0.5), 1e-12, 5000);
  CHECK(nm.x(0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(nm.x(1) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("EL configuration validation")
{
  ELConfig c;
  CHECK_NOTHROW(c.validate());
  c.tolerance = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.grid_points = 2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.lower_quantile = 0.9;
  c.upper_quantile = 0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_ci_method("wilks") == CiMethod::WilksChi2);
  CHECK_THROWS_AS(parse_ci_method("wald"), ConfigError);
}
