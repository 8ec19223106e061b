#include "shiftel/data.hpp"
#include "shiftel/error.hpp"
#include "shiftel/funclass.hpp"

#include <doctest.h>

#include <cmath>

using namespace shiftel;

namespace {

RowMatrix uniform_rows(Eigen::Index n, Eigen::Index d, std::uint64_t seed)
{
  Rng rng(seed);
  return generate_covariates(CovariateSetting::S1, SampleRole::Source, n, d, rng);
}

RowMatrix beta_rows(Eigen::Index n, Eigen::Index d, std::uint64_t seed)
{
  Rng rng(seed);
  return generate_covariates(CovariateSetting::S1, SampleRole::Target, n, d, rng);
}

Eigen::VectorXd numeric_gradient(const ErmObjective& obj, const Eigen::VectorXd& p)
{
  Eigen::VectorXd g(p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(p(k)));
    Eigen::VectorXd a = p;
    Eigen::VectorXd b = p;
    a(k) += h;
    b(k) -= h;
    g(k) = (obj.value(a) - obj.value(b)) / (2 * h);
  }
  return g;
}

double mean_squared_ratio_error(const FittedFunction& f, const RowMatrix& x)
{
  const Eigen::VectorXd r = f.evaluate(x);
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double e = r(i) - true_density_ratio_s1(row_span(x, i));
    s += e * e;
  }
  return s / static_cast<double>(x.rows());
}

} // namespace

TEST_CASE("sieve basis sizes")
{
  const RowMatrix x = uniform_rows(10, 2, 1);
  CHECK(PolySieveBasis::build(x, 0, 200).size() == 1);
  CHECK(PolySieveBasis::build(x, 2, 200).size() == 6);
  const RowMatrix x5 = uniform_rows(10, 5, 1);
  CHECK(PolySieveBasis::build(x5, 3, 200).size() == 56);
  CHECK(PolySieveBasis::build(x5, 3, 20).size() == 20);
  const auto design = PolySieveBasis::build(x5, 2, 200).design(x5);
  CHECK(design.rows() == 10);
  CHECK((design.col(0).array() == 1.0).all());
  CHECK(design.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
}

TEST_CASE("analytic gradients match finite differences")
{
  const RowMatrix xs = uniform_rows(40, 3, 2);
  const RowMatrix xt = beta_rows(30, 3, 3);
  const RowMatrix all = [&] {
    RowMatrix a(70, 3);
    a << xs, xt;
    return a;
  }();
  Rng rng(5);
  for (DivergenceId id : { DivergenceId::KL,
                           DivergenceId::ReverseKL,
                           DivergenceId::PearsonChi2,
                           DivergenceId::SquaredHellinger }) {
    const auto spec = DivergenceSpec::make(id);
    CAPTURE(spec.name());
    const Architecture sieve = PolySieveBasis::build(all, 2, 200);
    const Architecture mlp = MlpArchitecture::build(all, 5, 2);
    for (const Architecture* arch : { &sieve, &mlp }) {
      const ErmObjective obj(*arch, spec, xs, xt);
      Eigen::VectorXd p(obj.parameter_count());
      for (Eigen::Index k = 0; k < p.size(); ++k)
        p(k) = 0.3 * (2.0 * rng.uniform() - 1.0);
      if (spec.link() == Link::Identity)
        p(p.size() - 1) += 1.5; // keep the Pearson ratio mostly positive
      Eigen::VectorXd g(p.size());
      const double v = obj.value_and_gradient(p, g);
      CHECK(v == doctest::Approx(obj.value(p)));
      const Eigen::VectorXd ng = numeric_gradient(obj, p);
      CHECK((g - ng).lpNorm<Eigen::Infinity>() < 1e-6 * (1.0 + g.lpNorm<Eigen::Infinity>()));
    }
  }
}

TEST_CASE("sieve Hessian matches differentiated gradient")
{
  const RowMatrix xs = uniform_rows(30, 2, 7);
  const RowMatrix xt = beta_rows(25, 2, 8);
  RowMatrix all(55, 2);
  all << xs, xt;
  const Architecture arch = PolySieveBasis::build(all, 2, 200);
  const auto spec = DivergenceSpec::make(DivergenceId::SquaredHellinger);
  const ErmObjective obj(arch, spec, xs, xt);
  Eigen::VectorXd p = Eigen::VectorXd::Constant(obj.parameter_count(), 0.1);
  const Eigen::MatrixXd h = obj.hessian(p);
  Eigen::VectorXd ga(p.size()), gb(p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    Eigen::VectorXd a = p, b = p;
    a(k) += 1e-6;
    b(k) -= 1e-6;
    obj.value_and_gradient(a, ga);
    obj.value_and_gradient(b, gb);
    const Eigen::VectorXd col = (ga - gb) / 2e-6;
    CHECK((h.col(k) - col).lpNorm<Eigen::Infinity>() < 1e-5);
  }
  CHECK((h - h.transpose()).norm() < 1e-12);

  const Architecture mlp = MlpArchitecture::build(all, 3, 1);
  const ErmObjective mobj(mlp, spec, xs, xt);
  CHECK_THROWS_AS(mobj.hessian(Eigen::VectorXd::Zero(mobj.parameter_count())), ContractError);
}

TEST_CASE("Pearson sieve fit equals the closed-form least-squares solution")
{
  const RowMatrix xs = uniform_rows(300, 2, 9);
  const RowMatrix xt = beta_rows(200, 2, 10);
  auto config = FunctionClassConfig::poly_sieve();
  config.r_min = 1e-6;
  config.r_max = 1e6;
  const auto spec = DivergenceSpec::make(DivergenceId::PearsonChi2);
  const FittedFunction f = fit_capacity(config, spec, xs, xt, { 2, 0 }, 1);

  // minimiser of mean(r^2) over source - 2 mean(r) over target
  RowMatrix all(500, 2);
  all << xs, xt;
  const auto basis = PolySieveBasis::build(all, 2, 200);
  const Eigen::MatrixXd ps = basis.design(xs);
  const Eigen::MatrixXd pt = basis.design(xt);
  const Eigen::MatrixXd a = ps.transpose() * ps / 300.0;
  const Eigen::VectorXd b = pt.colwise().mean().transpose();
  const Eigen::VectorXd beta = a.ldlt().solve(b);
  CHECK((f.parameters() - beta).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("sieve ERM recovers a one-dimensional ratio")
{
  const RowMatrix xs = uniform_rows(4000, 1, 11);
  const RowMatrix xt = beta_rows(4000, 1, 12);
  const RowMatrix grid = uniform_rows(2000, 1, 13);
  for (DivergenceId id : { DivergenceId::KL, DivergenceId::SquaredHellinger }) {
    const auto spec = DivergenceSpec::make(id);
    const FittedFunction f = fit_erm(FunctionClassConfig::poly_sieve(), spec, xs, xt);
    CAPTURE(spec.name());
    CHECK(f.cv_scores.size() == 3);
    // Var_P r0 = 0.0536 for this pair; a good fit is an order of magnitude below
    CHECK(mean_squared_ratio_error(f, grid) < 0.01);
  }
}

TEST_CASE("MLP ERM learns the ratio and is reproducible")
{
  const RowMatrix xs = uniform_rows(1500, 1, 21);
  const RowMatrix xt = beta_rows(1500, 1, 22);
  auto config = FunctionClassConfig::mlp();
  config.degree_or_width_candidates = { 8 };
  config.depth_candidates = { 1 };
  config.optimizer.learning_rate = 0.02;
  config.optimizer.max_epochs = 600;
  const auto spec = DivergenceSpec::make(DivergenceId::KL);
  const FittedFunction a = fit_erm(config, spec, xs, xt);
  const FittedFunction b = fit_erm(config, spec, xs, xt);
  CHECK(a.parameters() == b.parameters());
  CHECK(!a.history.empty());
  CHECK(a.history.back() < a.history.front());
  CHECK(mean_squared_ratio_error(a, uniform_rows(2000, 1, 23)) < 0.02);
}

TEST_CASE("evaluation clamps and checks shape")
{
  const RowMatrix x = uniform_rows(20, 2, 30);
  PolySieveBasis basis = PolySieveBasis::build(x, 1, 200);
  Eigen::VectorXd p(3);
  p << 10.0, 20.0, -40.0;
  const FittedFunction f(basis, p, Link::Exp, 0.01, 100.0);
  const Eigen::VectorXd r = f.evaluate(x);
  CHECK(r.minCoeff() >= 0.01);
  CHECK(r.maxCoeff() <= 100.0);
  CHECK_THROWS_AS(f.evaluate(RowMatrix(3, 4)), ShapeError);
  CHECK(clamp_ratio(-5.0, Link::Identity, 0.01, 100.0) == 0.01);
  CHECK(clamp_ratio(std::log(2.0), Link::Exp, 0.01, 100.0) == doctest::Approx(2.0));
  CHECK_THROWS_AS(FittedFunction(basis, Eigen::VectorXd(2), Link::Exp, 0.01, 100.0), ShapeError);
}

TEST_CASE("configuration validation")
{
  auto c = FunctionClassConfig::mlp();
  CHECK_NOTHROW(c.validate());
  CHECK(c.candidates().size() == 6);
  c.r_min = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = FunctionClassConfig::mlp();
  c.optimizer.method = OptimizerMethod::Newton;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = FunctionClassConfig::poly_sieve();
  c.cv_folds = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_function_kind("mlp") == FunctionKind::Mlp);
  CHECK_THROWS_AS(parse_optimizer_method("sgd"), ConfigError);

  const RowMatrix xs = uniform_rows(2, 1, 1);
  const RowMatrix xt = beta_rows(5, 1, 2);
  CHECK_THROWS_AS(cv_select(FunctionClassConfig::poly_sieve(),
                            DivergenceSpec::make(DivergenceId::KL),
                            xs,
                            xt),
                  ConfigError);
}
