#include "shiftel/data.hpp"
#include "shiftel/error.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace shiftel;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& body)
{
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << body;
  return path;
}

double column_mean(const RowMatrix& x, Eigen::Index j)
{
  return x.col(j).mean();
}

} // namespace

TEST_CASE("regression functions pair the covariates")
{
  const std::vector<double> x{ 0.1, 0.2, 0.3, 0.4, 0.5 };
  // even sum x2 + x4 = 0.6, odd sum x1 + x3 = 0.4
  CHECK(regression_function(x, ResponseModel::M1) == doctest::Approx(0.1));
  CHECK(regression_function(x, ResponseModel::M2) == doctest::Approx(0.9510565162951536));
  CHECK(regression_function(x, ResponseModel::M3) == 0.0);
  const std::vector<double> flipped{ 0.4, 0.3, 0.2, 0.1, 0.9 };
  CHECK(regression_function(flipped, ResponseModel::M3) == 1.0);
}

TEST_CASE("noise scale and conditional density")
{
  const std::vector<double> x{ 0.1, 0.2, 0.3, 0.4, 0.5 };
  CHECK(noise_sd(x) == doctest::Approx(std::sqrt(0.5)));
  const std::vector<double> wide{ -3.0, 0.0 };
  CHECK(noise_sd(wide) == doctest::Approx(std::sqrt(3.0)));
  CHECK(true_conditional_density(0.4, x, ResponseModel::M2) ==
        doctest::Approx(0.416433611151266).epsilon(1e-12));
}

TEST_CASE("closed-form density ratios")
{
  CHECK(beta_pdf(0.5, 1.2, 1.2) == doctest::Approx(1.1166673065867865).epsilon(1e-12));
  const std::vector<double> u{ 0.1, 0.2, 0.3, 0.4, 0.5 };
  CHECK(true_density_ratio_s1(u) == doctest::Approx(1.24001119126805).epsilon(1e-12));
  const std::vector<double> z{ 0.3, -1.2, 0.7, 0.0, 2.1 };
  CHECK(true_density_ratio_s2(z) == doctest::Approx(0.19830100241431137).epsilon(1e-12));
  const std::vector<double> outside{ 0.5, 1.5 };
  CHECK_THROWS_AS(true_density_ratio_s1(outside), DomainError);
}

TEST_CASE("simulation is reproducible in the seed")
{
  ScenarioConfig cfg;
  cfg.n = 50;
  cfg.m = 20;
  cfg.seed = 11;
  const Dataset a = generate_dataset(cfg);
  const Dataset b = generate_dataset(cfg);
  CHECK(a.source_x() == b.source_x());
  CHECK(a.source_y() == b.source_y());
  CHECK(a.target_x() == b.target_x());
  cfg.seed = 12;
  const Dataset c = generate_dataset(cfg);
  CHECK(a.source_x() != c.source_x());
  CHECK(a.n() == 50);
  CHECK(a.m() == 20);
  CHECK(a.tau_hat() == doctest::Approx(20.0 / 70.0));
}

TEST_CASE("covariate marginals match their laws")
{
  Rng rng(3);
  const auto src = generate_covariates(CovariateSetting::S1, SampleRole::Source, 40000, 2, rng);
  const auto tgt = generate_covariates(CovariateSetting::S1, SampleRole::Target, 40000, 2, rng);
  CHECK(src.minCoeff() >= 0.0);
  CHECK(src.maxCoeff() <= 1.0);
  CHECK(column_mean(src, 0) == doctest::Approx(0.5).epsilon(0.01));
  // Beta(6/5, 6/5) variance ab / ((a+b)^2 (a+b+1)) = 0.0735294
  const double var = (tgt.col(1).array() - 0.5).square().mean();
  CHECK(var == doctest::Approx(0.0735294).epsilon(0.03));

  const auto g = generate_covariates(CovariateSetting::S2, SampleRole::Target, 40000, 3, rng);
  const double cov01 = (g.col(0).array() * g.col(1).array()).mean();
  const double cov02 = (g.col(0).array() * g.col(2).array()).mean();
  CHECK(cov01 == doctest::Approx(0.5).epsilon(0.05));
  CHECK(cov02 == doctest::Approx(0.25).epsilon(0.08));
}

TEST_CASE("dataset validation")
{
  RowMatrix xs(2, 2);
  xs << 0.1, 0.2, 0.3, 0.4;
  RowMatrix xt(1, 2);
  xt << 0.5, 0.5;
  Eigen::VectorXd y(2);
  y << 1.0, 2.0;
  CHECK_NOTHROW(Dataset(xs, y, xt));
  CHECK_THROWS_AS(Dataset(xs, Eigen::VectorXd(3), xt), ShapeError);
  CHECK_THROWS_AS(Dataset(xs, y, RowMatrix(1, 3)), ShapeError);
  CHECK_THROWS_AS(Dataset(xs, y, RowMatrix(0, 2)), ConfigError);
  y(1) = std::nan("");
  CHECK_THROWS_AS(Dataset(xs, y, xt), DomainError);

  ScenarioConfig cfg;
  cfg.n = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(parse_response_model("M4"), ConfigError);
  CHECK(parse_covariate_setting("S2") == CovariateSetting::S2);
}

TEST_CASE("csv round trip")
{
  ScenarioConfig cfg;
  cfg.n = 7;
  cfg.m = 4;
  cfg.d = 3;
  const Dataset a = generate_dataset(cfg);
  const auto path = std::filesystem::temp_directory_path() / "shiftel_roundtrip.csv";
  write_csv(a, path);
  const Dataset b = load_csv(path);
  CHECK(b.source_x() == a.source_x());
  CHECK(b.source_y() == a.source_y());
  CHECK(b.target_x() == a.target_x());
}

TEST_CASE("csv errors carry the offending row")
{
  const auto bad_value = temp_file("shiftel_bad_value.csv",
                                   "x1,x2,y,role\n0.1,0.2,1.0,source\n0.1,abc,1.0,source\n0.3,0.3,NA,target\n");
  try {
    load_csv(bad_value);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 2);
  }

  const auto missing_y = temp_file("shiftel_missing_y.csv",
                                   "x1,y,role\n0.1,,source\n0.3,NA,target\n");
  CHECK_THROWS_AS(load_csv(missing_y), ParseError);

  const auto gap = temp_file("shiftel_gap.csv", "x1,x3,y,role\n0.1,0.2,1.0,source\n");
  CHECK_THROWS_AS(load_csv(gap), ParseError);

  const auto no_target = temp_file("shiftel_no_target.csv", "x1,y,role\n0.1,1.0,source\n");
  CHECK_THROWS_AS(load_csv(no_target), ConfigError);

  const auto bad_role = temp_file("shiftel_bad_role.csv", "x1,y,role\n0.1,1.0,train\n");
  CHECK_THROWS_AS(load_csv(bad_role), ParseError);

  CHECK_THROWS_AS(load_csv("/nonexistent/shiftel.csv"), ConfigError);
}
