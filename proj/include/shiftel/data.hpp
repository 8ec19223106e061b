#pragma once

#include "shiftel/rng.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace shiftel {

using RowMatrix =
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

//! Pointer-and-length view of row i of a row-major matrix.
inline std::span<const double> row_span(const RowMatrix& x, Eigen::Index i)
{
  return { x.data() + i * x.cols(), static_cast<std::size_t>(x.cols()) };
}

//! Labelled source sample (x, y) plus unlabelled target covariates.
//!
//! Immutable after construction. The mixing proportion is fixed at m / (n + m).
class Dataset
{
public:
  Dataset(RowMatrix source_x, Eigen::VectorXd source_y, RowMatrix target_x);

  const RowMatrix& source_x() const { return source_x_; }
  const Eigen::VectorXd& source_y() const { return source_y_; }
  const RowMatrix& target_x() const { return target_x_; }

  Eigen::Index n() const { return source_x_.rows(); }
  Eigen::Index m() const { return target_x_.rows(); }
  Eigen::Index total() const { return n() + m(); }
  Eigen::Index d() const { return source_x_.cols(); }
  double tau_hat() const
  {
    return static_cast<double>(m()) / static_cast<double>(n() + m());
  }

  //! Source rows followed by target rows.
  RowMatrix pooled_x() const;

private:
  RowMatrix source_x_;
  Eigen::VectorXd source_y_;
  RowMatrix target_x_;
};

enum class CovariateSetting
{
  S1,
  S2
};

enum class ResponseModel
{
  M1,
  M2,
  M3
};

enum class SampleRole
{
  Source,
  Target
};

struct ScenarioConfig
{
  CovariateSetting covariate_setting = CovariateSetting::S1;
  ResponseModel response_model = ResponseModel::M2;
  std::int64_t n = 1000;
  std::int64_t m = 500;
  std::int64_t d = 5;
  std::uint64_t seed = 1;

  //! Throws ConfigError on non-positive counts.
  void validate() const;
};

std::string to_string(CovariateSetting s);
std::string to_string(ResponseModel m);
CovariateSetting parse_covariate_setting(std::string_view s);
ResponseModel parse_response_model(std::string_view s);

//! Covariate draws for one sample of a simulation design.
//!
//! S1: source Uniform(0,1)^d, target Beta(6/5, 6/5)^d.
//! S2: source N(0, I_d), target N(0, Sigma_d) with Sigma_ij = 0.5^|i-j|.
RowMatrix generate_covariates(CovariateSetting setting,
                              SampleRole role,
                              std::int64_t n,
                              std::int64_t d,
                              Rng& rng);

//! E[Y | x] under the response model.
double regression_function(std::span<const double> x, ResponseModel model);

//! Standard deviation of the response noise, sqrt(max(0.5, |x_1|)).
double noise_sd(std::span<const double> x);

//! One response draw: regression_function(x) + N(0, max(0.5, |x_1|)).
double generate_response(std::span<const double> x, ResponseModel model, Rng& rng);

//! Density of Y given x under the response model (Gaussian).
double true_conditional_density(double y,
                                std::span<const double> x,
                                ResponseModel model);

double beta_pdf(double x, double a, double b);

//! Beta(a, b) draw from the ratio of two Gamma variates.
double sample_beta(double a, double b, Rng& rng);

//! Closed-form target/source covariate density ratio for S1.
double true_density_ratio_s1(std::span<const double> x);

//! Closed-form target/source covariate density ratio for S2.
double true_density_ratio_s2(std::span<const double> x);

double true_density_ratio(CovariateSetting setting, std::span<const double> x);

//! Full simulated dataset; bit-reproducible in (config, seed).
Dataset generate_dataset(const ScenarioConfig& config);

//! Column naming for CSV ingestion.
struct CsvSchema
{
  std::string covariate_prefix = "x";
  std::string response_column = "y";
  std::string role_column = "role";
};

//! Reads a CSV with header `x1..xd, y, role`. Missing y is empty or "NA".
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

void write_csv(const Dataset& data, const std::filesystem::path& path);

} // namespace shiftel
