#pragma once

#include "shiftel/data.hpp"
#include "shiftel/divergence.hpp"
#include "shiftel/funclass.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace shiftel {

enum class RatioMethod
{
  Ddr,                //!< divergence-based ERM
  KernelSmoothing,    //!< ratio of Gaussian product-kernel density estimates
  ProbClassification, //!< odds of a logistic source/target classifier
  Function            //!< user-supplied function (oracle, constant)
};

//! Ratio of two Gaussian product-kernel density estimates.
struct KernelRatio
{
  RowMatrix source_x;
  RowMatrix target_x;
  Eigen::VectorXd bandwidth_source;
  Eigen::VectorXd bandwidth_target;
  double r_min = 0.01;
  double r_max = 100.0;

  Eigen::VectorXd evaluate(const RowMatrix& x) const;
};

//! Logistic model for P(target | x) on sieve features, converted to a ratio
//! through the odds.
struct ClassifierRatio
{
  PolySieveBasis basis;
  Eigen::VectorXd coefficients;
  double tau = 0.5;
  double r_min = 0.01;
  double r_max = 100.0;

  Eigen::VectorXd probability(const RowMatrix& x) const;
  Eigen::VectorXd evaluate(const RowMatrix& x) const;
};

struct FunctionRatio
{
  std::string name;
  std::function<double(std::span<const double>)> fn;
  Eigen::Index input_dim = 1;
};

class RatioModel
{
public:
  using Impl = std::variant<FittedFunction, KernelRatio, ClassifierRatio, FunctionRatio>;

  RatioModel(Impl impl, DivergenceSpec spec, double objective_value, double divergence_estimate);

  //! Wraps a known function. Objective and divergence are left as NaN.
  static RatioModel from_function(std::string name,
                                  std::function<double(std::span<const double>)> fn,
                                  Eigen::Index input_dim);
  //! r = 1 everywhere.
  static RatioModel constant_one(Eigen::Index input_dim);

  RatioMethod method() const;
  Eigen::Index input_dim() const;
  //! Ratio values at the rows of x. Throws ShapeError on column mismatch.
  Eigen::VectorXd evaluate(const RowMatrix& x) const;

  const Impl& impl() const { return impl_; }
  const DivergenceSpec& spec() const { return spec_; }
  //! Empirical criterion at the fit (under `spec`).
  double objective_value() const { return objective_; }
  double divergence_estimate() const { return divergence_; }

private:
  Impl impl_;
  DivergenceSpec spec_;
  double objective_ = 0.0;
  double divergence_ = 0.0;
};

//! Divergence-based ratio estimator: ERM of the spec's loss pair with source
//! covariates in the l1 role and target covariates in the l2 role.
RatioModel fit_ddr(const Dataset& data,
                   const DivergenceSpec& spec,
                   const FunctionClassConfig& config);

struct KernelConfig
{
  //! Multipliers of the per-column Silverman bandwidth. Empty means 20
  //! log-spaced values on [0.2, 3].
  std::vector<double> bandwidth_grid;
  //! Leave-one-out scoring up to this sample size, 5-fold above it.
  Eigen::Index loo_max = 2000;
  double r_min = 0.01;
  double r_max = 100.0;
};

//! Bandwidth multiplier maximising the held-out log-likelihood of a Gaussian
//! product-kernel estimate. Throws NumericError on a zero-variance column.
double select_bandwidth(const RowMatrix& x, const KernelConfig& config);

//! Silverman's rule per column for a sample of size rows(x).
Eigen::VectorXd silverman_bandwidth(const RowMatrix& x);

RatioModel fit_kernel_smoothing(const Dataset& data, const KernelConfig& config = {});

struct ClassifierConfig
{
  int degree = 2;
  int max_basis = 200;
  double ridge = 1e-8;
  int max_iterations = 100;
  double r_min = 0.01;
  double r_max = 100.0;
};

//! {(1 - tau) / tau} * pi / (1 - pi)
double odds_to_ratio(double pi, double tau);

//! Throws NumericError when the classes are (quasi-)separated.
RatioModel fit_prob_classification(const Dataset& data, const ClassifierConfig& config = {});

using RatioOracle = std::function<double(std::span<const double>)>;

//! sqrt of the mean of (r_hat - r0)^2 over the rows of x.
double empirical_l2_error(const RatioModel& r_hat, const RatioOracle& oracle, const RowMatrix& x);

//! Mean of (r_hat - r0)^2 over the rows of x.
double ratio_mse(const RatioModel& r_hat, const RatioOracle& oracle, const RowMatrix& x);

std::string to_string(RatioMethod m);
RatioMethod parse_ratio_method(std::string_view s);

} // namespace shiftel
