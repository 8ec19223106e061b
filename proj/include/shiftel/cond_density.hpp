#pragma once

#include "shiftel/data.hpp"
#include "shiftel/divergence.hpp"
#include "shiftel/estimating.hpp"
#include "shiftel/funclass.hpp"

#include <cstdint>
#include <functional>
#include <span>

namespace shiftel {

//! Normal reference density for the responses.
struct AuxiliaryDistribution
{
  double location = 0.0;
  double scale = 1.0;

  //! Location = mean(y), scale = inflation * sd(y).
  static AuxiliaryDistribution from_sample(const Eigen::VectorXd& y, double inflation = 2.0);

  double pdf(double y) const;
  double sample(Rng& rng) const;
};

struct AuxConfig
{
  double inflation = 2.0;
  int grid_size = 512;
  //! The grid spans [min y, max y] widened by this many auxiliary scales.
  double grid_margin = 3.0;
};

//! p(y | x) = r(y, x) * aux.pdf(y), renormalised on a response grid.
class CondDensityModel
{
public:
  CondDensityModel(AuxiliaryDistribution aux, FittedFunction ratio, Eigen::VectorXd y_grid);

  const AuxiliaryDistribution& aux() const { return aux_; }
  const FittedFunction& ratio() const { return ratio_; }
  const Eigen::VectorXd& y_grid() const { return y_grid_; }
  double grid_step() const;
  Eigen::Index input_dim() const { return ratio_.input_dim() - 1; }

  //! Normalised grid densities, one row per row of x (k x G).
  Eigen::MatrixXd grid_density(const RowMatrix& x) const;

  //! Normalised density at (y_i, x_i) pairs.
  Eigen::VectorXd density(const Eigen::VectorXd& y, const RowMatrix& x) const;

private:
  Eigen::MatrixXd raw_grid(const RowMatrix& x) const;

  AuxiliaryDistribution aux_;
  FittedFunction ratio_;
  Eigen::VectorXd y_grid_;
};

//! Trains r(y, x) = p(y | x) / aux(y) with auxiliary pairs (aux draws, x_i)
//! in the source role and observed pairs (y_i, x_i) in the target role.
CondDensityModel fit_conditional_density(const Dataset& data,
                                         const DivergenceSpec& spec,
                                         const FunctionClassConfig& config,
                                         const AuxConfig& aux_config,
                                         std::uint64_t seed);

//! Sieve defaults for the response-covariate ratio: degrees {1, 2, 3},
//! clamp [1e-4, 1e4].
FunctionClassConfig default_cde_config();

//! kappa draws per covariate row, each row sorted ascending. Independent of
//! any parameter value, so the same draws serve every theta.
struct ImputationSet
{
  RowMatrix draws;
  Eigen::VectorXd row_mean;
  int kappa = 0;
  std::uint64_t seed = 0;

  Eigen::Index rows() const { return draws.rows(); }
  std::span<const double> row(Eigen::Index i) const { return row_span(draws, i); }
};

//! Inverse-CDF sampling on the grid with uniform jitter inside the chosen
//! cell. Row i uses its own stream derived from (seed, i).
ImputationSet impute(const CondDensityModel& model,
                     const RowMatrix& x_all,
                     int kappa,
                     std::uint64_t seed,
                     unsigned threads = 1);

using ConditionalSampler = std::function<double(std::span<const double> x, Rng& rng)>;

//! Imputation from a known conditional law (oracle nuisances).
ImputationSet impute_from_sampler(const ConditionalSampler& sampler,
                                  const RowMatrix& x_all,
                                  int kappa,
                                  std::uint64_t seed,
                                  unsigned threads = 1);

//! Row i = average of g(x_i, draw, theta) over the draws of row i (N x r).
Eigen::MatrixXd conditional_moment(const ImputationSet& imputations,
                                   const EstimatingFunction& g,
                                   const RowMatrix& x_all,
                                   const Eigen::VectorXd& theta);

//! Sum over columns of the root-mean-square difference.
double empirical_moment_error(const Eigen::MatrixXd& m_hat, const Eigen::MatrixXd& m0);

//! Mean of (p_hat(y_i | x_i) - p(y_i | x_i))^2 over the source rows.
double density_mse(const CondDensityModel& model,
                   const Dataset& data,
                   const std::function<double(double, std::span<const double>)>& oracle);

//! Mean over the rows of x of the grid integrated squared error of p_hat(. | x).
double grid_ise(const CondDensityModel& model,
                const RowMatrix& x,
                const std::function<double(double, std::span<const double>)>& oracle);

} // namespace shiftel
