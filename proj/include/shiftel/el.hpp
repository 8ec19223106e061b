#pragma once

#include "shiftel/moments.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>

namespace shiftel {

struct ELConfig
{
  // inner Lagrange-multiplier solver
  int max_iter = 100;
  //! Convergence when the mean of Psi_i / (1 + lambda' Psi_i) has sup-norm below this.
  double tolerance = 1e-9;
  int max_halvings = 50;

  // outer parameter search
  int grid_points = 41;
  double lower_quantile = 0.01;
  double upper_quantile = 0.99;
  //! The quantile range is widened by this fraction on each side.
  double bracket_expand = 0.1;
  std::optional<std::pair<double, double>> bracket;
  double outer_tolerance = 1e-7;
  int simplex_max_evaluations = 2000;

  // interval inversion
  int max_widenings = 30;
  double crossing_tolerance = 1e-3;

  void validate() const;
};

struct ELSolution
{
  Eigen::VectorXd lambda;
  Eigen::VectorXd weights;
  //! sum log(rows * p_i) = -sum log(1 + lambda' Psi_i); at most 0.
  double log_el = 0.0;
  bool converged = false;
  int iterations = 0;
  //! sup-norm of the mean of Psi_i / (1 + lambda' Psi_i).
  double gradient_norm = 0.0;
  //! Dual objective after each accepted iterate (starts at 0).
  std::vector<double> dual_path;

  //! ell = sum log(1 + lambda' Psi_i).
  double ell() const { return -log_el; }
};

//! Maximises sum log*(1 + lambda' Psi_i) by damped Newton, where log* is the
//! logarithm continued quadratically below 1 / rows. Throws
//! ConvexHullViolation when zero is not inside the convex hull of the rows.
ELSolution solve_lambda(const Eigen::MatrixXd& psi, const ELConfig& config = {});
ELSolution solve_lambda(const MomentMatrix& moments, const ELConfig& config = {});

//! ell_N(theta) = sum log(1 + lambda' Psi_i); +inf when theta is infeasible.
double profile_el(const Dataset& data,
                  const Nuisances& nuisances,
                  const EstimatingFunction& g,
                  const Eigen::VectorXd& theta,
                  MomentKind kind = MomentKind::Orthogonal,
                  const ELConfig& config = {});

enum class CiMethod
{
  None,
  WilksChi2,
  Bootstrap
};

struct Interval
{
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  bool contains(double v) const { return lo <= v && v <= hi; }
};

struct InferenceResult
{
  Eigen::VectorXd theta_hat;
  double ell_hat = 0.0;
  MomentKind kind = MomentKind::Orthogonal;
  ELSolution solution;
  //! ell_N as a function of theta (+inf when infeasible).
  std::function<double(const Eigen::VectorXd&)> ell;
  //! Search bracket used for scalar parameters.
  std::pair<double, double> bracket{ 0.0, 0.0 };
  CiMethod ci_method = CiMethod::None;
  std::optional<Interval> ci;
  double level = 0.95;
  int evaluations = 0;

  //! R_N(theta) = 2 ell_N(theta) - 2 ell_N(theta_hat), floored at 0.
  double r_n(const Eigen::VectorXd& theta) const;
  double r_n(double theta) const;
};

//! Minimises ell_N over theta: coarse grid then golden section for p = 1,
//! Nelder-Mead for p > 1. Throws EstimationError when no grid point is feasible.
InferenceResult maximize_el(const Dataset& data,
                            const Nuisances& nuisances,
                            const EstimatingFunction& g,
                            MomentKind kind = MomentKind::Orthogonal,
                            const ELConfig& config = {});

//! DRW moment with the same machinery. Wilks intervals are not available.
InferenceResult drw_estimate(const Dataset& data,
                             const RatioModel& r_hat,
                             const EstimatingFunction& g,
                             const ELConfig& config = {});

//! Upper `level` quantile of chi-squared with `df` degrees of freedom.
double chi_squared_quantile(double level, int df);

//! Inverts R_N(theta) <= chi2_{p, level}. Scalar parameters only; throws
//! ContractError for DRW results and InferenceError when no crossing is found.
Interval wilks_ci(const InferenceResult& result, double level, const ELConfig& config = {});

//! Estimator re-run on a resampled dataset; receives a seed for its own
//! randomness.
using ResampleEstimator = std::function<double(const Dataset&, std::uint64_t seed)>;

struct BootstrapResult
{
  Interval interval;
  std::vector<double> estimates;
  int failures = 0;
  std::vector<std::string> failure_log;
};

//! Percentile interval from B resamples of the source and target rows (drawn
//! independently, sizes kept). Throws InferenceError when more than 20% of
//! resamples fail.
BootstrapResult bootstrap_ci(const Dataset& data,
                             const ResampleEstimator& estimator,
                             int replicates,
                             double level,
                             std::uint64_t seed,
                             unsigned threads = 1);

//! Resample of the rows of data drawn with replacement.
Dataset resample(const Dataset& data, Rng& rng);

std::string to_string(CiMethod m);
CiMethod parse_ci_method(std::string_view s);

} // namespace shiftel
