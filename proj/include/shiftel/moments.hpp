#pragma once

#include "shiftel/cond_density.hpp"
#include "shiftel/data.hpp"
#include "shiftel/density_ratio.hpp"
#include "shiftel/estimating.hpp"

#include <functional>
#include <memory>

namespace shiftel {

enum class MomentKind
{
  Drw,        //!< r(x) g on the n source rows
  Orthogonal, //!< doubly robust moment on all N rows
  Imputation  //!< m(x, theta) / tau on the m target rows
};

struct MomentMatrix
{
  Eigen::MatrixXd values;
  MomentKind kind = MomentKind::Orthogonal;
  Eigen::VectorXd theta;
};

//! Fitted nuisances evaluated once per dataset: ratio values at the source
//! rows and imputations at all N rows (source rows first).
struct Nuisances
{
  Eigen::VectorXd source_ratio;
  std::shared_ptr<const ImputationSet> imputations;

  static Nuisances make(const Dataset& data,
                        const RatioModel& ratio,
                        std::shared_ptr<const ImputationSet> imputations);
};

MomentMatrix drw_moments(const Dataset& data,
                         const Eigen::VectorXd& source_ratio,
                         const EstimatingFunction& g,
                         const Eigen::VectorXd& theta);

MomentMatrix drw_moments(const Dataset& data,
                         const RatioModel& r_hat,
                         const EstimatingFunction& g,
                         const Eigen::VectorXd& theta);

//! Source row i: r_i (g(Z_i, theta) - m_i) / (1 - tau); target row j: m_j / tau,
//! where m_all holds the conditional moment at all N rows (source first).
MomentMatrix orthogonal_moments(const Dataset& data,
                                const Eigen::VectorXd& source_ratio,
                                const Eigen::MatrixXd& m_all,
                                const EstimatingFunction& g,
                                const Eigen::VectorXd& theta);

MomentMatrix orthogonal_moments(const Dataset& data,
                                const Nuisances& nuisances,
                                const EstimatingFunction& g,
                                const Eigen::VectorXd& theta);

MomentMatrix orthogonal_moments(const Dataset& data,
                                const RatioModel& r_hat,
                                const ImputationSet& imputations,
                                const EstimatingFunction& g,
                                const Eigen::VectorXd& theta);

//! Target rows m(X_j, theta) / tau only.
MomentMatrix imputation_moments(const Dataset& data,
                                const Nuisances& nuisances,
                                const EstimatingFunction& g,
                                const Eigen::VectorXd& theta);

//! Column means and their standard errors. For orthogonal matrices the
//! source and target blocks are treated as independent samples.
struct MomentMean
{
  Eigen::VectorXd mean;
  Eigen::VectorXd standard_error;
};
MomentMean moment_mean(const MomentMatrix& moments, Eigen::Index n_source);

//! Known nuisance functions (simulation only).
struct NuisanceFunctions
{
  std::function<double(std::span<const double>)> ratio;
  //! Conditional moment E{g(Z, theta) | x}, length r.
  std::function<Eigen::VectorXd(std::span<const double>, const Eigen::VectorXd&)> moment;
};

struct OrthogonalityGap
{
  double orthogonal = 0.0;
  double drw = 0.0;
};

//! Central finite-difference derivative, in t, of the sample-mean moment at
//! (eta0 + t h). `h` uses the same layout as eta0; a missing component means
//! no perturbation. Euclidean norms are returned for r > 1.
OrthogonalityGap orthogonality_gap(const Dataset& sample,
                                   const EstimatingFunction& g,
                                   const Eigen::VectorXd& theta0,
                                   const NuisanceFunctions& eta0,
                                   const NuisanceFunctions& h,
                                   double t);

struct VarianceEstimates
{
  Eigen::MatrixXd gamma; //!< r x p
  Eigen::MatrixXd omega; //!< r x r
  Eigen::MatrixXd sigma; //!< p x p, empty when not invertible
};

//! Finite-difference step 1.06 sd(y) N^(-1/5) used for nonsmooth g.
double nonsmooth_step(const Dataset& data);

//! Plug-in Gamma, Omega and Sigma = (Gamma' Omega^-1 Gamma)^-1 at theta_hat.
//! `kind` selects which moment the estimates refer to. Throws NumericError
//! when Omega is singular.
VarianceEstimates variance_estimates(MomentKind kind,
                                     const Dataset& data,
                                     const Nuisances& nuisances,
                                     const EstimatingFunction& g,
                                     const Eigen::VectorXd& theta_hat);

//! Dispatch on kind.
MomentMatrix build_moments(MomentKind kind,
                           const Dataset& data,
                           const Nuisances& nuisances,
                           const EstimatingFunction& g,
                           const Eigen::VectorXd& theta);

std::string to_string(MomentKind kind);

} // namespace shiftel
