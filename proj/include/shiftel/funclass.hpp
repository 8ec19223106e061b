#pragma once

#include "shiftel/data.hpp"
#include "shiftel/divergence.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <variant>
#include <vector>

namespace shiftel {

enum class FunctionKind
{
  PolySieve,
  Mlp
};

enum class OptimizerMethod
{
  Adam,   //!< full-batch adaptive-moment gradient descent (any class)
  Newton  //!< damped Newton; linear-in-parameter classes only
};

struct OptimizerConfig
{
  OptimizerMethod method = OptimizerMethod::Adam;
  double learning_rate = 1e-2;
  int max_epochs = 2000;
  //! Stop once the best objective improved by less than this over `patience` epochs.
  double tolerance = 1e-6;
  int patience = 50;
  //! Objective is appended to the training history every `record_every` epochs.
  int record_every = 10;
};

//! One point of the capacity grid. For a sieve `size` is the total degree and
//! `depth` is 0; for an MLP `size` is the hidden width.
struct Capacity
{
  int size = 1;
  int depth = 0;

  bool operator==(const Capacity&) const = default;
};

struct FunctionClassConfig
{
  FunctionKind kind = FunctionKind::Mlp;
  std::vector<int> degree_or_width_candidates{ 16, 32, 64 };
  std::vector<int> depth_candidates{ 1, 2 };
  double r_min = 0.01;
  double r_max = 100.0;
  int cv_folds = 3;
  int max_basis = 200;
  OptimizerConfig optimizer{};
  std::uint64_t seed = 1;

  static FunctionClassConfig mlp();
  //! Sieve with degree grid {1, 2, 3} fitted by Newton.
  static FunctionClassConfig poly_sieve();

  void validate() const;
  //! Expanded capacity grid in declaration order.
  std::vector<Capacity> candidates() const;
};

//! Tensor-product Legendre basis of total degree <= `degree` on inputs mapped
//! to [-1, 1] by the training ranges.
struct PolySieveBasis
{
  int degree = 0;
  std::vector<std::vector<int>> exponents;
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  static PolySieveBasis build(const RowMatrix& training_inputs, int degree, int max_basis);
  Eigen::Index size() const { return static_cast<Eigen::Index>(exponents.size()); }
  Eigen::Index input_dim() const { return lo.size(); }
  //! k x size() design matrix.
  Eigen::MatrixXd design(const RowMatrix& x) const;
};

//! Fully connected ReLU network with `depth` hidden layers of `width` units
//! and a scalar linear output. Inputs are standardised column-wise.
struct MlpArchitecture
{
  int input_dim = 1;
  int width = 16;
  int depth = 1;
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static MlpArchitecture build(const RowMatrix& training_inputs, int width, int depth);
  Eigen::Index parameter_count() const;
  //! Outputs for every row of x.
  Eigen::VectorXd forward(const Eigen::VectorXd& params, const RowMatrix& x) const;
};

using Architecture = std::variant<PolySieveBasis, MlpArchitecture>;

//! A trained approximator r(x) = clamp(link(f(x)), r_min, r_max).
class FittedFunction
{
public:
  FittedFunction(Architecture arch,
                 Eigen::VectorXd params,
                 Link link,
                 double r_min,
                 double r_max);

  const Architecture& architecture() const { return arch_; }
  const Eigen::VectorXd& parameters() const { return params_; }
  Link link() const { return link_; }
  double r_min() const { return r_min_; }
  double r_max() const { return r_max_; }
  Eigen::Index input_dim() const;
  Capacity capacity() const;

  //! Basis or network output before link and clamp.
  Eigen::VectorXd raw_output(const RowMatrix& x) const;
  //! link, then clamp to [r_min, r_max]. Throws ShapeError on column mismatch.
  Eigen::VectorXd evaluate(const RowMatrix& x) const;

  // training record
  double objective = 0.0;
  std::vector<double> history;
  std::vector<double> cv_scores;
  int epochs = 0;

private:
  Architecture arch_;
  Eigen::VectorXd params_;
  Link link_;
  double r_min_;
  double r_max_;
};

double clamp_ratio(double raw, Link link, double r_min, double r_max);

inline Eigen::VectorXd evaluate(const FittedFunction& f, const RowMatrix& x)
{
  return f.evaluate(x);
}

//! Empirical criterion (1/n) sum l1(r(x_i)) - (1/m) sum l2(r(x_j)) of a
//! parameter vector, and its gradient. Exposed for gradient checks.
class ErmObjective
{
public:
  ErmObjective(const Architecture& arch,
               const DivergenceSpec& spec,
               const RowMatrix& x_source,
               const RowMatrix& x_target);

  double value(const Eigen::VectorXd& params) const;
  double value_and_gradient(const Eigen::VectorXd& params, Eigen::VectorXd& grad) const;
  //! Hessian; sieve only. Throws ContractError for an MLP.
  Eigen::MatrixXd hessian(const Eigen::VectorXd& params) const;
  Eigen::Index parameter_count() const;

private:
  Eigen::VectorXd outputs(const Eigen::VectorXd& params) const;
  Eigen::VectorXd output_weights(const Eigen::VectorXd& out, double* value) const;

  const Architecture& arch_;
  const DivergenceSpec& spec_;
  Eigen::Index n_;
  Eigen::Index m_;
  Eigen::MatrixXd design_;            // sieve: (n + m) x B
  Eigen::MatrixXd standardized_;      // mlp: d x (n + m)
};

//! Trains a single capacity on the full samples.
FittedFunction fit_capacity(const FunctionClassConfig& config,
                            const DivergenceSpec& spec,
                            const RowMatrix& x_source,
                            const RowMatrix& x_target,
                            const Capacity& capacity,
                            std::uint64_t seed);

//! Index of the capacity with the smallest held-out objective averaged over
//! folds. Ties go to the smaller parameter count.
std::size_t cv_select(const FunctionClassConfig& config,
                      const DivergenceSpec& spec,
                      const RowMatrix& x_source,
                      const RowMatrix& x_target,
                      std::vector<double>* scores = nullptr);

//! Empirical risk minimiser over the capacity grid (chosen by cv_select).
FittedFunction fit_erm(const FunctionClassConfig& config,
                       const DivergenceSpec& spec,
                       const RowMatrix& x_source,
                       const RowMatrix& x_target);

//! Held-out criterion of a fitted function (clamped outputs).
double empirical_objective(const FittedFunction& f,
                           const DivergenceSpec& spec,
                           const RowMatrix& x_source,
                           const RowMatrix& x_target);

std::string to_string(FunctionKind kind);
FunctionKind parse_function_kind(std::string_view s);
std::string to_string(OptimizerMethod m);
OptimizerMethod parse_optimizer_method(std::string_view s);

} // namespace shiftel
