#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <string>
#include <string_view>

namespace shiftel {

enum class EstimandKind
{
  Mean,
  Quantile,
  Custom
};

//! Moment function g(x, y, theta) with r components and p parameters.
class EstimatingFunction
{
public:
  using Evaluator = std::function<void(std::span<const double> x,
                                       double y,
                                       const Eigen::VectorXd& theta,
                                       Eigen::Ref<Eigen::VectorXd> out)>;
  //! Writes the r x p derivative of g with respect to theta.
  using Jacobian = std::function<void(std::span<const double> x,
                                      double y,
                                      const Eigen::VectorXd& theta,
                                      Eigen::Ref<Eigen::MatrixXd> out)>;

  //! g = y - theta
  static EstimatingFunction mean();
  //! g = 1{y <= theta} - alpha
  static EstimatingFunction quantile(double alpha);
  //! Requires r >= p >= 1.
  static EstimatingFunction custom(std::string name,
                                   int r,
                                   int p,
                                   Evaluator g,
                                   Jacobian jacobian = {},
                                   bool smooth = true);

  EstimandKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  int r() const { return r_; }
  int p() const { return p_; }
  bool smooth() const { return smooth_; }
  double alpha() const { return alpha_; }
  bool has_jacobian() const { return static_cast<bool>(jacobian_) || kind_ == EstimandKind::Mean; }

  void evaluate(std::span<const double> x,
                double y,
                const Eigen::VectorXd& theta,
                Eigen::Ref<Eigen::VectorXd> out) const;
  void jacobian(std::span<const double> x,
                double y,
                const Eigen::VectorXd& theta,
                Eigen::Ref<Eigen::MatrixXd> out) const;

  //! Average of g over responses `draws` (sorted ascending) at fixed x.
  //! `draws_mean` is their mean; used by the closed forms for Mean and Quantile.
  void average(std::span<const double> x,
               std::span<const double> draws,
               double draws_mean,
               const Eigen::VectorXd& theta,
               Eigen::Ref<Eigen::VectorXd> out) const;

private:
  EstimatingFunction() = default;

  EstimandKind kind_ = EstimandKind::Mean;
  std::string name_;
  int r_ = 1;
  int p_ = 1;
  bool smooth_ = true;
  double alpha_ = 0.5;
  Evaluator g_;
  Jacobian jacobian_;
};

//! "mean" or "quantile:<alpha>" (also "median").
EstimatingFunction parse_estimand(std::string_view s);
std::string estimand_label(const EstimatingFunction& g);

} // namespace shiftel
