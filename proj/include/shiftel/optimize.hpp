#pragma once

#include <Eigen/Dense>
#include <functional>

namespace shiftel {

struct ScalarMinimum
{
  double x = 0.0;
  double value = 0.0;
  int evaluations = 0;
};

//! Golden-section search for a minimum of f on [lo, hi]. Non-finite values
//! are treated as +inf.
ScalarMinimum golden_section(const std::function<double(double)>& f,
                             double lo,
                             double hi,
                             double tolerance,
                             int max_evaluations = 200);

struct VectorMinimum
{
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

//! Nelder-Mead simplex search started from `start` with per-coordinate
//! initial steps `step`.
VectorMinimum nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& start,
                          const Eigen::VectorXd& step,
                          double tolerance,
                          int max_evaluations = 2000);

} // namespace shiftel
