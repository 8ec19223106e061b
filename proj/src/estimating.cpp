#include "shiftel/estimating.hpp"
#include "shiftel/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace shiftel {

EstimatingFunction EstimatingFunction::mean()
{
  EstimatingFunction g;
  g.kind_ = EstimandKind::Mean;
  g.name_ = "mean";
  return g;
}

EstimatingFunction EstimatingFunction::quantile(double alpha)
{
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigError("quantile level must lie in (0, 1)");
  EstimatingFunction g;
  g.kind_ = EstimandKind::Quantile;
  g.alpha_ = alpha;
  g.smooth_ = false;
  std::ostringstream os;
  os << "quantile:" << alpha;
  g.name_ = os.str();
  return g;
}

EstimatingFunction EstimatingFunction::custom(std::string name,
                                              int r,
                                              int p,
                                              Evaluator eval,
                                              Jacobian jacobian,
                                              bool smooth)
{
  if (p < 1 || r < p)
    throw ConfigError("estimating function needs r >= p >= 1");
  if (!eval)
    throw ConfigError("estimating function needs an evaluator");
  EstimatingFunction g;
  g.kind_ = EstimandKind::Custom;
  g.name_ = std::move(name);
  g.r_ = r;
  g.p_ = p;
  g.smooth_ = smooth;
  g.g_ = std::move(eval);
  g.jacobian_ = std::move(jacobian);
  return g;
}

void EstimatingFunction::evaluate(std::span<const double> x,
                                  double y,
                                  const Eigen::VectorXd& theta,
                                  Eigen::Ref<Eigen::VectorXd> out) const
{
  switch (kind_) {
    case EstimandKind::Mean:
      out(0) = y - theta(0);
      return;
    case EstimandKind::Quantile:
      out(0) = (y <= theta(0) ? 1.0 : 0.0) - alpha_;
      return;
    case EstimandKind::Custom:
      g_(x, y, theta, out);
      return;
  }
}

void EstimatingFunction::jacobian(std::span<const double> x,
                                  double y,
                                  const Eigen::VectorXd& theta,
                                  Eigen::Ref<Eigen::MatrixXd> out) const
{
  if (kind_ == EstimandKind::Mean) {
    out(0, 0) = -1.0;
    return;
  }
  if (!jacobian_)
    throw ContractError("estimating function '" + name_ + "' has no analytic Jacobian");
  jacobian_(x, y, theta, out);
}

void EstimatingFunction::average(std::span<const double> x,
                                 std::span<const double> draws,
                                 double draws_mean,
                                 const Eigen::VectorXd& theta,
                                 Eigen::Ref<Eigen::VectorXd> out) const
{
  switch (kind_) {
    case EstimandKind::Mean:
      out(0) = draws_mean - theta(0);
      return;
    case EstimandKind::Quantile: {
      const auto below = std::upper_bound(draws.begin(), draws.end(), theta(0)) - draws.begin();
      out(0) = static_cast<double>(below) / static_cast<double>(draws.size()) - alpha_;
      return;
    }
    case EstimandKind::Custom: {
      out.setZero();
      Eigen::VectorXd tmp(r_);
      for (double y : draws) {
        g_(x, y, theta, tmp);
        out += tmp;
      }
      out /= static_cast<double>(draws.size());
      return;
    }
  }
}

EstimatingFunction parse_estimand(std::string_view s)
{
  if (s == "mean")
    return EstimatingFunction::mean();
  if (s == "median")
    return EstimatingFunction::quantile(0.5);
  constexpr std::string_view prefix = "quantile:";
  if (s.substr(0, prefix.size()) == prefix) {
    const auto rest = s.substr(prefix.size());
    double alpha = 0.0;
    auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), alpha);
    if (ec != std::errc() || ptr != rest.data() + rest.size())
      throw ConfigError("cannot read quantile level from '" + std::string(s) + "'");
    return EstimatingFunction::quantile(alpha);
  }
  throw ConfigError("unknown estimand '" + std::string(s) +
                    "' (expected mean, median or quantile:<alpha>)");
}

std::string estimand_label(const EstimatingFunction& g)
{
  return g.name();
}

} // namespace shiftel
