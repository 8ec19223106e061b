#include "shiftel/el.hpp"
#include "shiftel/error.hpp"
#include "shiftel/optimize.hpp"
#include "shiftel/parallel.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace shiftel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// log continued by its second-order expansion below eps
double log_star(double z, double eps)
{
  if (z >= eps)
    return std::log(z);
  const double u = z / eps - 1.0;
  return std::log(eps) + u - 0.5 * u * u;
}

double log_star_d1(double z, double eps)
{
  if (z >= eps)
    return 1.0 / z;
  return (2.0 - z / eps) / eps;
}

// -(second derivative)
double log_star_w(double z, double eps)
{
  if (z >= eps)
    return 1.0 / (z * z);
  return 1.0 / (eps * eps);
}

double dual_value(const Eigen::MatrixXd& psi, const Eigen::VectorXd& lambda, double eps)
{
  const Eigen::VectorXd z = (psi * lambda).array() + 1.0;
  double s = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i)
    s += log_star(z(i), eps);
  return s;
}

double type7_quantile(std::vector<double> v, double q)
{
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::pair<double, double> default_bracket(const Dataset& data, const ELConfig& config)
{
  if (config.bracket)
    return *config.bracket;
  const Eigen::VectorXd& y = data.source_y();
  std::vector<double> v(y.data(), y.data() + y.size());
  const double lo = type7_quantile(v, config.lower_quantile);
  const double hi = type7_quantile(v, config.upper_quantile);
  const double pad = config.bracket_expand * (hi - lo);
  return { lo - pad, hi + pad };
}

} // namespace

void ELConfig::validate() const
{
  if (!(tolerance > 0.0) || max_iter < 1 || max_halvings < 1)
    throw ConfigError("EL inner solver settings must be positive");
  if (grid_points < 3)
    throw ConfigError("EL search grid needs at least 3 points");
  if (!(lower_quantile >= 0.0 && lower_quantile < upper_quantile && upper_quantile <= 1.0))
    throw ConfigError("EL bracket quantiles must satisfy 0 <= lower < upper <= 1");
  if (!(outer_tolerance > 0.0) || !(crossing_tolerance > 0.0))
    throw ConfigError("EL tolerances must be positive");
  if (bracket && !(bracket->first <= bracket->second))
    throw ConfigError("EL bracket must satisfy lo <= hi");
}

ELSolution solve_lambda(const Eigen::MatrixXd& psi, const ELConfig& config)
{
  const Eigen::Index rows = psi.rows();
  const Eigen::Index r = psi.cols();
  if (r < 1 || rows < r + 1)
    throw ConfigError("EL needs more moment rows than moment components");
  if (!psi.allFinite())
    throw NumericError("moment matrix contains non-finite entries");

  ELSolution sol;
  sol.lambda = Eigen::VectorXd::Zero(r);
  sol.dual_path.push_back(0.0);
  const double eps = 1.0 / static_cast<double>(rows);

  const auto finish = [&](const Eigen::VectorXd& z) {
    sol.weights = (z.array() * static_cast<double>(rows)).inverse();
    double s = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i)
      s += log_star(z(i), eps);
    sol.log_el = -s;
  };

  if (psi.cwiseAbs().maxCoeff() == 0.0) {
    // zero is the only point of the hull and satisfies the constraint
    sol.converged = true;
    finish(Eigen::VectorXd::Ones(rows));
    return sol;
  }
  if (r == 1) {
    const double lo = psi.col(0).minCoeff();
    const double hi = psi.col(0).maxCoeff();
    if (!(lo < 0.0 && hi > 0.0))
      throw ConvexHullViolation("zero lies outside the convex hull of the moment rows");
  }

  double value = 0.0;
  Eigen::VectorXd z = Eigen::VectorXd::Ones(rows);
  for (int it = 0; it < config.max_iter; ++it) {
    Eigen::VectorXd d1(rows), w(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      d1(i) = log_star_d1(z(i), eps);
      w(i) = log_star_w(z(i), eps);
    }
    const Eigen::VectorXd grad = psi.transpose() * d1;
    sol.gradient_norm = grad.lpNorm<Eigen::Infinity>() / static_cast<double>(rows);
    sol.iterations = it;
    if (sol.gradient_norm <= config.tolerance) {
      sol.converged = true;
      break;
    }
    const Eigen::MatrixXd hess = psi.transpose() * w.asDiagonal() * psi;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    const Eigen::VectorXd diag = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || !(diag.minCoeff() > 1e-13 * diag.cwiseAbs().maxCoeff()))
      throw NumericError("moment rows are collinear; the EL Hessian is singular");
    const Eigen::VectorXd step = ldlt.solve(grad);

    // near the optimum the dual changes by less than its rounding error
    const double slack = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(value));
    double t = 1.0;
    bool accepted = false;
    Eigen::VectorXd trial;
    double trial_value = value;
    for (int h = 0; h < config.max_halvings; ++h) {
      trial = sol.lambda + t * step;
      trial_value = dual_value(psi, trial, eps);
      if (std::isfinite(trial_value) && trial_value >= value - slack) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted || trial == sol.lambda)
      break;
    sol.lambda = trial;
    value = trial_value;
    sol.dual_path.push_back(value);
    z = (psi * sol.lambda).array() + 1.0;

    if (r > 1) {
      const Eigen::VectorXd s = psi * sol.lambda;
      if (s.minCoeff() >= 0.0 && s.maxCoeff() > 0.0)
        throw ConvexHullViolation("zero lies outside the convex hull of the moment rows");
    }
    if (z.maxCoeff() > 1e12)
      throw ConvexHullViolation("EL multiplier diverges; zero is on or outside the convex hull");
  }
  if (!sol.converged) {
    Eigen::VectorXd d1(rows);
    for (Eigen::Index i = 0; i < rows; ++i)
      d1(i) = log_star_d1(z(i), eps);
    sol.gradient_norm = (psi.transpose() * d1).lpNorm<Eigen::Infinity>() / static_cast<double>(rows);
    sol.converged = sol.gradient_norm <= config.tolerance;
  }
  // a genuine solution has every weight at most one, i.e. z_i >= 1 / rows
  if (sol.converged && z.minCoeff() < eps * (1.0 - 1e-9))
    throw ConvexHullViolation("zero lies on or outside the convex hull of the moment rows");
  finish(z);
  return sol;
}

ELSolution solve_lambda(const MomentMatrix& moments, const ELConfig& config)
{
  return solve_lambda(moments.values, config);
}

double profile_el(const Dataset& data,
                  const Nuisances& nuisances,
                  const EstimatingFunction& g,
                  const Eigen::VectorXd& theta,
                  MomentKind kind,
                  const ELConfig& config)
{
  const MomentMatrix mm = build_moments(kind, data, nuisances, g, theta);
  try {
    return solve_lambda(mm, config).ell();
  } catch (const ConvexHullViolation&) {
    return kInf;
  }
}

double InferenceResult::r_n(const Eigen::VectorXd& theta) const
{
  const double v = ell(theta);
  if (!std::isfinite(v))
    return kInf;
  return std::max(0.0, 2.0 * (v - ell_hat));
}

double InferenceResult::r_n(double theta) const
{
  return r_n(Eigen::VectorXd::Constant(1, theta));
}

InferenceResult maximize_el(const Dataset& data,
                            const Nuisances& nuisances,
                            const EstimatingFunction& g,
                            MomentKind kind,
                            const ELConfig& config)
{
  config.validate();
  InferenceResult res;
  res.kind = kind;
  res.ell = [data, nuisances, g, kind, config](const Eigen::VectorXd& theta) {
    return profile_el(data, nuisances, g, theta, kind, config);
  };
  const auto& ell = res.ell;
  res.bracket = default_bracket(data, config);
  const auto [lo, hi] = res.bracket;

  if (g.p() == 1) {
    const auto f = [&](double t) {
      ++res.evaluations;
      return ell(Eigen::VectorXd::Constant(1, t));
    };
    double best_x = lo;
    double best_v = kInf;
    if (hi - lo <= 0.0) {
      best_v = f(lo);
    } else {
      const int G = config.grid_points;
      std::vector<double> xs(static_cast<std::size_t>(G));
      std::vector<double> vs(static_cast<std::size_t>(G));
      int best = -1;
      for (int k = 0; k < G; ++k) {
        xs[k] = lo + (hi - lo) * k / (G - 1.0);
        vs[k] = f(xs[k]);
        if (std::isfinite(vs[k]) && (best < 0 || vs[k] < vs[best]))
          best = k;
      }
      if (best < 0)
        throw EstimationError("no feasible parameter value on the search grid [" +
                              std::to_string(lo) + ", " + std::to_string(hi) +
                              "]; widen the bracket");
      best_x = xs[best];
      best_v = vs[best];
      const double a = xs[std::max(0, best - 1)];
      const double b = xs[std::min(G - 1, best + 1)];
      const auto refined = golden_section(f, a, b, config.outer_tolerance * std::max(1.0, hi - lo));
      if (refined.value < best_v) {
        best_x = refined.x;
        best_v = refined.value;
      }
    }
    if (!std::isfinite(best_v))
      throw EstimationError("the EL objective is infeasible at the only candidate parameter");
    res.theta_hat = Eigen::VectorXd::Constant(1, best_x);
    res.ell_hat = best_v;
  } else {
    const double mid = 0.5 * (lo + hi);
    const double width = std::max(hi - lo, 1e-3);
    const auto fv = [&](const Eigen::VectorXd& t) {
      ++res.evaluations;
      return ell(t);
    };
    const auto nm = nelder_mead(fv,
                                Eigen::VectorXd::Constant(g.p(), mid),
                                Eigen::VectorXd::Constant(g.p(), 0.25 * width),
                                config.outer_tolerance * std::max(1.0, width),
                                config.simplex_max_evaluations);
    if (!std::isfinite(nm.value))
      throw EstimationError("no feasible parameter value found by the simplex search");
    res.theta_hat = nm.x;
    res.ell_hat = nm.value;
  }
  res.solution = solve_lambda(build_moments(kind, data, nuisances, g, res.theta_hat), config);
  return res;
}

InferenceResult drw_estimate(const Dataset& data,
                             const RatioModel& r_hat,
                             const EstimatingFunction& g,
                             const ELConfig& config)
{
  Nuisances nu;
  nu.source_ratio = r_hat.evaluate(data.source_x());
  return maximize_el(data, nu, g, MomentKind::Drw, config);
}

double chi_squared_quantile(double level, int df)
{
  if (!(level > 0.0 && level < 1.0))
    throw ConfigError("confidence level must lie in (0, 1)");
  if (df < 1)
    throw ConfigError("chi-squared degrees of freedom must be positive");
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(df), level);
}

Interval wilks_ci(const InferenceResult& result, double level, const ELConfig& config)
{
  if (result.kind == MomentKind::Drw)
    throw ContractError("the DRW likelihood ratio is not chi-squared calibrated; use bootstrap_ci");
  if (result.theta_hat.size() != 1)
    throw ContractError("interval inversion is only available for a scalar parameter");
  const double q = chi_squared_quantile(level, 1);
  const double center = result.theta_hat(0);
  const double width = result.bracket.second - result.bracket.first;
  const double step0 =
    width > 0.0 ? width / (config.grid_points - 1.0) : 1e-3 * (1.0 + std::abs(center));

  const auto side = [&](double dir) {
    double inside = center;
    double s = step0;
    double outside = center + dir * s;
    int widenings = 0;
    while (result.r_n(outside) <= q) {
      inside = outside;
      s *= 2.0;
      outside = center + dir * s;
      if (++widenings > config.max_widenings)
        throw InferenceError("the EL ratio never crosses the chi-squared threshold");
    }
    const double resolution = 1e-12 * (1.0 + std::abs(center) + s);
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (inside + outside);
      const double v = result.r_n(mid);
      if (std::isfinite(v) && std::abs(v - q) <= config.crossing_tolerance)
        return mid;
      if (v <= q)
        inside = mid;
      else
        outside = mid;
      if (std::abs(outside - inside) <= resolution)
        break;
    }
    return 0.5 * (inside + outside);
  };
  Interval ci;
  ci.lo = side(-1.0);
  ci.hi = side(1.0);
  return ci;
}

Dataset resample(const Dataset& data, Rng& rng)
{
  const Eigen::Index n = data.n();
  const Eigen::Index m = data.m();
  RowMatrix xs(n, data.d());
  Eigen::VectorXd ys(n);
  RowMatrix xt(m, data.d());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n));
    xs.row(i) = data.source_x().row(k);
    ys(i) = data.source_y()(k);
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto k = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(m));
    xt.row(j) = data.target_x().row(k);
  }
  return Dataset(std::move(xs), std::move(ys), std::move(xt));
}

BootstrapResult bootstrap_ci(const Dataset& data,
                             const ResampleEstimator& estimator,
                             int replicates,
                             double level,
                             std::uint64_t seed,
                             unsigned threads)
{
  if (replicates < 50)
    throw ConfigError("bootstrap needs at least 50 resamples");
  if (!(level > 0.0 && level < 1.0))
    throw ConfigError("confidence level must lie in (0, 1)");
  std::vector<double> values(static_cast<std::size_t>(replicates), std::nan(""));
  std::vector<std::string> errors(static_cast<std::size_t>(replicates));
  parallel_for(static_cast<std::size_t>(replicates), threads, [&](std::size_t b) {
    Rng rng(derive_seed(seed, b));
    try {
      const Dataset rs = resample(data, rng);
      values[b] = estimator(rs, rng());
      if (!std::isfinite(values[b]))
        errors[b] = "non-finite estimate";
    } catch (const Error& e) {
      errors[b] = e.what();
    }
  });
  BootstrapResult out;
  for (std::size_t b = 0; b < values.size(); ++b) {
    if (errors[b].empty()) {
      out.estimates.push_back(values[b]);
    } else {
      ++out.failures;
      out.failure_log.push_back("resample " + std::to_string(b) + ": " + errors[b]);
    }
  }
  if (out.failures * 5 > replicates) {
    std::string msg = std::to_string(out.failures) + " of " + std::to_string(replicates) +
                      " bootstrap resamples failed";
    if (!out.failure_log.empty())
      msg += "; first: " + out.failure_log.front();
    throw InferenceError(msg);
  }
  const double a = 0.5 * (1.0 - level);
  out.interval.lo = type7_quantile(out.estimates, a);
  out.interval.hi = type7_quantile(out.estimates, 1.0 - a);
  return out;
}

std::string to_string(CiMethod m)
{
  switch (m) {
    case CiMethod::None:
      return "none";
    case CiMethod::WilksChi2:
      return "wilks";
    case CiMethod::Bootstrap:
      return "bootstrap";
  }
  return "none";
}

CiMethod parse_ci_method(std::string_view s)
{
  if (s == "none")
    return CiMethod::None;
  if (s == "wilks")
    return CiMethod::WilksChi2;
  if (s == "bootstrap")
    return CiMethod::Bootstrap;
  throw ConfigError("unknown interval method '" + std::string(s) + "' (expected wilks, bootstrap or none)");
}

} // namespace shiftel
