#include "shiftel/density_ratio.hpp"
#include "shiftel/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace shiftel {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const double kLogMinDensity = std::log(std::numeric_limits<double>::min());

void check_columns(const RowMatrix& x, Eigen::Index d)
{
  if (x.cols() != d)
    throw ShapeError("ratio model expects " + std::to_string(d) + " columns, got " +
                     std::to_string(x.cols()));
}

double log_sum_exp(const double* v, Eigen::Index k)
{
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < k; ++i)
    mx = std::max(mx, v[i]);
  if (!std::isfinite(mx))
    return mx;
  double s = 0.0;
  for (Eigen::Index i = 0; i < k; ++i)
    s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

// Log of the Gaussian product-kernel density estimate built on `sample`,
// evaluated at every row of x.
Eigen::VectorXd log_kde(const RowMatrix& sample, const Eigen::VectorXd& h, const RowMatrix& x)
{
  const auto d = sample.cols();
  const auto k = sample.rows();
  const double norm = h.array().log().sum() + 0.5 * d * std::log(2.0 * std::numbers::pi) +
                      std::log(static_cast<double>(k));
  const Eigen::ArrayXd inv_h = h.array().inverse();
  Eigen::VectorXd out(x.rows());
  std::vector<double> terms(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index s = 0; s < k; ++s) {
      double q = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double u = (x(i, j) - sample(s, j)) * inv_h(j);
        q += u * u;
      }
      terms[static_cast<std::size_t>(s)] = -0.5 * q;
    }
    out(i) = log_sum_exp(terms.data(), k) - norm;
  }
  return out;
}

Eigen::VectorXd column_sd(const RowMatrix& x)
{
  const Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::VectorXd sd(x.cols());
  const double denom = std::max<double>(1.0, static_cast<double>(x.rows() - 1));
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    sd(j) = std::sqrt((x.col(j).array() - mean(j)).square().sum() / denom);
  return sd;
}

// Held-out mean log-likelihood for each multiplier in `grid`, given squared
// scaled distances between held-out rows (rows of dist) and training rows.
void accumulate_scores(const Eigen::MatrixXd& dist,
                       const std::vector<double>& grid,
                       double log_scale_sum,
                       Eigen::Index d,
                       bool exclude_diagonal,
                       std::vector<double>& scores)
{
  const auto k = dist.cols() - (exclude_diagonal ? 1 : 0);
  std::vector<double> terms(static_cast<std::size_t>(dist.cols()));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double c = grid[g];
    const double inv = -0.5 / (c * c);
    const double norm = d * std::log(c) + log_scale_sum +
                        0.5 * d * std::log(2.0 * std::numbers::pi) +
                        std::log(static_cast<double>(k));
    double total = 0.0;
    for (Eigen::Index i = 0; i < dist.rows(); ++i) {
      Eigen::Index t = 0;
      for (Eigen::Index s = 0; s < dist.cols(); ++s) {
        if (exclude_diagonal && s == i)
          continue;
        terms[static_cast<std::size_t>(t++)] = inv * dist(i, s);
      }
      total += log_sum_exp(terms.data(), t) - norm;
    }
    scores[g] += total;
  }
}

Eigen::MatrixXd scaled_sq_dist(const RowMatrix& a, const RowMatrix& b, const Eigen::VectorXd& s)
{
  Eigen::MatrixXd out(a.rows(), b.rows());
  const Eigen::ArrayXd inv = s.array().inverse();
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index k = 0; k < b.rows(); ++k) {
      double q = 0.0;
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        const double u = (a(i, j) - b(k, j)) * inv(j);
        q += u * u;
      }
      out(i, k) = q;
    }
  return out;
}

std::vector<double> default_grid()
{
  std::vector<double> g(20);
  for (int i = 0; i < 20; ++i)
    g[i] = 0.2 * std::pow(15.0, i / 19.0);
  return g;
}

double sigmoid(double t)
{
  return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

} // namespace

// ---------------------------------------------------------------------------

Eigen::VectorXd KernelRatio::evaluate(const RowMatrix& x) const
{
  check_columns(x, source_x.cols());
  const Eigen::VectorXd lq = log_kde(target_x, bandwidth_target, x);
  const Eigen::VectorXd lp = log_kde(source_x, bandwidth_source, x);
  Eigen::VectorXd r(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    // a source estimate that underflows means x is outside the source support
    if (lp(i) < kLogMinDensity) {
      r(i) = r_max;
      continue;
    }
    r(i) = std::clamp(std::exp(lq(i) - lp(i)), r_min, r_max);
  }
  return r;
}

Eigen::VectorXd ClassifierRatio::probability(const RowMatrix& x) const
{
  const Eigen::VectorXd eta = basis.design(x) * coefficients;
  return eta.unaryExpr([](double t) { return sigmoid(t); });
}

Eigen::VectorXd ClassifierRatio::evaluate(const RowMatrix& x) const
{
  check_columns(x, basis.input_dim());
  const Eigen::VectorXd eta = basis.design(x) * coefficients;
  const double log_prior = std::log((1.0 - tau) / tau);
  // odds pi / (1 - pi) = exp(eta)
  return eta.unaryExpr([&](double t) { return std::clamp(std::exp(t + log_prior), r_min, r_max); });
}

// ---------------------------------------------------------------------------

RatioModel::RatioModel(Impl impl, DivergenceSpec spec, double objective_value, double divergence)
  : impl_(std::move(impl))
  , spec_(std::move(spec))
  , objective_(objective_value)
  , divergence_(divergence)
{
}

RatioModel RatioModel::from_function(std::string name,
                                     std::function<double(std::span<const double>)> fn,
                                     Eigen::Index input_dim)
{
  if (!fn)
    throw ConfigError("ratio function is empty");
  return RatioModel(FunctionRatio{ std::move(name), std::move(fn), input_dim },
                    DivergenceSpec::make(DivergenceId::KL),
                    kNaN,
                    kNaN);
}

RatioModel RatioModel::constant_one(Eigen::Index input_dim)
{
  return from_function("one", [](std::span<const double>) { return 1.0; }, input_dim);
}

RatioMethod RatioModel::method() const
{
  switch (impl_.index()) {
    case 0:
      return RatioMethod::Ddr;
    case 1:
      return RatioMethod::KernelSmoothing;
    case 2:
      return RatioMethod::ProbClassification;
    default:
      return RatioMethod::Function;
  }
}

Eigen::Index RatioModel::input_dim() const
{
  return std::visit(
    [](const auto& m) -> Eigen::Index {
      using T = std::decay_t<decltype(m)>;
      if constexpr (std::is_same_v<T, FittedFunction>)
        return m.input_dim();
      else if constexpr (std::is_same_v<T, KernelRatio>)
        return m.source_x.cols();
      else if constexpr (std::is_same_v<T, ClassifierRatio>)
        return m.basis.input_dim();
      else
        return m.input_dim;
    },
    impl_);
}

Eigen::VectorXd RatioModel::evaluate(const RowMatrix& x) const
{
  if (const auto* f = std::get_if<FunctionRatio>(&impl_)) {
    check_columns(x, f->input_dim);
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      out(i) = f->fn(row_span(x, i));
    return out;
  }
  return std::visit(
    [&](const auto& m) -> Eigen::VectorXd {
      using T = std::decay_t<decltype(m)>;
      if constexpr (std::is_same_v<T, FunctionRatio>)
        return {};
      else
        return m.evaluate(x);
    },
    impl_);
}

// ---------------------------------------------------------------------------

RatioModel fit_ddr(const Dataset& data, const DivergenceSpec& spec, const FunctionClassConfig& config)
{
  FittedFunction f = fit_erm(config, spec, data.source_x(), data.target_x());
  const double objective = f.objective;
  return RatioModel(std::move(f), spec, objective, divergence_estimate(spec, objective));
}

Eigen::VectorXd silverman_bandwidth(const RowMatrix& x)
{
  const Eigen::VectorXd sd = column_sd(x);
  for (Eigen::Index j = 0; j < sd.size(); ++j)
    if (!(sd(j) > 0.0))
      throw NumericError("kernel bandwidth is degenerate: column x" + std::to_string(j + 1) +
                         " has zero variance");
  const double d = static_cast<double>(x.cols());
  const double factor =
    std::pow(4.0 / ((d + 2.0) * static_cast<double>(x.rows())), 1.0 / (d + 4.0));
  return sd * factor;
}

double select_bandwidth(const RowMatrix& x, const KernelConfig& config)
{
  if (x.rows() < 2)
    throw ConfigError("kernel bandwidth selection needs at least two rows");
  const Eigen::VectorXd base = silverman_bandwidth(x);
  const std::vector<double> grid =
    config.bandwidth_grid.empty() ? default_grid() : config.bandwidth_grid;
  const double log_scale_sum = base.array().log().sum();
  std::vector<double> scores(grid.size(), 0.0);

  if (x.rows() <= config.loo_max) {
    accumulate_scores(scaled_sq_dist(x, x, base), grid, log_scale_sum, x.cols(), true, scores);
  } else {
    constexpr int folds = 5;
    for (int k = 0; k < folds; ++k) {
      std::vector<Eigen::Index> test;
      std::vector<Eigen::Index> train;
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        (i % folds == k ? test : train).push_back(i);
      RowMatrix xt(static_cast<Eigen::Index>(test.size()), x.cols());
      RowMatrix xr(static_cast<Eigen::Index>(train.size()), x.cols());
      for (std::size_t i = 0; i < test.size(); ++i)
        xt.row(static_cast<Eigen::Index>(i)) = x.row(test[i]);
      for (std::size_t i = 0; i < train.size(); ++i)
        xr.row(static_cast<Eigen::Index>(i)) = x.row(train[i]);
      accumulate_scores(scaled_sq_dist(xt, xr, base), grid, log_scale_sum, x.cols(), false, scores);
    }
  }
  const auto best = std::max_element(scores.begin(), scores.end()) - scores.begin();
  return grid[static_cast<std::size_t>(best)];
}

RatioModel fit_kernel_smoothing(const Dataset& data, const KernelConfig& config)
{
  if (!(config.r_min > 0.0 && config.r_min < config.r_max))
    throw ConfigError("clamp bounds must satisfy 0 < r_min < r_max");
  KernelRatio k;
  k.source_x = data.source_x();
  k.target_x = data.target_x();
  k.bandwidth_source = silverman_bandwidth(k.source_x) * select_bandwidth(k.source_x, config);
  k.bandwidth_target = silverman_bandwidth(k.target_x) * select_bandwidth(k.target_x, config);
  k.r_min = config.r_min;
  k.r_max = config.r_max;

  const auto spec = DivergenceSpec::make(DivergenceId::KL);
  const Eigen::VectorXd rs = k.evaluate(data.source_x());
  const Eigen::VectorXd rt = k.evaluate(data.target_x());
  const double objective = population_objective(
    spec, { rs.data(), static_cast<std::size_t>(rs.size()) }, { rt.data(), static_cast<std::size_t>(rt.size()) });
  return RatioModel(std::move(k), spec, objective, divergence_estimate(spec, objective));
}

double odds_to_ratio(double pi, double tau)
{
  if (!(tau > 0.0 && tau < 1.0))
    throw DomainError("mixing proportion must lie in (0, 1)");
  if (!(pi >= 0.0 && pi < 1.0))
    throw DomainError("classification probability must lie in [0, 1)");
  return (1.0 - tau) / tau * pi / (1.0 - pi);
}

RatioModel fit_prob_classification(const Dataset& data, const ClassifierConfig& config)
{
  if (!(config.r_min > 0.0 && config.r_min < config.r_max))
    throw ConfigError("clamp bounds must satisfy 0 < r_min < r_max");
  const RowMatrix pooled = data.pooled_x();
  ClassifierRatio c;
  c.basis = PolySieveBasis::build(pooled, config.degree, config.max_basis);
  c.tau = data.tau_hat();
  c.r_min = config.r_min;
  c.r_max = config.r_max;

  const Eigen::MatrixXd phi = c.basis.design(pooled);
  const Eigen::Index N = pooled.rows();
  Eigen::VectorXd label = Eigen::VectorXd::Zero(N);
  label.tail(data.m()).setOnes();

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(phi.cols());
  beta(0) = std::log(c.tau / (1.0 - c.tau));
  const auto deviance = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd eta = phi * b;
    double s = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
      // log(1 + exp(eta)) - y eta
      const double t = eta(i);
      s += (t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t))) - label(i) * t;
    }
    return s / static_cast<double>(N) + 0.5 * config.ridge * b.squaredNorm();
  };

  double current = deviance(beta);
  bool converged = false;
  for (int it = 0; it < config.max_iterations; ++it) {
    const Eigen::VectorXd eta = phi * beta;
    Eigen::VectorXd p(N), w(N);
    for (Eigen::Index i = 0; i < N; ++i) {
      p(i) = sigmoid(eta(i));
      w(i) = p(i) * (1.0 - p(i));
    }
    const Eigen::VectorXd grad =
      phi.transpose() * (p - label) / static_cast<double>(N) + config.ridge * beta;
    Eigen::MatrixXd hess = phi.transpose() * w.asDiagonal() * phi / static_cast<double>(N);
    hess.diagonal().array() += config.ridge;
    const Eigen::VectorXd step = hess.ldlt().solve(-grad);
    if (!step.allFinite())
      throw NumericError("classifier Hessian is singular; the classes may be separated, "
                         "use a lower degree or tighter clamp bounds");
    double t = 1.0;
    double next = current;
    for (int ls = 0; ls < 40; ++ls) {
      next = deviance(beta + t * step);
      if (next <= current + 1e-4 * t * grad.dot(step))
        break;
      t *= 0.5;
    }
    beta += t * step;
    const double change = current - next;
    current = next;
    if (grad.lpNorm<Eigen::Infinity>() < 1e-10 || change < 1e-14) {
      converged = true;
      break;
    }
  }
  const double max_eta = (phi * beta).cwiseAbs().maxCoeff();
  const double fit_deviance = current - 0.5 * config.ridge * beta.squaredNorm();
  if (!converged || !beta.allFinite() || max_eta > 30.0 || fit_deviance < 1e-4)
    throw NumericError("source and target look perfectly separated by the classifier; "
                       "use a lower degree or tighter clamp bounds");
  c.coefficients = std::move(beta);

  const auto spec = DivergenceSpec::make(DivergenceId::KL);
  const Eigen::VectorXd rs = c.evaluate(data.source_x());
  const Eigen::VectorXd rt = c.evaluate(data.target_x());
  const double objective = population_objective(
    spec, { rs.data(), static_cast<std::size_t>(rs.size()) }, { rt.data(), static_cast<std::size_t>(rt.size()) });
  return RatioModel(std::move(c), spec, objective, divergence_estimate(spec, objective));
}

double ratio_mse(const RatioModel& r_hat, const RatioOracle& oracle, const RowMatrix& x)
{
  if (x.rows() == 0)
    throw ConfigError("error metric needs at least one row");
  const Eigen::VectorXd r = r_hat.evaluate(x);
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double e = r(i) - oracle(row_span(x, i));
    s += e * e;
  }
  return s / static_cast<double>(x.rows());
}

double empirical_l2_error(const RatioModel& r_hat, const RatioOracle& oracle, const RowMatrix& x)
{
  return std::sqrt(ratio_mse(r_hat, oracle, x));
}

std::string to_string(RatioMethod m)
{
  switch (m) {
    case RatioMethod::Ddr:
      return "ddr";
    case RatioMethod::KernelSmoothing:
      return "ks";
    case RatioMethod::ProbClassification:
      return "pc";
    case RatioMethod::Function:
      return "function";
  }
  return "function";
}

RatioMethod parse_ratio_method(std::string_view s)
{
  if (s == "ddr")
    return RatioMethod::Ddr;
  if (s == "ks")
    return RatioMethod::KernelSmoothing;
  if (s == "pc")
    return RatioMethod::ProbClassification;
  throw ConfigError("unknown ratio method '" + std::string(s) + "' (expected ddr, ks or pc)");
}

} // namespace shiftel
