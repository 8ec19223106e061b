#include "shiftel/cond_density.hpp"
#include "shiftel/error.hpp"
#include "shiftel/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace shiftel {

namespace {

constexpr Eigen::Index kChunkRows = 32;

RowMatrix response_inputs(const Eigen::VectorXd& y, const RowMatrix& x)
{
  RowMatrix out(x.rows(), x.cols() + 1);
  out.col(0) = y;
  out.rightCols(x.cols()) = x;
  return out;
}

void finish_rows(ImputationSet& set)
{
  set.row_mean.resize(set.draws.rows());
  for (Eigen::Index i = 0; i < set.draws.rows(); ++i) {
    auto row = set.draws.row(i);
    std::sort(row.data(), row.data() + row.size());
    set.row_mean(i) = row.mean();
  }
}

} // namespace

AuxiliaryDistribution AuxiliaryDistribution::from_sample(const Eigen::VectorXd& y, double inflation)
{
  if (y.size() < 2)
    throw ConfigError("auxiliary distribution needs at least two responses");
  if (!(inflation > 0.0))
    throw ConfigError("auxiliary scale inflation must be positive");
  AuxiliaryDistribution a;
  a.location = y.mean();
  const double sd = std::sqrt((y.array() - a.location).square().sum() / (y.size() - 1.0));
  a.scale = inflation * (sd > 0.0 ? sd : 1.0);
  return a;
}

double AuxiliaryDistribution::pdf(double y) const
{
  const double u = (y - location) / scale;
  return std::exp(-0.5 * u * u) / (scale * std::sqrt(2.0 * std::numbers::pi));
}

double AuxiliaryDistribution::sample(Rng& rng) const
{
  std::normal_distribution<double> z(location, scale);
  return z(rng);
}

// ---------------------------------------------------------------------------

CondDensityModel::CondDensityModel(AuxiliaryDistribution aux, FittedFunction ratio, Eigen::VectorXd y_grid)
  : aux_(aux)
  , ratio_(std::move(ratio))
  , y_grid_(std::move(y_grid))
{
  if (!(aux_.scale > 0.0))
    throw ConfigError("auxiliary scale must be positive");
  if (y_grid_.size() < 2)
    throw ConfigError("response grid needs at least two points");
  if (ratio_.input_dim() < 2)
    throw ShapeError("conditional density ratio needs a response and at least one covariate");
}

double CondDensityModel::grid_step() const
{
  return (y_grid_(y_grid_.size() - 1) - y_grid_(0)) / static_cast<double>(y_grid_.size() - 1);
}

Eigen::MatrixXd CondDensityModel::raw_grid(const RowMatrix& x) const
{
  if (x.cols() != input_dim())
    throw ShapeError("conditional density expects " + std::to_string(input_dim()) +
                     " covariates, got " + std::to_string(x.cols()));
  const Eigen::Index G = y_grid_.size();
  const Eigen::VectorXd aux_pdf = y_grid_.unaryExpr([&](double y) { return aux_.pdf(y); });
  Eigen::MatrixXd out(x.rows(), G);
  for (Eigen::Index start = 0; start < x.rows(); start += kChunkRows) {
    const Eigen::Index k = std::min(kChunkRows, x.rows() - start);
    RowMatrix inputs(k * G, x.cols() + 1);
    for (Eigen::Index i = 0; i < k; ++i) {
      inputs.block(i * G, 0, G, 1) = y_grid_;
      inputs.block(i * G, 1, G, x.cols()) = x.row(start + i).replicate(G, 1);
    }
    const Eigen::VectorXd r = ratio_.evaluate(inputs);
    for (Eigen::Index i = 0; i < k; ++i)
      out.row(start + i) = (r.segment(i * G, G).array() * aux_pdf.array()).transpose();
  }
  return out;
}

Eigen::MatrixXd CondDensityModel::grid_density(const RowMatrix& x) const
{
  Eigen::MatrixXd p = raw_grid(x);
  const double dy = grid_step();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double mass = p.row(i).sum() * dy;
    if (!(mass > 0.0) || !std::isfinite(mass))
      throw NumericError("estimated conditional density vanishes on the grid at row " +
                         std::to_string(i));
    p.row(i) /= mass;
  }
  return p;
}

Eigen::VectorXd CondDensityModel::density(const Eigen::VectorXd& y, const RowMatrix& x) const
{
  if (y.size() != x.rows())
    throw ShapeError("density: response and covariate row counts differ");
  const Eigen::MatrixXd raw = raw_grid(x);
  const double dy = grid_step();
  const Eigen::VectorXd r = ratio_.evaluate(response_inputs(y, x));
  Eigen::VectorXd out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double mass = raw.row(i).sum() * dy;
    if (!(mass > 0.0))
      throw NumericError("estimated conditional density vanishes on the grid at row " +
                         std::to_string(i));
    out(i) = r(i) * aux_.pdf(y(i)) / mass;
  }
  return out;
}

FunctionClassConfig default_cde_config()
{
  auto c = FunctionClassConfig::poly_sieve();
  c.r_min = 1e-4;
  c.r_max = 1e4;
  return c;
}

CondDensityModel fit_conditional_density(const Dataset& data,
                                         const DivergenceSpec& spec,
                                         const FunctionClassConfig& config,
                                         const AuxConfig& aux_config,
                                         std::uint64_t seed)
{
  if (aux_config.grid_size < 2)
    throw ConfigError("response grid needs at least two points");
  const Eigen::VectorXd& y = data.source_y();
  const auto aux = AuxiliaryDistribution::from_sample(y, aux_config.inflation);

  Rng rng(seed);
  Eigen::VectorXd y_aux(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i)
    y_aux(i) = aux.sample(rng);

  const RowMatrix aux_pairs = response_inputs(y_aux, data.source_x());
  const RowMatrix observed_pairs = response_inputs(y, data.source_x());
  FittedFunction ratio = fit_erm(config, spec, aux_pairs, observed_pairs);

  const double lo = y.minCoeff() - aux_config.grid_margin * aux.scale;
  const double hi = y.maxCoeff() + aux_config.grid_margin * aux.scale;
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(aux_config.grid_size, lo, hi);
  return CondDensityModel(aux, std::move(ratio), grid);
}

// ---------------------------------------------------------------------------

ImputationSet impute(const CondDensityModel& model,
                     const RowMatrix& x_all,
                     int kappa,
                     std::uint64_t seed,
                     unsigned threads)
{
  if (kappa < 1)
    throw ConfigError("number of imputations must be at least 1");
  ImputationSet set;
  set.kappa = kappa;
  set.seed = seed;
  set.draws.resize(x_all.rows(), kappa);
  const Eigen::VectorXd& grid = model.y_grid();
  const double dy = model.grid_step();
  const Eigen::Index G = grid.size();
  const auto chunks = static_cast<std::size_t>((x_all.rows() + kChunkRows - 1) / kChunkRows);

  parallel_for(chunks, threads, [&](std::size_t c) {
    const Eigen::Index start = static_cast<Eigen::Index>(c) * kChunkRows;
    const Eigen::Index k = std::min(kChunkRows, x_all.rows() - start);
    const Eigen::MatrixXd dens = model.grid_density(x_all.middleRows(start, k));
    std::vector<double> cdf(static_cast<std::size_t>(G));
    for (Eigen::Index i = 0; i < k; ++i) {
      double acc = 0.0;
      for (Eigen::Index g = 0; g < G; ++g) {
        acc += dens(i, g);
        cdf[static_cast<std::size_t>(g)] = acc;
      }
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(start + i)));
      for (int v = 0; v < kappa; ++v) {
        const double u = rng.uniform() * acc;
        auto cell = std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
        cell = std::min<std::ptrdiff_t>(cell, G - 1);
        set.draws(start + i, v) = grid(cell) + (rng.uniform() - 0.5) * dy;
      }
    }
  });
  finish_rows(set);
  return set;
}

ImputationSet impute_from_sampler(const ConditionalSampler& sampler,
                                  const RowMatrix& x_all,
                                  int kappa,
                                  std::uint64_t seed,
                                  unsigned threads)
{
  if (kappa < 1)
    throw ConfigError("number of imputations must be at least 1");
  ImputationSet set;
  set.kappa = kappa;
  set.seed = seed;
  set.draws.resize(x_all.rows(), kappa);
  parallel_for(static_cast<std::size_t>(x_all.rows()), threads, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    Rng rng(derive_seed(seed, i));
    for (int v = 0; v < kappa; ++v)
      set.draws(row, v) = sampler(row_span(x_all, row), rng);
  });
  finish_rows(set);
  return set;
}

Eigen::MatrixXd conditional_moment(const ImputationSet& imputations,
                                   const EstimatingFunction& g,
                                   const RowMatrix& x_all,
                                   const Eigen::VectorXd& theta)
{
  if (imputations.rows() != x_all.rows())
    throw ShapeError("imputations do not align with the covariate rows");
  Eigen::MatrixXd out(x_all.rows(), g.r());
  Eigen::VectorXd tmp(g.r());
  for (Eigen::Index i = 0; i < x_all.rows(); ++i) {
    g.average(row_span(x_all, i), imputations.row(i), imputations.row_mean(i), theta, tmp);
    out.row(i) = tmp.transpose();
  }
  return out;
}

double empirical_moment_error(const Eigen::MatrixXd& m_hat, const Eigen::MatrixXd& m0)
{
  if (m_hat.rows() != m0.rows() || m_hat.cols() != m0.cols())
    throw ShapeError("moment matrices differ in shape");
  if (m_hat.rows() == 0)
    return 0.0;
  double total = 0.0;
  for (Eigen::Index j = 0; j < m_hat.cols(); ++j)
    total += std::sqrt((m_hat.col(j) - m0.col(j)).squaredNorm() / static_cast<double>(m_hat.rows()));
  return total;
}

double density_mse(const CondDensityModel& model,
                   const Dataset& data,
                   const std::function<double(double, std::span<const double>)>& oracle)
{
  const Eigen::VectorXd p = model.density(data.source_y(), data.source_x());
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double e = p(i) - oracle(data.source_y()(i), row_span(data.source_x(), i));
    s += e * e;
  }
  return s / static_cast<double>(p.size());
}

double grid_ise(const CondDensityModel& model,
                const RowMatrix& x,
                const std::function<double(double, std::span<const double>)>& oracle)
{
  const Eigen::MatrixXd p = model.grid_density(x);
  const Eigen::VectorXd& grid = model.y_grid();
  const double dy = model.grid_step();
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double ise = 0.0;
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
      const double e = p(i, g) - oracle(grid(g), row_span(x, i));
      ise += e * e;
    }
    total += ise * dy;
  }
  return total / static_cast<double>(x.rows());
}

} // namespace shiftel
