#include "shiftel/moments.hpp"
#include "shiftel/error.hpp"

#include <cmath>

namespace shiftel {

namespace {

void check_tau(double tau)
{
  if (!(tau > 0.0 && tau < 1.0))
    throw ConfigError("mixing proportion must lie strictly between 0 and 1");
}

const ImputationSet& require_imputations(const Dataset& data, const Nuisances& nuisances)
{
  if (!nuisances.imputations)
    throw ContractError("this moment needs imputations");
  if (nuisances.imputations->rows() != data.total())
    throw ShapeError("imputations must cover all source and target rows");
  return *nuisances.imputations;
}

Eigen::MatrixXd imputed_moment_all(const Dataset& data,
                                   const ImputationSet& imp,
                                   const EstimatingFunction& g,
                                   const Eigen::VectorXd& theta)
{
  Eigen::MatrixXd out(data.total(), g.r());
  Eigen::VectorXd tmp(g.r());
  const auto fill = [&](const RowMatrix& x, Eigen::Index offset) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      g.average(row_span(x, i), imp.row(offset + i), imp.row_mean(offset + i), theta, tmp);
      out.row(offset + i) = tmp.transpose();
    }
  };
  fill(data.source_x(), 0);
  fill(data.target_x(), data.n());
  return out;
}

void check_theta(const EstimatingFunction& g, const Eigen::VectorXd& theta)
{
  if (theta.size() != g.p())
    throw ShapeError("parameter has length " + std::to_string(theta.size()) + ", expected " +
                     std::to_string(g.p()));
}

} // namespace

Nuisances Nuisances::make(const Dataset& data,
                          const RatioModel& ratio,
                          std::shared_ptr<const ImputationSet> imputations)
{
  Nuisances nu;
  nu.source_ratio = ratio.evaluate(data.source_x());
  nu.imputations = std::move(imputations);
  return nu;
}

MomentMatrix drw_moments(const Dataset& data,
                         const Eigen::VectorXd& source_ratio,
                         const EstimatingFunction& g,
                         const Eigen::VectorXd& theta)
{
  check_theta(g, theta);
  if (source_ratio.size() != data.n())
    throw ShapeError("ratio values must cover the source rows");
  MomentMatrix mm;
  mm.kind = MomentKind::Drw;
  mm.theta = theta;
  mm.values.resize(data.n(), g.r());
  Eigen::VectorXd tmp(g.r());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    g.evaluate(row_span(data.source_x(), i), data.source_y()(i), theta, tmp);
    mm.values.row(i) = source_ratio(i) * tmp.transpose();
  }
  return mm;
}

MomentMatrix drw_moments(const Dataset& data,
                         const RatioModel& r_hat,
                         const EstimatingFunction& g,
                         const Eigen::VectorXd& theta)
{
  return drw_moments(data, r_hat.evaluate(data.source_x()), g, theta);
}

MomentMatrix orthogonal_moments(const Dataset& data,
                                const Eigen::VectorXd& source_ratio,
                                const Eigen::MatrixXd& m_all,
                                const EstimatingFunction& g,
                                const Eigen::VectorXd& theta)
{
  check_theta(g, theta);
  const double tau = data.tau_hat();
  check_tau(tau);
  if (source_ratio.size() != data.n())
    throw ShapeError("ratio values must cover the source rows");
  if (m_all.rows() != data.total() || m_all.cols() != g.r())
    throw ShapeError("conditional moments must be N x r");
  MomentMatrix mm;
  mm.kind = MomentKind::Orthogonal;
  mm.theta = theta;
  mm.values.resize(data.total(), g.r());
  Eigen::VectorXd tmp(g.r());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    g.evaluate(row_span(data.source_x(), i), data.source_y()(i), theta, tmp);
    mm.values.row(i) = source_ratio(i) * (tmp.transpose() - m_all.row(i)) / (1.0 - tau);
  }
  for (Eigen::Index j = data.n(); j < data.total(); ++j)
    mm.values.row(j) = m_all.row(j) / tau;
  return mm;
}

MomentMatrix orthogonal_moments(const Dataset& data,
                                const Nuisances& nuisances,
                                const EstimatingFunction& g,
                                const Eigen::VectorXd& theta)
{
  const auto& imp = require_imputations(data, nuisances);
  return orthogonal_moments(data, nuisances.source_ratio, imputed_moment_all(data, imp, g, theta), g, theta);
}

MomentMatrix orthogonal_moments(const Dataset& data,
                                const RatioModel& r_hat,
                                const ImputationSet& imputations,
                                const EstimatingFunction& g,
                                const Eigen::VectorXd& theta)
{
  if (imputations.rows() != data.total())
    throw ShapeError("imputations must cover all source and target rows");
  return orthogonal_moments(data,
                            r_hat.evaluate(data.source_x()),
                            imputed_moment_all(data, imputations, g, theta),
                            g,
                            theta);
}

MomentMatrix imputation_moments(const Dataset& data,
                                const Nuisances& nuisances,
                                const EstimatingFunction& g,
                                const Eigen::VectorXd& theta)
{
  check_theta(g, theta);
  const auto& imp = require_imputations(data, nuisances);
  const double tau = data.tau_hat();
  check_tau(tau);
  MomentMatrix mm;
  mm.kind = MomentKind::Imputation;
  mm.theta = theta;
  mm.values.resize(data.m(), g.r());
  Eigen::VectorXd tmp(g.r());
  for (Eigen::Index j = 0; j < data.m(); ++j) {
    g.average(row_span(data.target_x(), j), imp.row(data.n() + j), imp.row_mean(data.n() + j), theta, tmp);
    mm.values.row(j) = tmp.transpose() / tau;
  }
  return mm;
}

MomentMatrix build_moments(MomentKind kind,
                           const Dataset& data,
                           const Nuisances& nuisances,
                           const EstimatingFunction& g,
                           const Eigen::VectorXd& theta)
{
  switch (kind) {
    case MomentKind::Drw:
      return drw_moments(data, nuisances.source_ratio, g, theta);
    case MomentKind::Orthogonal:
      return orthogonal_moments(data, nuisances, g, theta);
    case MomentKind::Imputation:
      return imputation_moments(data, nuisances, g, theta);
  }
  throw ContractError("unknown moment kind");
}

MomentMean moment_mean(const MomentMatrix& moments, Eigen::Index n_source)
{
  const Eigen::MatrixXd& v = moments.values;
  const auto rows = v.rows();
  if (rows < 2)
    throw ConfigError("moment_mean needs at least two rows");
  MomentMean out;
  out.mean = v.colwise().mean().transpose();
  const auto block_var_sum = [&](Eigen::Index start, Eigen::Index count) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(v.cols());
    if (count < 2)
      return s;
    const Eigen::RowVectorXd mu = v.middleRows(start, count).colwise().mean();
    const Eigen::MatrixXd c = v.middleRows(start, count).rowwise() - mu;
    // count * sample variance
    s = c.colwise().squaredNorm().transpose() * (static_cast<double>(count) / (count - 1.0));
    return s;
  };
  Eigen::VectorXd total;
  if (moments.kind == MomentKind::Orthogonal && n_source > 0 && n_source < rows)
    total = block_var_sum(0, n_source) + block_var_sum(n_source, rows - n_source);
  else
    total = block_var_sum(0, rows);
  out.standard_error = total.cwiseSqrt() / static_cast<double>(rows);
  return out;
}

OrthogonalityGap orthogonality_gap(const Dataset& sample,
                                   const EstimatingFunction& g,
                                   const Eigen::VectorXd& theta0,
                                   const NuisanceFunctions& eta0,
                                   const NuisanceFunctions& h,
                                   double t)
{
  if (!(t > 0.0))
    throw ConfigError("finite-difference step must be positive");
  if (!eta0.ratio || !eta0.moment)
    throw ConfigError("orthogonality_gap needs both oracle nuisances");
  check_theta(g, theta0);

  const Eigen::Index n = sample.n();
  const Eigen::Index N = sample.total();
  const RowMatrix pooled = sample.pooled_x();
  Eigen::VectorXd r0(n), dr = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd m0(N, g.r()), dm = Eigen::MatrixXd::Zero(N, g.r());
  for (Eigen::Index i = 0; i < n; ++i) {
    r0(i) = eta0.ratio(row_span(pooled, i));
    if (h.ratio)
      dr(i) = h.ratio(row_span(pooled, i));
  }
  for (Eigen::Index i = 0; i < N; ++i) {
    m0.row(i) = eta0.moment(row_span(pooled, i), theta0).transpose();
    if (h.moment)
      dm.row(i) = h.moment(row_span(pooled, i), theta0).transpose();
  }

  const auto orth_mean = [&](double s) {
    const MomentMatrix mm = orthogonal_moments(sample, r0 + s * dr, m0 + s * dm, g, theta0);
    return Eigen::VectorXd(mm.values.colwise().mean().transpose());
  };
  const auto drw_mean = [&](double s) {
    const MomentMatrix mm = drw_moments(sample, r0 + s * dr, g, theta0);
    return Eigen::VectorXd(mm.values.colwise().mean().transpose());
  };
  OrthogonalityGap gap;
  gap.orthogonal = ((orth_mean(t) - orth_mean(-t)) / (2.0 * t)).norm();
  gap.drw = ((drw_mean(t) - drw_mean(-t)) / (2.0 * t)).norm();
  return gap;
}

double nonsmooth_step(const Dataset& data)
{
  const Eigen::VectorXd& y = data.source_y();
  const double mu = y.mean();
  const double sd =
    y.size() > 1 ? std::sqrt((y.array() - mu).square().sum() / (y.size() - 1.0)) : 0.0;
  const double step = 1.06 * sd * std::pow(static_cast<double>(data.total()), -0.2);
  return step > 0.0 ? step : 1e-3;
}

VarianceEstimates variance_estimates(MomentKind kind,
                                     const Dataset& data,
                                     const Nuisances& nuisances,
                                     const EstimatingFunction& g,
                                     const Eigen::VectorXd& theta_hat)
{
  const MomentMatrix mm = build_moments(kind, data, nuisances, g, theta_hat);
  const auto rows = static_cast<double>(mm.values.rows());
  VarianceEstimates est;
  est.omega = mm.values.transpose() * mm.values / rows;

  const int r = g.r();
  const int p = g.p();
  est.gamma.resize(r, p);
  if (g.kind() == EstimandKind::Mean) {
    switch (kind) {
      case MomentKind::Drw:
        est.gamma(0, 0) = -nuisances.source_ratio.mean();
        break;
      case MomentKind::Orthogonal:
        // source rows cancel: d/dtheta {g - m} = 0
        est.gamma(0, 0) = -static_cast<double>(data.m()) / (rows * data.tau_hat());
        break;
      case MomentKind::Imputation:
        est.gamma(0, 0) = -1.0 / data.tau_hat();
        break;
    }
  } else {
    for (int k = 0; k < p; ++k) {
      const double step =
        g.smooth() ? 1e-5 * std::max(1.0, std::abs(theta_hat(k))) : nonsmooth_step(data);
      Eigen::VectorXd up = theta_hat;
      Eigen::VectorXd down = theta_hat;
      up(k) += step;
      down(k) -= step;
      const Eigen::VectorXd mu = build_moments(kind, data, nuisances, g, up).values.colwise().mean();
      const Eigen::VectorXd md = build_moments(kind, data, nuisances, g, down).values.colwise().mean();
      est.gamma.col(k) = (mu - md) / (2.0 * step);
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(est.omega);
  const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (!(eig.eigenvalues().minCoeff() > 1e-12 * std::max(top, 1e-300)))
    throw NumericError("moment covariance is singular; more data or a ridge term is needed");
  const Eigen::MatrixXd omega_inv_gamma = eig.operatorInverseSqrt() * est.gamma;
  const Eigen::MatrixXd info = omega_inv_gamma.transpose() * omega_inv_gamma;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
  if (lu.isInvertible())
    est.sigma = lu.inverse();
  return est;
}

std::string to_string(MomentKind kind)
{
  switch (kind) {
    case MomentKind::Drw:
      return "drw";
    case MomentKind::Orthogonal:
      return "orthogonal";
    case MomentKind::Imputation:
      return "imputation";
  }
  return "orthogonal";
}

} // namespace shiftel
