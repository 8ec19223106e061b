#include "shiftel/funclass.hpp"
#include "shiftel/error.hpp"
#include "shiftel/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace shiftel {

namespace {

void compositions(int remaining,
                  std::size_t pos,
                  std::vector<int>& current,
                  std::vector<std::vector<int>>& out,
                  std::size_t cap)
{
  if (out.size() >= cap)
    return;
  if (pos + 1 == current.size()) {
    current[pos] = remaining;
    out.push_back(current);
    return;
  }
  for (int k = remaining; k >= 0; --k) {
    current[pos] = k;
    compositions(remaining - k, pos + 1, current, out, cap);
    if (out.size() >= cap)
      return;
  }
}

// Legendre polynomials P_0..P_degree at u
void legendre(double u, int degree, double* out)
{
  out[0] = 1.0;
  if (degree >= 1)
    out[1] = u;
  for (int k = 1; k < degree; ++k)
    out[k + 1] = ((2.0 * k + 1.0) * u * out[k] - k * out[k - 1]) / (k + 1.0);
}

double initial_output(Link link)
{
  return link == Link::Exp ? 0.0 : 1.0;
}

Eigen::VectorXd initial_parameters(const Architecture& arch, Link link, Rng& rng)
{
  if (const auto* sieve = std::get_if<PolySieveBasis>(&arch)) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(sieve->size());
    p(0) = initial_output(link);
    return p;
  }
  const auto& mlp = std::get<MlpArchitecture>(arch);
  Eigen::VectorXd p(mlp.parameter_count());
  Eigen::Index k = 0;
  int fan_in = mlp.input_dim;
  for (int l = 0; l < mlp.depth; ++l) {
    const double a = std::sqrt(6.0 / fan_in);
    for (int i = 0; i < mlp.width * fan_in; ++i)
      p(k++) = a * (2.0 * rng.uniform() - 1.0);
    for (int i = 0; i < mlp.width; ++i)
      p(k++) = 0.0;
    fan_in = mlp.width;
  }
  const double a = std::sqrt(6.0 / fan_in);
  for (int i = 0; i < mlp.width; ++i)
    p(k++) = a * (2.0 * rng.uniform() - 1.0);
  p(k++) = initial_output(link);
  return p;
}

Eigen::Index parameter_count(const Architecture& arch)
{
  if (const auto* sieve = std::get_if<PolySieveBasis>(&arch))
    return sieve->size();
  return std::get<MlpArchitecture>(arch).parameter_count();
}

RowMatrix stack_rows(const RowMatrix& a, const RowMatrix& b)
{
  RowMatrix out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

RowMatrix take_rows(const RowMatrix& x, const std::vector<Eigen::Index>& idx)
{
  RowMatrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
  return out;
}

std::vector<Eigen::Index> shuffled(Eigen::Index n, Rng& rng)
{
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{ 0 });
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

Architecture build_architecture(const FunctionClassConfig& config,
                                const RowMatrix& training_inputs,
                                const Capacity& capacity)
{
  if (config.kind == FunctionKind::PolySieve)
    return PolySieveBasis::build(training_inputs, capacity.size, config.max_basis);
  return MlpArchitecture::build(training_inputs, capacity.size, capacity.depth);
}

struct TrainResult
{
  Eigen::VectorXd params;
  std::vector<double> history;
  int epochs = 0;
};

TrainResult train_adam(const ErmObjective& objective,
                       Eigen::VectorXd params,
                       const OptimizerConfig& opt)
{
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;

  TrainResult res;
  Eigen::VectorXd grad(params.size());
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd best_params = params;
  double best = std::numeric_limits<double>::infinity();
  double reference = best;
  double b1t = 1.0;
  double b2t = 1.0;

  int epoch = 0;
  for (; epoch < opt.max_epochs; ++epoch) {
    const double value = objective.value_and_gradient(params, grad);
    if (!std::isfinite(value) || !grad.allFinite())
      throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
    if (epoch % opt.record_every == 0)
      res.history.push_back(value);
    if (value < best) {
      best = value;
      best_params = params;
    }
    if (epoch > 0 && epoch % opt.patience == 0) {
      if (reference - best < opt.tolerance)
        break;
      reference = best;
    } else if (epoch == 0) {
      reference = value;
    }

    b1t *= beta1;
    b2t *= beta2;
    m1 = beta1 * m1 + (1.0 - beta1) * grad;
    m2 = beta2 * m2 + (1.0 - beta2) * grad.cwiseAbs2();
    const double lr_t = opt.learning_rate * std::sqrt(1.0 - b2t) / (1.0 - b1t);
    params.array() -= lr_t * m1.array() / (m2.array().sqrt() + eps);
  }
  res.params = std::move(best_params);
  res.epochs = epoch;
  return res;
}

TrainResult train_newton(const ErmObjective& objective,
                         Eigen::VectorXd params,
                         const OptimizerConfig& opt)
{
  TrainResult res;
  const int max_iter = std::max(1, std::min(opt.max_epochs, 200));
  Eigen::VectorXd grad(params.size());
  double value = objective.value_and_gradient(params, grad);
  int it = 0;
  for (; it < max_iter; ++it) {
    if (!std::isfinite(value) || !grad.allFinite())
      throw NumericError("non-finite training loss at iteration " + std::to_string(it));
    res.history.push_back(value);
    if (grad.lpNorm<Eigen::Infinity>() < 1e-10)
      break;

    const Eigen::MatrixXd hess = objective.hessian(params);
    const double scale = std::max(hess.diagonal().cwiseAbs().maxCoeff(), 1e-12);
    double mu = 1e-10 * scale;
    Eigen::VectorXd step;
    for (int attempt = 0; attempt < 30; ++attempt) {
      Eigen::MatrixXd h = hess;
      h.diagonal().array() += mu;
      Eigen::LLT<Eigen::MatrixXd> llt(h);
      if (llt.info() == Eigen::Success) {
        step = -llt.solve(grad);
        if (step.allFinite() && grad.dot(step) < 0.0)
          break;
      }
      mu *= 10.0;
      step.resize(0);
    }
    if (step.size() == 0)
      step = -grad / scale;

    const double slope = grad.dot(step);
    double t = 1.0;
    Eigen::VectorXd trial;
    double trial_value = value;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      trial = params + t * step;
      trial_value = objective.value(trial);
      if (std::isfinite(trial_value) && trial_value <= value + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted)
      break;
    const double decrease = value - trial_value;
    params = std::move(trial);
    value = objective.value_and_gradient(params, grad);
    if (decrease < 1e-15 * (1.0 + std::abs(value)))
      break;
  }
  res.params = std::move(params);
  res.epochs = it;
  return res;
}

} // namespace

// ---------------------------------------------------------------------------

FunctionClassConfig FunctionClassConfig::mlp()
{
  return FunctionClassConfig{};
}

FunctionClassConfig FunctionClassConfig::poly_sieve()
{
  FunctionClassConfig c;
  c.kind = FunctionKind::PolySieve;
  c.degree_or_width_candidates = { 1, 2, 3 };
  c.depth_candidates.clear();
  c.optimizer.method = OptimizerMethod::Newton;
  return c;
}

void FunctionClassConfig::validate() const
{
  if (!(r_min > 0.0 && r_min < r_max && std::isfinite(r_max)))
    throw ConfigError("clamp bounds must satisfy 0 < r_min < r_max < inf");
  if (cv_folds < 2)
    throw ConfigError("cv_folds must be at least 2");
  if (degree_or_width_candidates.empty())
    throw ConfigError("capacity grid is empty");
  if (kind == FunctionKind::Mlp && depth_candidates.empty())
    throw ConfigError("MLP depth grid is empty");
  for (int s : degree_or_width_candidates)
    if (s < (kind == FunctionKind::Mlp ? 1 : 0))
      throw ConfigError("invalid degree/width candidate " + std::to_string(s));
  for (int dpt : depth_candidates)
    if (kind == FunctionKind::Mlp && dpt < 1)
      throw ConfigError("MLP depth must be at least 1");
  if (max_basis < 1)
    throw ConfigError("max_basis must be positive");
  if (optimizer.learning_rate <= 0.0 || optimizer.max_epochs < 1 || optimizer.patience < 1 ||
      optimizer.record_every < 1 || optimizer.tolerance < 0.0)
    throw ConfigError("invalid optimizer settings");
  if (kind == FunctionKind::Mlp && optimizer.method == OptimizerMethod::Newton)
    throw ConfigError("Newton optimizer is only available for the polynomial sieve");
}

std::vector<Capacity> FunctionClassConfig::candidates() const
{
  std::vector<Capacity> out;
  if (kind == FunctionKind::PolySieve) {
    for (int g : degree_or_width_candidates)
      out.push_back({ g, 0 });
    return out;
  }
  for (int dpt : depth_candidates)
    for (int w : degree_or_width_candidates)
      out.push_back({ w, dpt });
  return out;
}

// ---------------------------------------------------------------------------

PolySieveBasis PolySieveBasis::build(const RowMatrix& training_inputs,
                                     int degree,
                                     int max_basis)
{
  if (degree < 0)
    throw ConfigError("sieve degree must be non-negative");
  PolySieveBasis b;
  b.degree = degree;
  const auto d = training_inputs.cols();
  b.lo = training_inputs.colwise().minCoeff().transpose();
  b.hi = training_inputs.colwise().maxCoeff().transpose();
  std::vector<int> current(static_cast<std::size_t>(d), 0);
  const auto cap = static_cast<std::size_t>(max_basis);
  for (int t = 0; t <= degree && b.exponents.size() < cap; ++t)
    compositions(t, 0, current, b.exponents, cap);
  return b;
}

Eigen::MatrixXd PolySieveBasis::design(const RowMatrix& x) const
{
  if (x.cols() != input_dim())
    throw ShapeError("sieve input has " + std::to_string(x.cols()) + " columns, expected " +
                     std::to_string(input_dim()));
  const auto d = input_dim();
  const auto B = size();
  // sparse view of the exponents: (column, power) pairs with power > 0
  std::vector<std::vector<std::pair<int, int>>> factors(static_cast<std::size_t>(B));
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index j = 0; j < d; ++j)
      if (exponents[b][j] > 0)
        factors[b].emplace_back(static_cast<int>(j), exponents[b][j]);

  Eigen::MatrixXd out(x.rows(), B);
  std::vector<double> poly(static_cast<std::size_t>(d * (degree + 1)));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double width = hi(j) - lo(j);
      const double u = width > 0.0 ? 2.0 * (x(i, j) - lo(j)) / width - 1.0 : 0.0;
      legendre(u, degree, poly.data() + j * (degree + 1));
    }
    for (Eigen::Index b = 0; b < B; ++b) {
      double v = 1.0;
      for (const auto& [j, k] : factors[b])
        v *= poly[j * (degree + 1) + k];
      out(i, b) = v;
    }
  }
  return out;
}

MlpArchitecture MlpArchitecture::build(const RowMatrix& training_inputs, int width, int depth)
{
  if (width < 1 || depth < 1)
    throw ConfigError("MLP width and depth must be positive");
  MlpArchitecture a;
  a.input_dim = static_cast<int>(training_inputs.cols());
  a.width = width;
  a.depth = depth;
  a.mean = training_inputs.colwise().mean().transpose();
  a.scale.resize(a.input_dim);
  for (int j = 0; j < a.input_dim; ++j) {
    const double var =
      (training_inputs.col(j).array() - a.mean(j)).square().mean();
    a.scale(j) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return a;
}

Eigen::Index MlpArchitecture::parameter_count() const
{
  Eigen::Index count = 0;
  int fan_in = input_dim;
  for (int l = 0; l < depth; ++l) {
    count += static_cast<Eigen::Index>(width) * fan_in + width;
    fan_in = width;
  }
  return count + width + 1;
}

namespace {

Eigen::MatrixXd standardize(const MlpArchitecture& a, const RowMatrix& x)
{
  Eigen::MatrixXd z = x.transpose();
  for (int j = 0; j < a.input_dim; ++j)
    z.row(j) = (z.row(j).array() - a.mean(j)) / a.scale(j);
  return z;
}

// Forward pass keeping pre-activations; returns the outputs (1 x k).
Eigen::RowVectorXd mlp_forward(const MlpArchitecture& a,
                               const Eigen::VectorXd& p,
                               const Eigen::MatrixXd& z0,
                               std::vector<Eigen::MatrixXd>* pre,
                               std::vector<Eigen::MatrixXd>* act)
{
  Eigen::Index k = 0;
  int fan_in = a.input_dim;
  Eigen::MatrixXd h = z0;
  for (int l = 0; l < a.depth; ++l) {
    Eigen::Map<const Eigen::MatrixXd> w(p.data() + k, a.width, fan_in);
    k += static_cast<Eigen::Index>(a.width) * fan_in;
    Eigen::Map<const Eigen::VectorXd> b(p.data() + k, a.width);
    k += a.width;
    Eigen::MatrixXd zl = w * h;
    zl.colwise() += b;
    if (act)
      act->push_back(h);
    h = zl.cwiseMax(0.0);
    if (pre)
      pre->push_back(std::move(zl));
    fan_in = a.width;
  }
  Eigen::Map<const Eigen::VectorXd> wout(p.data() + k, a.width);
  const double bout = p(k + a.width);
  if (act)
    act->push_back(h);
  Eigen::RowVectorXd out = wout.transpose() * h;
  out.array() += bout;
  return out;
}

Eigen::VectorXd mlp_backward(const MlpArchitecture& a,
                             const Eigen::VectorXd& p,
                             const std::vector<Eigen::MatrixXd>& pre,
                             const std::vector<Eigen::MatrixXd>& act,
                             const Eigen::RowVectorXd& d_out)
{
  Eigen::VectorXd grad(p.size());
  // offsets of each layer's block
  std::vector<Eigen::Index> offsets;
  Eigen::Index k = 0;
  int fan_in = a.input_dim;
  for (int l = 0; l < a.depth; ++l) {
    offsets.push_back(k);
    k += static_cast<Eigen::Index>(a.width) * fan_in + a.width;
    fan_in = a.width;
  }
  const Eigen::Index out_off = k;
  Eigen::Map<const Eigen::VectorXd> wout(p.data() + out_off, a.width);

  const Eigen::MatrixXd& h_last = act.back();
  grad.segment(out_off, a.width) = h_last * d_out.transpose();
  grad(out_off + a.width) = d_out.sum();

  Eigen::MatrixXd delta = wout * d_out; // width x k
  for (int l = a.depth - 1; l >= 0; --l) {
    delta.array() *= (pre[l].array() > 0.0).cast<double>();
    const int in = (l == 0) ? a.input_dim : a.width;
    const Eigen::Index off = offsets[l];
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + off, a.width, in);
    gw.noalias() = delta * act[l].transpose();
    grad.segment(off + static_cast<Eigen::Index>(a.width) * in, a.width) = delta.rowwise().sum();
    if (l > 0) {
      Eigen::Map<const Eigen::MatrixXd> w(p.data() + off, a.width, in);
      delta = w.transpose() * delta;
    }
  }
  return grad;
}

} // namespace

Eigen::VectorXd MlpArchitecture::forward(const Eigen::VectorXd& params, const RowMatrix& x) const
{
  if (x.cols() != input_dim)
    throw ShapeError("MLP input has " + std::to_string(x.cols()) + " columns, expected " +
                     std::to_string(input_dim));
  return mlp_forward(*this, params, standardize(*this, x), nullptr, nullptr).transpose();
}

// ---------------------------------------------------------------------------

double clamp_ratio(double raw, Link link, double r_min, double r_max)
{
  const double r = link == Link::Exp ? std::exp(raw) : raw;
  if (std::isnan(r))
    return r_min;
  return std::clamp(r, r_min, r_max);
}

FittedFunction::FittedFunction(Architecture arch,
                               Eigen::VectorXd params,
                               Link link,
                               double r_min,
                               double r_max)
  : arch_(std::move(arch))
  , params_(std::move(params))
  , link_(link)
  , r_min_(r_min)
  , r_max_(r_max)
{
  if (params_.size() != parameter_count(arch_))
    throw ShapeError("parameter vector does not match the architecture");
  if (!(r_min_ > 0.0 && r_min_ < r_max_))
    throw ConfigError("clamp bounds must satisfy 0 < r_min < r_max");
}

Eigen::Index FittedFunction::input_dim() const
{
  if (const auto* s = std::get_if<PolySieveBasis>(&arch_))
    return s->input_dim();
  return std::get<MlpArchitecture>(arch_).input_dim;
}

Capacity FittedFunction::capacity() const
{
  if (const auto* s = std::get_if<PolySieveBasis>(&arch_))
    return { s->degree, 0 };
  const auto& m = std::get<MlpArchitecture>(arch_);
  return { m.width, m.depth };
}

Eigen::VectorXd FittedFunction::raw_output(const RowMatrix& x) const
{
  if (x.cols() != input_dim())
    throw ShapeError("evaluate: input has " + std::to_string(x.cols()) +
                     " columns, model expects " + std::to_string(input_dim()));
  if (const auto* s = std::get_if<PolySieveBasis>(&arch_))
    return s->design(x) * params_;
  return std::get<MlpArchitecture>(arch_).forward(params_, x);
}

Eigen::VectorXd FittedFunction::evaluate(const RowMatrix& x) const
{
  Eigen::VectorXd out = raw_output(x);
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out(i) = clamp_ratio(out(i), link_, r_min_, r_max_);
  return out;
}

// ---------------------------------------------------------------------------

ErmObjective::ErmObjective(const Architecture& arch,
                           const DivergenceSpec& spec,
                           const RowMatrix& x_source,
                           const RowMatrix& x_target)
  : arch_(arch)
  , spec_(spec)
  , n_(x_source.rows())
  , m_(x_target.rows())
{
  if (x_source.cols() != x_target.cols())
    throw ShapeError("source and target inputs differ in dimension");
  if (n_ < 1 || m_ < 1)
    throw ConfigError("empirical risk needs non-empty samples");
  const RowMatrix all = stack_rows(x_source, x_target);
  if (const auto* s = std::get_if<PolySieveBasis>(&arch_))
    design_ = s->design(all);
  else
    standardized_ = standardize(std::get<MlpArchitecture>(arch_), all);
}

Eigen::Index ErmObjective::parameter_count() const
{
  return shiftel::parameter_count(arch_);
}

Eigen::VectorXd ErmObjective::outputs(const Eigen::VectorXd& params) const
{
  if (design_.size() > 0)
    return design_ * params;
  return mlp_forward(std::get<MlpArchitecture>(arch_), params, standardized_, nullptr, nullptr)
    .transpose();
}

Eigen::VectorXd ErmObjective::output_weights(const Eigen::VectorXd& out, double* value) const
{
  Eigen::VectorXd w(out.size());
  double s1 = 0.0;
  double s2 = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n_);
  const double inv_m = 1.0 / static_cast<double>(m_);
  for (Eigen::Index i = 0; i < n_; ++i) {
    const auto l = spec_.source_loss(out(i));
    s1 += l.value;
    w(i) = inv_n * l.deriv;
  }
  for (Eigen::Index j = 0; j < m_; ++j) {
    const auto l = spec_.target_loss(out(n_ + j));
    s2 += l.value;
    w(n_ + j) = -inv_m * l.deriv;
  }
  if (value)
    *value = s1 * inv_n - s2 * inv_m;
  return w;
}

double ErmObjective::value(const Eigen::VectorXd& params) const
{
  const Eigen::VectorXd out = outputs(params);
  double s1 = 0.0;
  double s2 = 0.0;
  for (Eigen::Index i = 0; i < n_; ++i)
    s1 += spec_.source_loss(out(i)).value;
  for (Eigen::Index j = 0; j < m_; ++j)
    s2 += spec_.target_loss(out(n_ + j)).value;
  return s1 / static_cast<double>(n_) - s2 / static_cast<double>(m_);
}

double ErmObjective::value_and_gradient(const Eigen::VectorXd& params,
                                        Eigen::VectorXd& grad) const
{
  double value = 0.0;
  if (design_.size() > 0) {
    const Eigen::VectorXd out = design_ * params;
    const Eigen::VectorXd w = output_weights(out, &value);
    grad.noalias() = design_.transpose() * w;
    return value;
  }
  const auto& a = std::get<MlpArchitecture>(arch_);
  std::vector<Eigen::MatrixXd> pre;
  std::vector<Eigen::MatrixXd> act;
  const Eigen::RowVectorXd out = mlp_forward(a, params, standardized_, &pre, &act);
  const Eigen::VectorXd w = output_weights(out.transpose(), &value);
  grad = mlp_backward(a, params, pre, act, w.transpose());
  return value;
}

Eigen::MatrixXd ErmObjective::hessian(const Eigen::VectorXd& params) const
{
  if (design_.size() == 0)
    throw ContractError("analytic Hessian is only available for the sieve");
  const Eigen::VectorXd out = design_ * params;
  Eigen::VectorXd w2(out.size());
  const double inv_n = 1.0 / static_cast<double>(n_);
  const double inv_m = 1.0 / static_cast<double>(m_);
  for (Eigen::Index i = 0; i < n_; ++i)
    w2(i) = inv_n * spec_.source_loss(out(i)).deriv2;
  for (Eigen::Index j = 0; j < m_; ++j)
    w2(n_ + j) = -inv_m * spec_.target_loss(out(n_ + j)).deriv2;
  return design_.transpose() * w2.asDiagonal() * design_;
}

// ---------------------------------------------------------------------------

FittedFunction fit_capacity(const FunctionClassConfig& config,
                            const DivergenceSpec& spec,
                            const RowMatrix& x_source,
                            const RowMatrix& x_target,
                            const Capacity& capacity,
                            std::uint64_t seed)
{
  config.validate();
  if (x_source.cols() != x_target.cols())
    throw ShapeError("source and target inputs differ in dimension");
  const Architecture arch =
    build_architecture(config, stack_rows(x_source, x_target), capacity);
  const ErmObjective objective(arch, spec, x_source, x_target);
  Rng rng(seed);
  Eigen::VectorXd init = initial_parameters(arch, spec.link(), rng);

  TrainResult trained = config.optimizer.method == OptimizerMethod::Newton
                          ? train_newton(objective, std::move(init), config.optimizer)
                          : train_adam(objective, std::move(init), config.optimizer);

  FittedFunction f(arch, std::move(trained.params), spec.link(), config.r_min, config.r_max);
  f.history = std::move(trained.history);
  f.epochs = trained.epochs;
  f.objective = empirical_objective(f, spec, x_source, x_target);
  return f;
}

double empirical_objective(const FittedFunction& f,
                           const DivergenceSpec& spec,
                           const RowMatrix& x_source,
                           const RowMatrix& x_target)
{
  const Eigen::VectorXd rs = f.evaluate(x_source);
  const Eigen::VectorXd rt = f.evaluate(x_target);
  return population_objective(spec,
                              { rs.data(), static_cast<std::size_t>(rs.size()) },
                              { rt.data(), static_cast<std::size_t>(rt.size()) });
}

std::size_t cv_select(const FunctionClassConfig& config,
                      const DivergenceSpec& spec,
                      const RowMatrix& x_source,
                      const RowMatrix& x_target,
                      std::vector<double>* scores)
{
  config.validate();
  const auto grid = config.candidates();
  if (grid.empty())
    throw ConfigError("capacity grid is empty");
  const int K = config.cv_folds;
  if (K > x_source.rows() || K > x_target.rows())
    throw ConfigError("cv_folds exceeds the number of source or target rows");

  Rng fold_rng(derive_seed(config.seed, 0xF01D));
  const auto perm_s = shuffled(x_source.rows(), fold_rng);
  const auto perm_t = shuffled(x_target.rows(), fold_rng);

  struct Split
  {
    RowMatrix train_s, train_t, test_s, test_t;
  };
  std::vector<Split> splits;
  for (int k = 0; k < K; ++k) {
    std::vector<Eigen::Index> tr_s, te_s, tr_t, te_t;
    for (std::size_t p = 0; p < perm_s.size(); ++p)
      (static_cast<int>(p % K) == k ? te_s : tr_s).push_back(perm_s[p]);
    for (std::size_t p = 0; p < perm_t.size(); ++p)
      (static_cast<int>(p % K) == k ? te_t : tr_t).push_back(perm_t[p]);
    if (te_s.empty() || te_t.empty() || tr_s.empty() || tr_t.empty())
      throw ConfigError("cross-validation fold " + std::to_string(k) + " has no points");
    splits.push_back({ take_rows(x_source, tr_s),
                       take_rows(x_target, tr_t),
                       take_rows(x_source, te_s),
                       take_rows(x_target, te_t) });
  }

  std::vector<double> score(grid.size(), 0.0);
  std::vector<Eigen::Index> size(grid.size(), 0);
  for (std::size_t c = 0; c < grid.size(); ++c) {
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
      const auto& s = splits[static_cast<std::size_t>(k)];
      const FittedFunction f = fit_capacity(
        config, spec, s.train_s, s.train_t, grid[c], derive_seed(config.seed, k + 1));
      total += empirical_objective(f, spec, s.test_s, s.test_t);
      size[c] = parameter_count(f.architecture());
    }
    score[c] = total / K;
  }

  std::size_t best = 0;
  for (std::size_t c = 1; c < grid.size(); ++c) {
    if (score[c] < score[best] || (score[c] == score[best] && size[c] < size[best]))
      best = c;
  }
  if (scores)
    *scores = score;
  return best;
}

FittedFunction fit_erm(const FunctionClassConfig& config,
                       const DivergenceSpec& spec,
                       const RowMatrix& x_source,
                       const RowMatrix& x_target)
{
  config.validate();
  const auto grid = config.candidates();
  std::vector<double> scores;
  const std::size_t chosen =
    grid.size() == 1 ? 0 : cv_select(config, spec, x_source, x_target, &scores);
  FittedFunction f =
    fit_capacity(config, spec, x_source, x_target, grid[chosen], derive_seed(config.seed, 0));
  f.cv_scores = std::move(scores);
  return f;
}

std::string to_string(FunctionKind kind)
{
  return kind == FunctionKind::Mlp ? "mlp" : "poly-sieve";
}

FunctionKind parse_function_kind(std::string_view s)
{
  if (s == "mlp")
    return FunctionKind::Mlp;
  if (s == "poly-sieve" || s == "sieve")
    return FunctionKind::PolySieve;
  throw ConfigError("unknown function class '" + std::string(s) + "'");
}

std::string to_string(OptimizerMethod m)
{
  return m == OptimizerMethod::Adam ? "adam" : "newton";
}

OptimizerMethod parse_optimizer_method(std::string_view s)
{
  if (s == "adam")
    return OptimizerMethod::Adam;
  if (s == "newton")
    return OptimizerMethod::Newton;
  throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

} // namespace shiftel
