#include "shiftel/estimation.hpp"
#include "shiftel/error.hpp"

namespace shiftel {

namespace {

FunctionClassConfig fixed_capacity(FunctionClassConfig config, const Capacity& c)
{
  config.degree_or_width_candidates = { c.size };
  if (config.kind == FunctionKind::Mlp)
    config.depth_candidates = { c.depth };
  return config;
}

bool needs_ratio(EstimationMethod m)
{
  return m == EstimationMethod::DrwMiE || m == EstimationMethod::Drw;
}

bool needs_cde(EstimationMethod m)
{
  return m == EstimationMethod::DrwMiE || m == EstimationMethod::Mi;
}

int resolve_kappa(const PipelineConfig& config, const Dataset& data)
{
  return config.kappa > 0 ? config.kappa : static_cast<int>(std::max<Eigen::Index>(1, data.total() / 2));
}

} // namespace

void PipelineConfig::validate() const
{
  divergence_from_name(divergence);
  ratio.validate();
  cde.validate();
  el.validate();
  if (kappa < 0)
    throw ConfigError("kappa must be non-negative (0 selects N / 2)");
  if (!(level > 0.0 && level < 1.0))
    throw ConfigError("confidence level must lie in (0, 1)");
  if (bootstrap_replicates < 50)
    throw ConfigError("bootstrap needs at least 50 resamples");
  if (ratio_method == RatioMethod::Function && !ratio_model)
    throw ConfigError("ratio method 'function' needs a supplied ratio model");
  if (aux.grid_size < 2 || !(aux.inflation > 0.0) || aux.grid_margin < 0.0)
    throw ConfigError("invalid auxiliary distribution settings");
}

MomentKind moment_kind(EstimationMethod method)
{
  switch (method) {
    case EstimationMethod::Drw:
      return MomentKind::Drw;
    case EstimationMethod::Mi:
      return MomentKind::Imputation;
    default:
      return MomentKind::Orthogonal;
  }
}

CiMethod default_ci(EstimationMethod method)
{
  return (method == EstimationMethod::DrwMiE || method == EstimationMethod::DrwMiT)
           ? CiMethod::WilksChi2
           : CiMethod::Bootstrap;
}

FittedNuisances fit_nuisances(EstimationMethod method,
                              const Dataset& data,
                              const PipelineConfig& config,
                              const OracleNuisances* oracle)
{
  FittedNuisances out;
  const int kappa = resolve_kappa(config, data);
  if (method == EstimationMethod::DrwMiT) {
    if (!oracle || !oracle->ratio || !oracle->sampler)
      throw ConfigError("DRW-MI-T needs the true nuisances of a simulation design");
    out.ratio = RatioModel::from_function("oracle", oracle->ratio, data.d());
    out.values.source_ratio = out.ratio->evaluate(data.source_x());
    out.values.imputations = std::make_shared<const ImputationSet>(impute_from_sampler(
      oracle->sampler, data.pooled_x(), kappa, derive_seed(config.seed, 3), config.threads));
    return out;
  }
  const auto spec = divergence_from_name(config.divergence);
  if (needs_ratio(method)) {
    if (config.ratio_model) {
      if (config.ratio_model->input_dim() != data.d())
        throw ShapeError("the supplied ratio model expects " +
                         std::to_string(config.ratio_model->input_dim()) + " covariates");
      out.ratio = *config.ratio_model;
    } else {
      switch (config.ratio_method) {
        case RatioMethod::Ddr: {
          auto rc = config.ratio;
          rc.seed = derive_seed(config.seed, 1);
          out.ratio = fit_ddr(data, spec, rc);
          break;
        }
        case RatioMethod::KernelSmoothing:
          out.ratio = fit_kernel_smoothing(data, config.kernel);
          break;
        case RatioMethod::ProbClassification:
          out.ratio = fit_prob_classification(data, config.classifier);
          break;
        case RatioMethod::Function:
          throw ConfigError("a function ratio must be supplied as a model");
      }
    }
    out.values.source_ratio = out.ratio->evaluate(data.source_x());
  }
  if (needs_cde(method)) {
    if (config.cde_model) {
      if (config.cde_model->input_dim() != data.d())
        throw ShapeError("the supplied conditional density model expects " +
                         std::to_string(config.cde_model->input_dim()) + " covariates");
      out.cde = *config.cde_model;
    } else {
      auto cc = config.cde;
      cc.seed = derive_seed(config.seed, 2);
      out.cde = fit_conditional_density(data, spec, cc, config.aux, derive_seed(config.seed, 5));
    }
    out.values.imputations = std::make_shared<const ImputationSet>(
      impute(*out.cde, data.pooled_x(), kappa, derive_seed(config.seed, 3), config.threads));
  }
  return out;
}

EstimateReport run_estimate(const Dataset& data,
                            const EstimatingFunction& g,
                            EstimationMethod method,
                            const PipelineConfig& config,
                            const OracleNuisances* oracle)
{
  config.validate();
  EstimateReport rep;
  rep.method = method;
  rep.kappa = resolve_kappa(config, data);
  rep.nuisances = fit_nuisances(method, data, config, oracle);
  const MomentKind kind = moment_kind(method);
  rep.inference = maximize_el(data, rep.nuisances.values, g, kind, config.el);
  rep.ci_method = config.ci.value_or(default_ci(method));
  rep.inference.level = config.level;

  if (rep.ci_method == CiMethod::WilksChi2) {
    rep.ci = wilks_ci(rep.inference, config.level, config.el);
  } else if (rep.ci_method == CiMethod::Bootstrap) {
    if (g.p() != 1)
      throw ContractError("bootstrap intervals are only available for a scalar parameter");
    if (method == EstimationMethod::DrwMiT)
      throw ContractError("bootstrap refits nuisances and is not defined for oracle nuisances");
    // capacities stay at the full-sample choice; everything else is refitted
    PipelineConfig inner = config;
    if (rep.nuisances.ratio && rep.nuisances.ratio->method() == RatioMethod::Ddr)
      inner.ratio = fixed_capacity(
        config.ratio, std::get<FittedFunction>(rep.nuisances.ratio->impl()).capacity());
    if (rep.nuisances.cde)
      inner.cde = fixed_capacity(config.cde, rep.nuisances.cde->ratio().capacity());
    if (rep.nuisances.ratio && rep.nuisances.ratio->method() == RatioMethod::Function)
      throw ContractError("bootstrap cannot refit a user-supplied ratio function");
    if (rep.nuisances.ratio)
      inner.ratio_method = rep.nuisances.ratio->method();
    inner.ratio_model.reset();
    inner.cde_model.reset();
    inner.threads = 1;
    inner.kappa = rep.kappa;
    const auto estimator = [&](const Dataset& rs, std::uint64_t seed) {
      PipelineConfig c = inner;
      c.seed = seed;
      const FittedNuisances nu = fit_nuisances(method, rs, c, oracle);
      return maximize_el(rs, nu.values, g, kind, c.el).theta_hat(0);
    };
    rep.bootstrap = bootstrap_ci(
      data, estimator, config.bootstrap_replicates, config.level, derive_seed(config.seed, 4), config.threads);
    rep.ci = rep.bootstrap->interval;
  }
  rep.inference.ci_method = rep.ci_method;
  rep.inference.ci = rep.ci;
  return rep;
}

std::string to_string(EstimationMethod m)
{
  switch (m) {
    case EstimationMethod::DrwMiE:
      return "DRW-MI-E";
    case EstimationMethod::DrwMiT:
      return "DRW-MI-T";
    case EstimationMethod::Drw:
      return "DRW";
    case EstimationMethod::Mi:
      return "MI";
  }
  return "DRW-MI-E";
}

EstimationMethod parse_estimation_method(std::string_view s)
{
  if (s == "DRW-MI-E" || s == "drw-mi" || s == "drw-mi-e")
    return EstimationMethod::DrwMiE;
  if (s == "DRW-MI-T" || s == "drw-mi-t")
    return EstimationMethod::DrwMiT;
  if (s == "DRW" || s == "drw")
    return EstimationMethod::Drw;
  if (s == "MI" || s == "mi")
    return EstimationMethod::Mi;
  throw ConfigError("unknown method '" + std::string(s) + "' (expected drw-mi, drw, mi or drw-mi-t)");
}

} // namespace shiftel
