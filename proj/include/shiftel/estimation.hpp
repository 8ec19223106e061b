#pragma once

#include "shiftel/cond_density.hpp"
#include "shiftel/density_ratio.hpp"
#include "shiftel/el.hpp"
#include "shiftel/moments.hpp"

#include <optional>
#include <string>

namespace shiftel {

enum class EstimationMethod
{
  DrwMiE, //!< orthogonal moment with estimated nuisances
  DrwMiT, //!< orthogonal moment with the true nuisances (simulation only)
  Drw,    //!< ratio-weighted source moment
  Mi      //!< imputed target moment
};

struct PipelineConfig
{
  std::string divergence = "kl";
  RatioMethod ratio_method = RatioMethod::Ddr;
  FunctionClassConfig ratio = FunctionClassConfig::poly_sieve();
  KernelConfig kernel{};
  ClassifierConfig classifier{};
  FunctionClassConfig cde = default_cde_config();
  AuxConfig aux{};
  //! Imputations per row; 0 means N / 2.
  int kappa = 0;
  ELConfig el{};
  //! Interval rule; empty picks Wilks for DRW-MI-E/T and bootstrap otherwise.
  std::optional<CiMethod> ci;
  int bootstrap_replicates = 200;
  double level = 0.95;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  //! Models used for the full-sample fit instead of fitting; bootstrap
  //! resamples are still refitted.
  std::optional<RatioModel> ratio_model;
  std::optional<CondDensityModel> cde_model;

  void validate() const;
};

//! True nuisances of a simulation design.
struct OracleNuisances
{
  RatioOracle ratio;
  ConditionalSampler sampler;
};

struct FittedNuisances
{
  std::optional<RatioModel> ratio;
  std::optional<CondDensityModel> cde;
  Nuisances values;
};

MomentKind moment_kind(EstimationMethod method);
CiMethod default_ci(EstimationMethod method);

//! Fits (or, for DRW-MI-T, evaluates) the nuisances a method needs.
FittedNuisances fit_nuisances(EstimationMethod method,
                              const Dataset& data,
                              const PipelineConfig& config,
                              const OracleNuisances* oracle = nullptr);

struct EstimateReport
{
  EstimationMethod method = EstimationMethod::DrwMiE;
  InferenceResult inference;
  CiMethod ci_method = CiMethod::None;
  std::optional<Interval> ci;
  std::optional<BootstrapResult> bootstrap;
  FittedNuisances nuisances;
  int kappa = 0;
};

//! Point estimate, EL ratio function and interval for one dataset.
EstimateReport run_estimate(const Dataset& data,
                            const EstimatingFunction& g,
                            EstimationMethod method,
                            const PipelineConfig& config,
                            const OracleNuisances* oracle = nullptr);

std::string to_string(EstimationMethod m);
EstimationMethod parse_estimation_method(std::string_view s);

} // namespace shiftel
