#pragma once

#include "shiftel/estimation.hpp"

#include <optional>
#include <string>
#include <vector>

namespace shiftel {

struct ExperimentPlan
{
  std::string name = "experiment";
  //! Design grid; the seed of each entry is ignored (replication seeds are
  //! derived from master_seed).
  std::vector<ScenarioConfig> scenarios;
  //! "mean", "median" or "quantile:<alpha>".
  std::string estimand = "median";
  std::vector<EstimationMethod> methods{ EstimationMethod::DrwMiE, EstimationMethod::Drw };
  int replications = 300;
  std::uint64_t master_seed = 1;
  //! Interval level and nuisance settings shared by every method.
  PipelineConfig pipeline{};
  //! Monte-Carlo draws for the true parameter.
  std::int64_t truth_draws = 10'000'000;
  unsigned threads = 1;

  void validate() const;
};

struct ReplicationRecord
{
  std::size_t scenario = 0;
  int replication = 0;
  EstimationMethod method = EstimationMethod::DrwMiE;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double estimate = 0.0;
  std::optional<Interval> ci;
  bool covered = false;
  //! R_N at the true parameter (+inf when infeasible).
  double r_n_truth = 0.0;
};

struct MethodSummary
{
  std::size_t scenario = 0;
  EstimationMethod method = EstimationMethod::DrwMiE;
  int successes = 0;
  int failures = 0;
  double bias = 0.0;
  //! Root mean squared deviation about the mean (divisor k), so that
  //! mse = bias^2 + std_dev^2.
  double std_dev = 0.0;
  //! False for a single replication; std_dev is then reported as 0.
  bool std_dev_defined = false;
  double mse = 0.0;
  double median_squared_error = 0.0;
  double coverage = 0.0;
  double mean_ci_length = 0.0;
  double mean_r_n_truth = 0.0;
  //! Share of replications with R_N(theta0) above the chi-squared quantile.
  double rejection_rate = 0.0;
};

struct SimReport
{
  ExperimentPlan plan;
  std::vector<double> truths;
  std::vector<MethodSummary> summaries;
  std::vector<ReplicationRecord> records;
  bool run_failed = false;
  std::string failure_message;

  const MethodSummary& summary(std::size_t scenario, EstimationMethod method) const;
};

//! Target-population parameter of a simulation design, from `draws` target
//! draws with a fixed seed. Cached per (design, estimand, draws).
double true_parameter(const ScenarioConfig& scenario,
                      const EstimatingFunction& g,
                      std::int64_t draws = 10'000'000);

//! True nuisances of a simulation design.
OracleNuisances oracle_nuisances(const ScenarioConfig& scenario);

//! Runs every (scenario, replication, method) cell. Replications run in
//! parallel; aggregation follows replication order, so the report does not
//! depend on the thread count.
SimReport run_plan(const ExperimentPlan& plan);

//! Aggregates records into per-method summaries.
std::vector<MethodSummary> summarize(const ExperimentPlan& plan,
                                     const std::vector<double>& truths,
                                     const std::vector<ReplicationRecord>& records);

enum class TableFormat
{
  Csv,
  Text
};

//! One row per (scenario, method), numbers with 4 decimals.
std::string report_table(const SimReport& report, TableFormat format);

//! Per-replication CSV log.
std::string replication_log(const SimReport& report);

} // namespace shiftel
