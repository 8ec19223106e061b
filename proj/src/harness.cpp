#include "shiftel/harness.hpp"
#include "shiftel/error.hpp"
#include "shiftel/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <random>
#include <sstream>

namespace shiftel {

namespace {

constexpr std::uint64_t kTruthSeed = 0x7E57AB1E;

std::string fmt4(double v)
{
  if (std::isnan(v))
    return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  // avoid "-0.0000"
  if (std::string(buf) == "-0.0000")
    return "0.0000";
  return buf;
}

double type7(std::vector<double>& v, double q)
{
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  if (lo + 1 >= v.size())
    return a;
  const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
  return a + (h - static_cast<double>(lo)) * (b - a);
}

std::string scenario_key(const ScenarioConfig& s)
{
  return to_string(s.covariate_setting) + "/" + to_string(s.response_model) + "/d" + std::to_string(s.d);
}

} // namespace

void ExperimentPlan::validate() const
{
  if (scenarios.empty())
    throw ConfigError("experiment plan needs at least one scenario");
  for (const auto& s : scenarios)
    s.validate();
  if (replications < 1)
    throw ConfigError("replications must be at least 1");
  const auto g = parse_estimand(estimand);
  if (g.p() != 1)
    throw ConfigError("the harness supports scalar estimands only");
  std::vector<EstimationMethod> seen;
  for (auto m : methods) {
    if (std::find(seen.begin(), seen.end(), m) != seen.end())
      throw ConfigError("method " + to_string(m) + " is listed twice");
    seen.push_back(m);
  }
  if (truth_draws < 1000)
    throw ConfigError("truth_draws must be at least 1000");
  pipeline.validate();
}

const MethodSummary& SimReport::summary(std::size_t scenario, EstimationMethod method) const
{
  for (const auto& s : summaries)
    if (s.scenario == scenario && s.method == method)
      return s;
  throw ConfigError("no summary for method " + to_string(method) + " in scenario " +
                    std::to_string(scenario));
}

double true_parameter(const ScenarioConfig& scenario, const EstimatingFunction& g, std::int64_t draws)
{
  if (g.kind() == EstimandKind::Custom)
    throw ContractError("true parameters are only tabulated for mean and quantile estimands");
  if (draws < 1)
    throw ConfigError("true_parameter needs a positive number of draws");
  static std::mutex mutex;
  static std::map<std::string, double> cache;
  const std::string key =
    scenario_key(scenario) + "/" + estimand_label(g) + "/" + std::to_string(draws);
  std::lock_guard lock(mutex);
  if (auto it = cache.find(key); it != cache.end())
    return it->second;

  std::uint64_t h = kTruthSeed;
  for (char c : scenario_key(scenario))
    h = derive_seed(h, static_cast<unsigned char>(c));
  Rng rng(h);
  constexpr std::int64_t chunk = 1 << 18;
  std::vector<double> ys;
  long double sum = 0.0L;
  if (g.kind() == EstimandKind::Quantile)
    ys.reserve(static_cast<std::size_t>(draws));
  for (std::int64_t done = 0; done < draws; done += chunk) {
    const std::int64_t k = std::min(chunk, draws - done);
    const RowMatrix x =
      generate_covariates(scenario.covariate_setting, SampleRole::Target, k, scenario.d, rng);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double y = generate_response(row_span(x, i), scenario.response_model, rng);
      if (g.kind() == EstimandKind::Quantile)
        ys.push_back(y);
      else
        sum += y;
    }
  }
  const double value = g.kind() == EstimandKind::Quantile
                         ? type7(ys, g.alpha())
                         : static_cast<double>(sum / static_cast<long double>(draws));
  cache.emplace(key, value);
  return value;
}

OracleNuisances oracle_nuisances(const ScenarioConfig& scenario)
{
  OracleNuisances o;
  const auto setting = scenario.covariate_setting;
  const auto model = scenario.response_model;
  o.ratio = [setting](std::span<const double> x) { return true_density_ratio(setting, x); };
  o.sampler = [model](std::span<const double> x, Rng& rng) {
    return generate_response(x, model, rng);
  };
  return o;
}

std::vector<MethodSummary> summarize(const ExperimentPlan& plan,
                                     const std::vector<double>& truths,
                                     const std::vector<ReplicationRecord>& records)
{
  const double q = chi_squared_quantile(plan.pipeline.level, 1);
  std::vector<MethodSummary> out;
  for (std::size_t s = 0; s < plan.scenarios.size(); ++s) {
    for (auto method : plan.methods) {
      MethodSummary sum;
      sum.scenario = s;
      sum.method = method;
      std::vector<double> est, sq;
      double covered = 0.0, length = 0.0, rn = 0.0, reject = 0.0;
      int with_ci = 0;
      for (const auto& r : records) {
        if (r.scenario != s || r.method != method)
          continue;
        if (!r.ok) {
          ++sum.failures;
          continue;
        }
        est.push_back(r.estimate);
        sq.push_back((r.estimate - truths[s]) * (r.estimate - truths[s]));
        if (r.ci) {
          ++with_ci;
          covered += r.covered ? 1.0 : 0.0;
          length += r.ci->length();
        }
        rn += r.r_n_truth;
        reject += r.r_n_truth > q ? 1.0 : 0.0;
      }
      sum.successes = static_cast<int>(est.size());
      if (est.empty()) {
        const double nan = std::nan("");
        sum.bias = sum.std_dev = sum.mse = sum.median_squared_error = nan;
        sum.coverage = sum.mean_ci_length = sum.mean_r_n_truth = sum.rejection_rate = nan;
        out.push_back(sum);
        continue;
      }
      const double k = static_cast<double>(est.size());
      double mean = 0.0;
      for (double e : est)
        mean += e;
      mean /= k;
      double var = 0.0;
      for (double e : est)
        var += (e - mean) * (e - mean);
      var /= k;
      sum.bias = mean - truths[s];
      sum.std_dev = std::sqrt(var);
      sum.std_dev_defined = est.size() > 1;
      sum.mse = sum.bias * sum.bias + var;
      sum.median_squared_error = type7(sq, 0.5);
      sum.coverage = with_ci > 0 ? covered / with_ci : std::nan("");
      sum.mean_ci_length = with_ci > 0 ? length / with_ci : std::nan("");
      sum.mean_r_n_truth = rn / k;
      sum.rejection_rate = reject / k;
      out.push_back(sum);
    }
  }
  return out;
}

SimReport run_plan(const ExperimentPlan& plan)
{
  plan.validate();
  const auto g = parse_estimand(plan.estimand);
  SimReport report;
  report.plan = plan;
  for (const auto& s : plan.scenarios)
    report.truths.push_back(true_parameter(s, g, plan.truth_draws));

  const std::size_t reps = static_cast<std::size_t>(plan.replications);
  const std::size_t methods = plan.methods.size();
  report.records.resize(plan.scenarios.size() * reps * methods);
  parallel_for(plan.scenarios.size() * reps, plan.threads, [&](std::size_t task) {
    const std::size_t s = task / reps;
    const int rep = static_cast<int>(task % reps);
    ScenarioConfig sc = plan.scenarios[s];
    sc.seed = derive_seed(derive_seed(plan.master_seed, s), static_cast<std::uint64_t>(rep));
    const Dataset data = generate_dataset(sc);
    const OracleNuisances oracle = oracle_nuisances(sc);
    const double theta0 = report.truths[s];
    for (std::size_t k = 0; k < methods; ++k) {
      ReplicationRecord& rec = report.records[task * methods + k];
      rec.scenario = s;
      rec.replication = rep;
      rec.method = plan.methods[k];
      PipelineConfig pc = plan.pipeline;
      pc.threads = 1;
      pc.seed = derive_seed(sc.seed, 1000 + static_cast<std::uint64_t>(rec.method));
      rec.seed = pc.seed;
      try {
        const EstimateReport est = run_estimate(data, g, rec.method, pc, &oracle);
        rec.estimate = est.inference.theta_hat(0);
        rec.ci = est.ci;
        rec.covered = est.ci && est.ci->contains(theta0);
        rec.r_n_truth = est.inference.r_n(theta0);
        rec.ok = std::isfinite(rec.estimate);
        if (!rec.ok)
          rec.error = "non-finite estimate";
      } catch (const Error& e) {
        rec.ok = false;
        rec.error = e.what();
      }
    }
  });

  report.summaries = summarize(plan, report.truths, report.records);
  for (const auto& s : report.summaries) {
    const int total = s.successes + s.failures;
    if (s.failures * 10 > total) {
      report.run_failed = true;
      if (!report.failure_message.empty())
        report.failure_message += "; ";
      report.failure_message += to_string(s.method) + " failed in " + std::to_string(s.failures) +
                                " of " + std::to_string(total) + " replications of scenario " +
                                std::to_string(s.scenario);
    }
  }
  return report;
}

std::string report_table(const SimReport& report, TableFormat format)
{
  const std::vector<std::string> header{ "setting", "model", "n",        "m",         "d",
                                         "method",  "bias",  "std_dev",  "mse",       "coverage",
                                         "ci_length", "failures" };
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : report.summaries) {
    const auto& sc = report.plan.scenarios.at(s.scenario);
    rows.push_back({ to_string(sc.covariate_setting),
                     to_string(sc.response_model),
                     std::to_string(sc.n),
                     std::to_string(sc.m),
                     std::to_string(sc.d),
                     to_string(s.method),
                     fmt4(s.bias),
                     fmt4(s.std_dev),
                     fmt4(s.mse),
                     fmt4(s.coverage),
                     fmt4(s.mean_ci_length),
                     std::to_string(s.failures) });
  }
  std::ostringstream os;
  if (format == TableFormat::Csv) {
    const auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i)
        os << (i ? "," : "") << cells[i];
      os << '\n';
    };
    line(header);
    for (const auto& r : rows)
      line(r);
    return os.str();
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    width[i] = header[i].size();
    for (const auto& r : rows)
      width[i] = std::max(width[i], r[i].size());
  }
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i)
        os << "  ";
      // text columns left-aligned, numbers right-aligned
      const bool left = i < 2 || i == 5;
      const std::string pad(width[i] - cells[i].size(), ' ');
      os << (left ? cells[i] + pad : pad + cells[i]);
    }
    os << '\n';
  };
  line(header);
  for (const auto& r : rows)
    line(r);
  return os.str();
}

std::string replication_log(const SimReport& report)
{
  std::ostringstream os;
  os << "scenario,replication,method,seed,ok,estimate,ci_lo,ci_hi,covered,r_n_truth,error\n";
  char buf[64];
  const auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : report.records) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), '"', '\'');
    os << r.scenario << ',' << r.replication << ',' << to_string(r.method) << ',' << r.seed << ','
       << (r.ok ? 1 : 0) << ',' << (r.ok ? num(r.estimate) : "NA") << ','
       << (r.ci ? num(r.ci->lo) : "NA") << ',' << (r.ci ? num(r.ci->hi) : "NA") << ','
       << (r.covered ? 1 : 0) << ',' << (r.ok ? num(r.r_n_truth) : "NA") << ",\"" << err << "\"\n";
  }
  return os.str();
}

} // namespace shiftel
