#include "shiftel/error.hpp"
#include "shiftel/harness.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace shiftel;

namespace {

ExperimentPlan tiny_plan()
{
  ExperimentPlan plan;
  ScenarioConfig sc;
  sc.n = 150;
  sc.m = 75;
  sc.d = 2;
  plan.scenarios = { sc };
  plan.estimand = "mean";
  plan.methods = { EstimationMethod::DrwMiE, EstimationMethod::DrwMiT };
  plan.replications = 3;
  plan.truth_draws = 100000;
  plan.pipeline.ratio.degree_or_width_candidates = { 1 };
  plan.pipeline.cde.degree_or_width_candidates = { 1 };
  plan.pipeline.kappa = 50;
  return plan;
}

ReplicationRecord record(EstimationMethod m, double est, double lo, double hi)
{
  ReplicationRecord r;
  r.method = m;
  r.ok = true;
  r.estimate = est;
  r.ci = Interval{ lo, hi };
  r.covered = lo <= 0.0 && 0.0 <= hi;
  r.r_n_truth = 1.0;
  return r;
}

std::size_t count_lines(const std::string& s)
{
  std::size_t n = 0;
  for (char c : s)
    n += c == '\n' ? 1 : 0;
  return n;
}

} // namespace

TEST_CASE("summaries satisfy the mse identity")
{
  auto plan = tiny_plan();
  plan.methods = { EstimationMethod::Drw };
  std::vector<ReplicationRecord> recs{ record(EstimationMethod::Drw, 0.1, -0.1, 0.3),
                                       record(EstimationMethod::Drw, -0.3, -0.5, -0.1),
                                       record(EstimationMethod::Drw, 0.5, 0.2, 0.8) };
  recs.push_back(recs[0]);
  recs.back().ok = false;
  const auto s = summarize(plan, { 0.0 }, recs).at(0);
  CHECK(s.successes == 3);
  CHECK(s.failures == 1);
  CHECK(s.bias == doctest::Approx(0.1));
  CHECK(s.mse == doctest::Approx((0.01 + 0.09 + 0.25) / 3.0));
  CHECK(s.mse == doctest::Approx(s.bias * s.bias + s.std_dev * s.std_dev));
  CHECK(s.coverage == doctest::Approx(1.0 / 3.0));
  CHECK(s.mean_ci_length == doctest::Approx(1.4 / 3.0));
  CHECK(s.median_squared_error == doctest::Approx(0.09));
  CHECK(s.std_dev_defined);

  const auto one = summarize(plan, { 0.0 }, { recs[0] }).at(0);
  CHECK(one.std_dev == 0.0);
  CHECK_FALSE(one.std_dev_defined);
  CHECK(one.bias == doctest::Approx(0.1));
}

TEST_CASE("report tables")
{
  SimReport rep;
  rep.plan = tiny_plan();
  rep.plan.methods.clear();
  const std::string empty = report_table(rep, TableFormat::Csv);
  CHECK(count_lines(empty) == 1);
  CHECK(empty.rfind("setting,model,n,m,d,method,bias", 0) == 0);

  rep.plan = tiny_plan();
  rep.truths = { 0.0 };
  rep.summaries = summarize(rep.plan,
                            rep.truths,
                            { record(EstimationMethod::DrwMiE, 0.12345, -0.2, 0.3),
                              record(EstimationMethod::DrwMiT, -0.5, -0.6, -0.4) });
  const std::string csv = report_table(rep, TableFormat::Csv);
  CHECK(count_lines(csv) == 3);
  CHECK(csv.find("DRW-MI-E,0.1235,0.0000,0.0152,1.0000,0.5000,0") != std::string::npos);
  const std::string text = report_table(rep, TableFormat::Text);
  CHECK(count_lines(text) == 3);
  CHECK(text.find("-0.5000") != std::string::npos);
}

TEST_CASE("true parameters")
{
  ScenarioConfig m1;
  m1.response_model = ResponseModel::M1;
  m1.d = 4;
  CHECK(std::abs(true_parameter(m1, EstimatingFunction::mean(), 400000)) < 0.01);

  ScenarioConfig m3;
  m3.response_model = ResponseModel::M3;
  const double med = true_parameter(m3, EstimatingFunction::quantile(0.5), 200000);
  CHECK(med >= 0.0);
  CHECK(med <= 1.0);
  CHECK(true_parameter(m3, EstimatingFunction::quantile(0.5), 200000) == med);
  // the truth depends on the design only, not on sample sizes or seeds
  m3.n = 77;
  m3.seed = 99;
  CHECK(true_parameter(m3, EstimatingFunction::quantile(0.5), 200000) == med);
}

TEST_CASE("run_plan is deterministic")
{
  auto plan = tiny_plan();
  const auto a = run_plan(plan);
  plan.threads = 2;
  const auto b = run_plan(plan);
  CHECK(replication_log(a) == replication_log(b));
  CHECK(report_table(a, TableFormat::Csv) == report_table(b, TableFormat::Csv));
  CHECK_FALSE(a.run_failed);
  REQUIRE(a.records.size() == 6);
  for (const auto& r : a.records) {
    CHECK(r.ok);
    REQUIRE(r.ci);
    CHECK(r.covered == r.ci->contains(a.truths[0]));
  }
  CHECK(a.summary(0, EstimationMethod::DrwMiT).successes == 3);
  CHECK_THROWS_AS(a.summary(0, EstimationMethod::Mi), ConfigError);
}

TEST_CASE("run_plan reports widespread failures")
{
  auto plan = tiny_plan();
  plan.methods = { EstimationMethod::Drw };
  plan.replications = 2;
  plan.pipeline.el.bracket = std::pair{ 50.0, 51.0 };
  const auto rep = run_plan(plan);
  CHECK(rep.run_failed);
  CHECK(rep.summaries.at(0).failures == 2);
  CHECK(std::isnan(rep.summaries.at(0).bias));
  CHECK(rep.failure_message.find("DRW") != std::string::npos);
}

TEST_CASE("experiment plan validation")
{
  auto plan = tiny_plan();
  CHECK_NOTHROW(plan.validate());
  plan.replications = 0;
  CHECK_THROWS_AS(plan.validate(), ConfigError);
  plan = tiny_plan();
  plan.scenarios.clear();
  CHECK_THROWS_AS(plan.validate(), ConfigError);
  plan = tiny_plan();
  plan.methods = { EstimationMethod::Drw, EstimationMethod::Drw };
  CHECK_THROWS_AS(plan.validate(), ConfigError);
  plan = tiny_plan();
  plan.estimand = "variance";
  CHECK_THROWS_AS(plan.validate(), ConfigError);
}
