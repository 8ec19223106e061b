#include "shiftel/selfcheck.hpp"
#include "shiftel/error.hpp"
#include "shiftel/io.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>

namespace shiftel {

namespace {

struct Failure
{
  std::string message;
};

void expect(bool ok, const std::string& message)
{
  if (!ok)
    throw Failure{ message };
}

template <typename E, typename F>
void expect_throws(F&& f, const std::string& message)
{
  try {
    f();
  } catch (const E&) {
    return;
  }
  throw Failure{ message };
}

Dataset small_dataset(std::uint64_t seed)
{
  ScenarioConfig sc;
  sc.n = 200;
  sc.m = 100;
  sc.d = 2;
  sc.seed = seed;
  return generate_dataset(sc);
}

std::filesystem::path scratch_file(const std::string& name)
{
  return std::filesystem::temp_directory_path() /
         ("shiftel-selfcheck-" + std::to_string(std::hash<std::string>{}(name)) + ".csv");
}

} // namespace

std::vector<CheckResult> run_selfcheck()
{
  std::vector<std::pair<std::string, std::function<void()>>> checks;

  checks.emplace_back("seeded generation is reproducible", [] {
    const Dataset a = small_dataset(5), b = small_dataset(5);
    expect(a.source_x() == b.source_x() && a.source_y() == b.source_y() && a.target_x() == b.target_x(),
           "datasets differ");
  });

  checks.emplace_back("csv counting and tau", [] {
    const auto path = scratch_file("counting");
    write_text(path, "x1,x2,y,role\n0.1,0.2,1.0,source\n0.3,0.4,2.0,source\n0.5,0.6,3.0,source\n"
                     "0.7,0.8,,target\n0.9,1.0,NA,target\n");
    const Dataset d = load_csv(path);
    std::filesystem::remove(path);
    expect(d.n() == 3 && d.m() == 2 && d.d() == 2, "wrong counts");
    expect(std::abs(d.tau_hat() - 0.4) < 1e-15, "tau_hat is not 0.4");
  });

  checks.emplace_back("csv rejects a NaN covariate", [] {
    const auto path = scratch_file("nan");
    write_text(path, "x1,y,role\n0.1,1.0,source\nnan,2.0,source\n0.3,,target\n");
    long row = -1;
    try {
      load_csv(path);
    } catch (const ParseError& e) {
      row = e.row();
    }
    std::filesystem::remove(path);
    expect(row == 2, "expected a parse error at row 2");
  });

  checks.emplace_back("csv rejects an empty target sample", [] {
    const auto path = scratch_file("empty-target");
    write_text(path, "x1,y,role\n0.1,1.0,source\n0.2,2.0,source\n");
    bool thrown = false;
    try {
      load_csv(path);
    } catch (const ConfigError&) {
      thrown = true;
    }
    std::filesystem::remove(path);
    expect(thrown, "expected a configuration error");
  });

  checks.emplace_back("divergences vanish at P = Q", [] {
    for (const char* name : { "kl", "reverse-kl", "pearson", "hellinger" }) {
      const auto spec = divergence_from_name(name);
      const std::vector<double> ones(10, 1.0);
      const double l = population_objective(spec, ones, ones);
      expect(std::abs(divergence_estimate(spec, l)) < 1e-12, std::string(name) + " is not zero");
    }
  });

  checks.emplace_back("S1 density ratio is a ratio", [] {
    Rng rng(17);
    const RowMatrix x = generate_covariates(CovariateSetting::S1, SampleRole::Source, 20000, 2, rng);
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      s += true_density_ratio_s1(row_span(x, i));
    expect(std::abs(s / 20000.0 - 1.0) < 0.03, "source mean of the ratio is not 1");
  });

  checks.emplace_back("EL multiplier vanishes for centred rows", [] {
    Eigen::MatrixXd psi(4, 1);
    psi << -2, -1, 1, 2;
    const auto sol = solve_lambda(psi);
    expect(sol.converged && std::abs(sol.lambda(0)) < 1e-12 && std::abs(sol.log_el) < 1e-12,
           "lambda is not zero");
    expect((sol.weights.array() - 0.25).abs().maxCoeff() < 1e-12, "weights are not uniform");
  });

  checks.emplace_back("EL hull violation", [] {
    Eigen::MatrixXd psi(3, 1);
    psi << 0.5, 1.0, 2.0;
    expect_throws<ConvexHullViolation>([&] { solve_lambda(psi); }, "positive rows were accepted");
  });

  checks.emplace_back("chi-squared threshold", [] {
    expect(std::abs(chi_squared_quantile(0.95, 1) - 3.841458820694124) < 1e-9, "wrong quantile");
  });

  checks.emplace_back("quadratic Wilks inversion", [] {
    InferenceResult res;
    res.theta_hat = Eigen::VectorXd::Constant(1, 0.0);
    res.bracket = { -1.0, 1.0 };
    res.ell = [](const Eigen::VectorXd& t) { return 50.0 * t(0) * t(0); };
    const auto ci = wilks_ci(res, 0.95);
    const double half = std::sqrt(3.841458820694124 / 100.0);
    expect(std::abs(ci.hi - half) < 1e-4 && std::abs(ci.lo + half) < 1e-4, "wrong interval");
  });

  checks.emplace_back("DRW refuses Wilks intervals", [] {
    InferenceResult res;
    res.kind = MomentKind::Drw;
    res.theta_hat = Eigen::VectorXd::Zero(1);
    expect_throws<ContractError>([&] { wilks_ci(res, 0.95); }, "no contract error");
  });

  checks.emplace_back("unit weights give the EL mean", [] {
    const Dataset d = small_dataset(6);
    Nuisances nu;
    nu.source_ratio = Eigen::VectorXd::Ones(d.n());
    const auto res = maximize_el(d, nu, EstimatingFunction::mean(), MomentKind::Drw);
    expect(std::abs(res.theta_hat(0) - d.source_y().mean()) < 1e-6, "estimate is not the sample mean");
  });

  checks.emplace_back("imputations do not depend on theta", [] {
    const Dataset d = small_dataset(7);
    const auto sampler = [](std::span<const double> x, Rng& rng) {
      return x[0] + std::normal_distribution<double>(0.0, 1.0)(rng);
    };
    const RowMatrix pooled = d.pooled_x();
    const ImputationSet a = impute_from_sampler(sampler, pooled, 20, 3);
    const ImputationSet b = impute_from_sampler(sampler, pooled, 20, 3);
    expect(a.draws == b.draws, "draws differ");
    Nuisances nu;
    nu.source_ratio = Eigen::VectorXd::Ones(d.n());
    nu.imputations = std::make_shared<const ImputationSet>(a);
    const auto g = EstimatingFunction::quantile(0.5);
    build_moments(MomentKind::Orthogonal, d, nu, g, Eigen::VectorXd::Constant(1, -1.0));
    build_moments(MomentKind::Orthogonal, d, nu, g, Eigen::VectorXd::Constant(1, 1.0));
    expect(nu.imputations->draws == b.draws, "draws changed with theta");
  });

  checks.emplace_back("report table without methods is a header", [] {
    SimReport rep;
    rep.plan.scenarios = { ScenarioConfig{} };
    rep.plan.methods.clear();
    const std::string t = report_table(rep, TableFormat::Csv);
    expect(std::count(t.begin(), t.end(), '\n') == 1, "body rows present");
  });

  checks.emplace_back("single replication has no spread", [] {
    ExperimentPlan plan;
    plan.scenarios = { ScenarioConfig{} };
    plan.methods = { EstimationMethod::Drw };
    ReplicationRecord r;
    r.method = EstimationMethod::Drw;
    r.ok = true;
    r.estimate = 0.25;
    const auto s = summarize(plan, { 0.0 }, { r }).at(0);
    expect(s.std_dev == 0.0 && !s.std_dev_defined, "std_dev is not flagged");
    expect(std::abs(s.mse - s.bias * s.bias - s.std_dev * s.std_dev) < 1e-15, "mse identity");
  });

  checks.emplace_back("model documents round-trip", [] {
    const Dataset d = small_dataset(8);
    auto cfg = FunctionClassConfig::poly_sieve();
    cfg.degree_or_width_candidates = { 2 };
    const RatioModel r = fit_ddr(d, divergence_from_name("kl"), cfg);
    const RatioModel back = ratio_model_from_json(Json::parse(dump(to_json(r))));
    expect(back.evaluate(d.target_x()) == r.evaluate(d.target_x()), "ratio values differ");
  });

  std::vector<CheckResult> out;
  for (auto& [name, fn] : checks) {
    CheckResult c;
    c.name = name;
    try {
      fn();
      c.passed = true;
    } catch (const Failure& f) {
      c.detail = f.message;
    } catch (const std::exception& e) {
      c.detail = std::string("unexpected error: ") + e.what();
    }
    out.push_back(std::move(c));
  }
  return out;
}

} // namespace shiftel
