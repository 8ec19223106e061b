// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include "designs.hpp"

#include "shiftel/error.hpp"
#include "shiftel/harness.hpp"
#include "shiftel/io.hpp"
#include "shiftel/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace shiftel;

namespace {

struct Outcome
{
  bool passed = false;
  std::string detail;
};

struct Criterion
{
  int id;
  std::string name;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(double v, int precision = 4)
{
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

double median(std::vector<double> v)
{
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size();
  return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

// Fixed-width MLP with a shortened Adam schedule; no capacity search.
FunctionClassConfig desk_mlp(std::uint64_t seed)
{
  auto cfg = FunctionClassConfig::mlp();
  cfg.degree_or_width_candidates = { 16 };
  cfg.depth_candidates = { 1 };
  cfg.optimizer.learning_rate = 0.03;
  cfg.optimizer.max_epochs = 800;
  cfg.seed = seed;
  return cfg;
}

double normal_pdf(double z)
{
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

// ---- 1 ----------------------------------------------------------------------

Outcome ratio_oracle()
{
  const auto spec = divergence_from_name("kl");
  const RatioOracle r0 = [](std::span<const double> x) { return 2.0 * x[0]; };
  int good = 0;
  std::vector<double> errors;
  for (int rep = 0; rep < 30; ++rep) {
    const Dataset data = testing::linear_shift(5000, 2500, derive_seed(101, rep));
    const RatioModel r = fit_ddr(data, spec, desk_mlp(derive_seed(102, rep)));
    const double e = empirical_l2_error(r, r0, data.source_x());
    errors.push_back(e);
    good += e <= 0.15 ? 1 : 0;
  }
  return { good >= 24,
           std::to_string(good) + "/30 with E_N <= 0.15, median E_N " + fmt(median(errors)) };
}

// ---- 2 ----------------------------------------------------------------------

Outcome ratio_mse_s1()
{
  const auto spec = divergence_from_name("kl");
  std::vector<double> medians;
  std::string detail = "median MSE";
  for (const std::int64_t n : { 1000, 2000, 5000 }) {
    std::vector<double> mse;
    for (int rep = 0; rep < 30; ++rep) {
      ScenarioConfig sc;
      sc.n = n;
      sc.m = n / 2;
      sc.d = 5;
      sc.seed = derive_seed(201, static_cast<std::uint64_t>(n * 100 + rep));
      const Dataset data = generate_dataset(sc);
      const RatioModel r = fit_ddr(data, spec, desk_mlp(derive_seed(sc.seed, 1)));
      mse.push_back(ratio_mse(r, true_density_ratio_s1, data.source_x()));
    }
    medians.push_back(median(mse));
    detail += " n=" + std::to_string(n) + ": " + fmt(medians.back());
  }
  const bool monotone = medians[0] >= medians[1] && medians[1] >= medians[2];
  return { medians[2] <= 0.45 && monotone, detail + (monotone ? "" : " (not monotone)") };
}

// ---- 3 ----------------------------------------------------------------------

Outcome gaussian_cde()
{
  const auto spec = divergence_from_name("kl");
  const auto oracle = [](double y, std::span<const double> x) { return normal_pdf(y - x[0]); };
  RowMatrix probes(5, 1);
  probes << 0.1, 0.3, 0.5, 0.7, 0.9;
  std::vector<double> ise;
  for (int rep = 0; rep < 10; ++rep) {
    const Dataset data = testing::linear_shift(5000, 2500, derive_seed(301, rep));
    auto cfg = default_cde_config();
    cfg.seed = derive_seed(302, rep);
    const auto model = fit_conditional_density(data, spec, cfg, AuxConfig{}, derive_seed(303, rep));
    ise.push_back(grid_ise(model, probes, oracle));
  }
  const double med = median(ise);
  return { med <= 0.01, "median grid ISE " + fmt(med) + ", max " + fmt(*std::max_element(ise.begin(), ise.end())) };
}

// ---- 4 ----------------------------------------------------------------------

Outcome orthogonality()
{
  ScenarioConfig sc;
  sc.n = 100000;
  sc.m = 100000;
  sc.d = 5;
  sc.seed = 401;
  const Dataset data = generate_dataset(sc);
  const auto g = EstimatingFunction::mean();
  const Eigen::VectorXd theta0 = Eigen::VectorXd::Constant(1, true_parameter(sc, g, 1000000));

  NuisanceFunctions eta0;
  eta0.ratio = true_density_ratio_s1;
  eta0.moment = [](std::span<const double> x, const Eigen::VectorXd& theta) {
    return Eigen::VectorXd::Constant(1, regression_function(x, ResponseModel::M2) - theta(0));
  };

  // perturbation directions, scaled to unit L2(P) norm on the source sample
  const auto hr = [](std::span<const double> x) { return std::sin(std::numbers::pi * (x[1] + x[3])); };
  const auto hm = [](std::span<const double> x) { return std::cos(std::numbers::pi * x[0]) + x[2]; };
  double nr = 0.0, nm = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    nr += std::pow(hr(row_span(data.source_x(), i)), 2);
    nm += std::pow(hm(row_span(data.source_x(), i)), 2);
  }
  nr = std::sqrt(nr / static_cast<double>(data.n()));
  nm = std::sqrt(nm / static_cast<double>(data.n()));

  NuisanceFunctions ratio_dir;
  ratio_dir.ratio = [&](std::span<const double> x) { return hr(x) / nr; };
  NuisanceFunctions moment_dir;
  moment_dir.moment = [&](std::span<const double> x, const Eigen::VectorXd&) {
    return Eigen::VectorXd::Constant(1, hm(x) / nm);
  };
  const auto gr = orthogonality_gap(data, g, theta0, eta0, ratio_dir, 0.05);
  const auto gm = orthogonality_gap(data, g, theta0, eta0, moment_dir, 0.05);
  const double orth = std::max(gr.orthogonal, gm.orthogonal);
  return { orth <= 1e-2 && gr.drw >= 10.0 * orth,
           "orthogonal " + fmt(gr.orthogonal) + " (ratio), " + fmt(gm.orthogonal) + " (moment); DRW " +
             fmt(gr.drw) };
}

// ---- 5 ----------------------------------------------------------------------

Outcome double_robustness()
{
  // source U(0,1), target Beta(2,1): the shift moves the mean by 1/6
  const Dataset data = testing::linear_shift(100000, 100000, 501);
  const auto g = EstimatingFunction::mean();
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, testing::kLinearShiftMean);
  const RowMatrix pooled = data.pooled_x();

  const auto z = [&](bool true_ratio, bool true_moment) {
    Eigen::VectorXd r(data.n());
    Eigen::MatrixXd m(data.total(), 1);
    for (Eigen::Index i = 0; i < data.n(); ++i)
      r(i) = true_ratio ? 2.0 * pooled(i, 0) : 1.0;
    for (Eigen::Index i = 0; i < data.total(); ++i)
      m(i, 0) = true_moment ? pooled(i, 0) - theta(0) : 0.0;
    const auto mean = moment_mean(orthogonal_moments(data, r, m, g, theta), data.n());
    return std::abs(mean.mean(0)) / mean.standard_error(0);
  };
  const double z_ratio = z(true, false), z_moment = z(false, true), z_neither = z(false, false);
  return { z_ratio < 3.0 && z_moment < 3.0 && z_neither >= 5.0,
           "|mean|/SE: true ratio " + fmt(z_ratio, 3) + ", true moment " + fmt(z_moment, 3) + ", neither " +
             fmt(z_neither, 3) };
}

// ---- 6 ----------------------------------------------------------------------

Outcome el_oracle()
{
  Rng rng(601);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> rows_dist(2, 20);
  int feasible = 0, matched = 0, hull_ok = 0;
  double worst = 0.0;
  for (int set = 0; set < 50; ++set) {
    const int k = rows_dist(rng);
    // every fifth set is pushed to one side; half of those touch zero
    const double shift = set % 10 == 0 ? 3.0 : set % 10 == 5 ? -3.0 : 0.3 * normal(rng);
    Eigen::MatrixXd psi(k, 1);
    for (int i = 0; i < k; ++i) {
      double v = 0.0;
      do
        v = shift + normal(rng);
      while (std::abs(v) < 0.05);
      psi(i, 0) = v;
    }
    if (set % 10 == 0)
      psi(0, 0) = 0.0;
    const double lo = psi.col(0).minCoeff(), hi = psi.col(0).maxCoeff();
    const bool inside = lo < 0.0 && hi > 0.0;

    bool thrown = false;
    ELSolution sol;
    try {
      sol = solve_lambda(psi);
    } catch (const ConvexHullViolation&) {
      thrown = true;
    }
    hull_ok += thrown == !inside ? 1 : 0;
    if (!inside || thrown)
      continue;
    ++feasible;

    // grid maximiser of sum log(1 + lambda psi) on the open feasible interval
    const double a = -1.0 / hi, b = -1.0 / lo;
    double best = -std::numeric_limits<double>::infinity(), arg = 0.0;
    for (double lam = a + 1e-4; lam < b; lam += 1e-4) {
      double s = 0.0;
      for (int i = 0; i < k; ++i)
        s += std::log1p(lam * psi(i, 0));
      if (s > best) {
        best = s;
        arg = lam;
      }
    }
    const double err = std::abs(sol.lambda(0) - arg);
    worst = std::max(worst, err);
    matched += err <= 1e-3 ? 1 : 0;
  }
  return { matched == feasible && hull_ok == 50,
           std::to_string(matched) + "/" + std::to_string(feasible) + " multipliers within 1e-3 (worst " +
             fmt(worst, 3) + "), hull rule exact in " + std::to_string(hull_ok) + "/50" };
}

// ---- 7 ----------------------------------------------------------------------

Outcome wilks_calibration()
{
  ExperimentPlan plan;
  plan.name = "wilks";
  plan.estimand = "mean";
  plan.methods = { EstimationMethod::DrwMiE };
  plan.replications = 300;
  plan.master_seed = 701;
  ScenarioConfig sc;
  sc.n = 2000;
  sc.m = 1000;
  sc.d = 5;
  plan.scenarios = { sc };
  plan.threads = resolve_threads(0);
  const SimReport rep = run_plan(plan);
  const MethodSummary& s = rep.summaries.at(0);
  const bool ok = !rep.run_failed && s.mean_r_n_truth >= 0.7 && s.mean_r_n_truth <= 1.4 &&
                  s.rejection_rate >= 0.02 && s.rejection_rate <= 0.09;
  return { ok,
           "mean R_N(theta0) " + fmt(s.mean_r_n_truth) + ", rejection " + fmt(s.rejection_rate) + ", failures " +
             std::to_string(s.failures) };
}

// ---- 8 ----------------------------------------------------------------------

Outcome median_table()
{
  ExperimentPlan plan;
  plan.name = "median";
  plan.estimand = "median";
  plan.methods = { EstimationMethod::DrwMiE, EstimationMethod::Drw };
  plan.replications = 200;
  plan.master_seed = 801;
  ScenarioConfig sc;
  sc.n = 1000;
  sc.m = 500;
  sc.d = 5;
  plan.scenarios = { sc };
  plan.threads = resolve_threads(0);
  const SimReport rep = run_plan(plan);
  const MethodSummary& e = rep.summary(0, EstimationMethod::DrwMiE);
  const MethodSummary& w = rep.summary(0, EstimationMethod::Drw);
  const bool ok = !rep.run_failed && e.coverage >= 0.88 && e.coverage <= 0.99 && e.coverage >= w.coverage - 0.02 &&
                  e.median_squared_error <= w.median_squared_error;
  return { ok,
           "coverage DRW-MI-E " + fmt(e.coverage) + " vs DRW " + fmt(w.coverage) + "; median SE " +
             fmt(e.median_squared_error) + " vs " + fmt(w.median_squared_error) + "; CI length " +
             fmt(e.mean_ci_length) };
}

// ---- 9 ----------------------------------------------------------------------

int shell(const std::string& command)
{
  const int rc = std::system((command + " > /dev/null 2>&1").c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

Outcome manifest_replay()
{
  const fs::path root = fs::temp_directory_path() / "shiftel-acceptance-replay";
  fs::remove_all(root);
  const fs::path a = root / "first";
  fs::create_directories(a);
  const std::string cli = SHIFTEL_CLI;

  write_text(a / "scenario.toml", "setting = \"S2\"\nmodel = \"M3\"\nd = 2\nn = 400\nseed = 9\n");
  write_text(a / "mlp.toml", "[ratio]\nkind = \"mlp\"\ncandidates = [8]\ndepths = [1, 2]\n"
                             "[ratio.optimizer]\nmax_epochs = 200\n");
  write_text(a / "plan.toml", "methods = [\"drw-mi\", \"drw\", \"mi\"]\nreplications = 3\ntruth_draws = 100000\n"
                              "[[scenarios]]\nd = 2\nn = 300\n[pipeline]\nkappa = 20\nbootstrap_replicates = 50\n");
  const std::string A = a.string();
  const std::vector<std::pair<std::string, std::string>> runs{
    { "estimate", "--threads 2 estimate --scenario " + A + "/scenario.toml --estimand quantile:0.3 --out " + A +
                    "/est.json --write-data " + A + "/data.csv" },
    { "dr-fit", "dr-fit --data " + A + "/data.csv --config " + A + "/mlp.toml --out " + A + "/ratio.json" },
    { "cde-fit", "cde-fit --data " + A + "/data.csv --kappa 10 --out " + A + "/cde.json --draws-out " + A +
                   "/draws.csv" },
    { "prefit", "estimate --data " + A + "/data.csv --method drw --estimand mean --ratio-model " + A +
                  "/ratio.json --bootstrap 50 --out " + A + "/prefit.json" },
    { "simulate", "--threads 2 simulate --plan " + A + "/plan.toml --out-dir " + A + "/sim" },
  };
  const std::vector<std::string> manifests{ "est.manifest.json", "ratio.manifest.json", "cde.manifest.json",
                                            "prefit.manifest.json", "sim/manifest.json" };
  int compared = 0;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    if (const int rc = shell(cli + " --log-level quiet " + runs[k].second); rc != 0)
      return { false, runs[k].first + " exited with " + std::to_string(rc) };
    const fs::path manifest = a / manifests[k];
    const fs::path b = root / ("replay-" + runs[k].first);
    if (const int rc = shell(cli + " --log-level quiet --threads 1 --from-manifest " + manifest.string() +
                             " --redirect " + b.string());
        rc != 0)
      return { false, "replay of " + runs[k].first + " exited with " + std::to_string(rc) };
    const Json doc = Json::parse(read_text(manifest));
    for (const auto& [path, digest] : doc.at("outputs").items()) {
      const fs::path copy = b / fs::path(path).filename();
      if (!fs::exists(copy) || read_text(copy) != read_text(path) || sha256_file(copy) != digest)
        return { false, "replayed " + copy.string() + " differs from " + path };
      ++compared;
    }
  }
  return { true, std::to_string(compared) + " outputs of 5 runs byte-identical on replay" };
}

} // namespace

int main(int argc, char** argv)
{
  const std::vector<Criterion> criteria{
    { 1, "density ratio, closed-form oracle", 120.0, ratio_oracle },
    { 2, "density ratio MSE on S1, d = 5", 900.0, ratio_mse_s1 },
    { 3, "conditional density, Gaussian oracle", 300.0, gaussian_cde },
    { 4, "Neyman orthogonality contrast", 60.0, orthogonality },
    { 5, "double robustness", 60.0, double_robustness },
    { 6, "EL multiplier oracle and hull rule", 10.0, el_oracle },
    { 7, "Wilks calibration", 3600.0, wilks_calibration },
    { 8, "median coverage and MSE, n = 1000", 5400.0, median_table },
    { 9, "CLI determinism by manifest replay", 600.0, manifest_replay },
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i)
    selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id))
      continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = { false, std::string("error: ") + e.what() };
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = out.passed && in_time;
    failed += pass ? 0 : 1;
    std::printf("%s [%d] %s: %s; %.1f s of %.0f s%s\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                out.detail.c_str(), secs, c.budget_seconds, in_time ? "" : " (over budget)");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
