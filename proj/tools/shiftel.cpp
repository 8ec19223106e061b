#include "shiftel/error.hpp"
#include "shiftel/io.hpp"
#include "shiftel/parallel.hpp"
#include "shiftel/selfcheck.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace shiftel;

namespace {

enum class LogLevel
{
  Quiet,
  Info,
  Debug
};

LogLevel g_log_level = LogLevel::Info;

void log(LogLevel level, const std::string& message)
{
  if (level <= g_log_level && g_log_level != LogLevel::Quiet)
    std::cerr << (level == LogLevel::Debug ? "[debug] " : "[info] ") << message << '\n';
}

// Options that name files written by a subcommand; --redirect rewrites them.
const std::set<std::string> kOutputOptions{ "--out", "--out-dir", "--metrics-out", "--draws-out", "--write-data" };

struct Manifest
{
  std::string subcommand;
  std::vector<std::string> argv;
  Json effective_config;
  std::uint64_t master_seed = 0;
  std::map<std::string, std::string> inputs;
  std::vector<fs::path> outputs;
};

fs::path manifest_path_for(const fs::path& out)
{
  fs::path p = out;
  p.replace_extension();
  return p.string() + ".manifest.json";
}

void write_manifest(const Manifest& m, const fs::path& where)
{
  Json doc;
  doc["tool"] = "shiftel";
  doc["version"] = std::string(kVersion);
  doc["subcommand"] = m.subcommand;
  doc["argv"] = m.argv;
  doc["cwd"] = fs::current_path().string();
  doc["effective_config"] = m.effective_config;
  doc["config_sha256"] = sha256_hex(m.effective_config.dump());
  doc["master_seed"] = m.master_seed;
  doc["inputs"] = m.inputs;
  Json outputs = Json::object();
  for (const auto& p : m.outputs)
    outputs[p.string()] = sha256_file(p);
  doc["outputs"] = outputs;
  write_text(where, dump(doc));
  log(LogLevel::Info, "manifest written to " + where.string());
}

void add_input(Manifest& m, const std::string& path)
{
  if (!path.empty() && fs::exists(path))
    m.inputs[path] = sha256_file(path);
}

// A document that is either the table itself or wraps it under `key`.
Json unwrap(const Json& doc, const std::string& key)
{
  if (doc.is_object() && doc.size() == 1 && doc.contains(key))
    return doc.at(key);
  return doc;
}

unsigned resolve_cli_threads(int flag, unsigned configured)
{
  if (flag > 0 || std::getenv("SHIFTEL_THREADS") || configured == 0)
    return resolve_threads(flag);
  return configured;
}

// ---- shared input handling --------------------------------------------------

struct InputOptions
{
  std::string data;
  std::string scenario;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string divergence;
};

void add_input_options(CLI::App* cmd, InputOptions& in)
{
  auto* data = cmd->add_option("--data", in.data, "CSV with x1..xd, y and role columns")->check(CLI::ExistingFile);
  auto* scenario =
    cmd->add_option("--scenario", in.scenario, "simulation design (TOML or JSON)")->check(CLI::ExistingFile);
  data->excludes(scenario);
  cmd->add_option("--config", in.config, "pipeline configuration (TOML or JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", in.seed, "pipeline seed");
  cmd->add_option("--divergence", in.divergence, "kl, reverse-kl, pearson or hellinger");
}

struct Loaded
{
  std::optional<ScenarioConfig> scenario;
  PipelineConfig pipeline;
  Json effective;
  std::optional<Dataset> dataset;

  const Dataset& data() const { return *dataset; }
};

Loaded load_inputs(const InputOptions& in, Manifest& manifest)
{
  if (in.data.empty() == in.scenario.empty())
    throw ConfigError("exactly one of --data and --scenario is required");
  Loaded out;
  if (!in.config.empty()) {
    out.pipeline = pipeline_from_json(unwrap(load_config_document(in.config), "pipeline"));
    add_input(manifest, in.config);
  }
  if (in.seed)
    out.pipeline.seed = *in.seed;
  if (!in.divergence.empty())
    out.pipeline.divergence = in.divergence;
  if (!in.scenario.empty()) {
    out.scenario = scenario_from_json(unwrap(load_config_document(in.scenario), "scenario"));
    out.dataset = generate_dataset(*out.scenario);
    add_input(manifest, in.scenario);
    out.effective["scenario"] = to_json(*out.scenario);
  } else {
    out.dataset = load_csv(in.data);
    add_input(manifest, in.data);
    out.effective["data"] = { { "path", in.data }, { "sha256", manifest.inputs.at(in.data) } };
  }
  log(LogLevel::Info,
      "n = " + std::to_string(out.data().n()) + ", m = " + std::to_string(out.data().m()) +
        ", d = " + std::to_string(out.data().d()));
  return out;
}

// ---- subcommands --------------------------------------------------------------

struct SimulateOptions
{
  std::string plan;
  std::string out_dir;
  std::optional<int> replications;
  std::optional<std::uint64_t> master_seed;
};

int run_simulate(const SimulateOptions& o, int threads_flag, Manifest& manifest)
{
  ExperimentPlan plan = plan_from_json(load_config_document(o.plan));
  add_input(manifest, o.plan);
  if (o.replications)
    plan.replications = *o.replications;
  if (o.master_seed)
    plan.master_seed = *o.master_seed;
  plan.validate();
  manifest.effective_config = to_json(plan);
  manifest.master_seed = plan.master_seed;
  plan.threads = resolve_cli_threads(threads_flag, plan.threads);
  log(LogLevel::Info,
      "running " + std::to_string(plan.scenarios.size()) + " scenario(s) x " +
        std::to_string(plan.replications) + " replication(s) on " + std::to_string(plan.threads) +
        " thread(s)");

  const SimReport report = run_plan(plan);
  const fs::path dir = o.out_dir;
  const std::vector<std::pair<fs::path, std::string>> files{
    { dir / "report.json", dump(to_json(report)) },
    { dir / "summary.csv", report_table(report, TableFormat::Csv) },
    { dir / "summary.txt", report_table(report, TableFormat::Text) },
    { dir / "replications.csv", replication_log(report) },
  };
  for (const auto& [path, text] : files) {
    write_text(path, text);
    manifest.outputs.push_back(path);
  }
  write_manifest(manifest, dir / "manifest.json");
  std::cout << report_table(report, TableFormat::Text);
  if (report.run_failed) {
    std::cerr << "error: " << report.failure_message << '\n';
    return 2;
  }
  return 0;
}

struct EstimateOptions
{
  InputOptions input;
  std::string estimand = "median";
  std::string method = "drw-mi";
  std::string ci;
  std::optional<double> level;
  std::optional<int> kappa;
  std::optional<int> bootstrap;
  std::string ratio_model;
  std::string cde_model;
  std::string out;
  std::string write_data;
};

int run_estimate_cmd(const EstimateOptions& o, int threads_flag, Manifest& manifest)
{
  Loaded in = load_inputs(o.input, manifest);
  PipelineConfig& pc = in.pipeline;
  const EstimatingFunction g = parse_estimand(o.estimand);
  const EstimationMethod method = parse_estimation_method(o.method);
  if (!o.ci.empty())
    pc.ci = parse_ci_method(o.ci);
  if (o.level)
    pc.level = *o.level;
  if (o.kappa)
    pc.kappa = *o.kappa;
  if (o.bootstrap)
    pc.bootstrap_replicates = *o.bootstrap;
  if (!o.ratio_model.empty()) {
    pc.ratio_model = ratio_model_from_json(Json::parse(read_text(o.ratio_model)));
    add_input(manifest, o.ratio_model);
  }
  if (!o.cde_model.empty()) {
    pc.cde_model = cond_density_from_json(Json::parse(read_text(o.cde_model)));
    add_input(manifest, o.cde_model);
  }
  pc.validate();

  std::optional<OracleNuisances> oracle;
  if (method == EstimationMethod::DrwMiT) {
    if (!in.scenario)
      throw ConfigError("drw-mi-t needs --scenario (the true nuisances of a simulation design)");
    oracle = oracle_nuisances(*in.scenario);
  }

  in.effective["pipeline"] = to_json(pc);
  in.effective["estimand"] = estimand_label(g);
  in.effective["method"] = to_string(method);
  if (pc.ratio_model)
    in.effective["ratio_model"] = manifest.inputs.at(o.ratio_model);
  if (pc.cde_model)
    in.effective["cde_model"] = manifest.inputs.at(o.cde_model);
  manifest.effective_config = in.effective;
  manifest.master_seed = pc.seed;
  pc.threads = resolve_cli_threads(threads_flag, pc.threads);

  const EstimateReport rep = run_estimate(in.data(), g, method, pc, oracle ? &*oracle : nullptr);
  const Json doc = estimate_to_json(rep, in.data(), g);

  std::cout << to_string(method) << ' ' << estimand_label(g) << ": theta_hat = " << rep.inference.theta_hat(0);
  if (rep.ci)
    std::cout << ", " << pc.level * 100.0 << "% CI [" << rep.ci->lo << ", " << rep.ci->hi << "]";
  std::cout << '\n';

  if (!o.write_data.empty()) {
    if (const auto parent = fs::path(o.write_data).parent_path(); !parent.empty())
      fs::create_directories(parent);
    write_csv(in.data(), o.write_data);
    manifest.outputs.push_back(o.write_data);
  }
  if (!o.out.empty()) {
    write_text(o.out, dump(doc));
    manifest.outputs.push_back(o.out);
    write_manifest(manifest, manifest_path_for(o.out));
  } else {
    std::cout << dump(doc);
  }
  return 0;
}

struct FitOptions
{
  InputOptions input;
  std::string method = "ddr";
  std::string out;
  std::string metrics_out;
  std::string draws_out;
  std::optional<int> kappa;
};

void finish_fit(const FitOptions& o, Manifest& manifest, const Json& model, const Json& metrics)
{
  write_text(o.out, dump(model));
  manifest.outputs.push_back(o.out);
  fs::path metrics_path = o.metrics_out;
  if (metrics_path.empty())
    metrics_path = fs::path(o.out).replace_extension().string() + ".metrics.json";
  write_text(metrics_path, dump(metrics));
  manifest.outputs.push_back(metrics_path);
  write_manifest(manifest, manifest_path_for(o.out));
  std::cout << metrics.dump() << '\n';
}

int run_dr_fit(const FitOptions& o, int threads_flag, Manifest& manifest)
{
  Loaded in = load_inputs(o.input, manifest);
  in.pipeline.ratio_method = parse_ratio_method(o.method);
  in.pipeline.validate();
  in.effective["pipeline"] = to_json(in.pipeline);
  manifest.effective_config = in.effective;
  manifest.master_seed = in.pipeline.seed;
  in.pipeline.threads = resolve_cli_threads(threads_flag, in.pipeline.threads);

  const FittedNuisances fit = fit_nuisances(EstimationMethod::Drw, in.data(), in.pipeline);
  const RatioModel& r = *fit.ratio;
  Json metrics = { { "method", to_string(r.method()) },
                   { "divergence", in.pipeline.divergence },
                   { "n", in.data().n() },
                   { "m", in.data().m() },
                   { "d", in.data().d() },
                   { "objective", r.objective_value() },
                   { "divergence_estimate", r.divergence_estimate() },
                   { "source_ratio_mean", fit.values.source_ratio.mean() } };
  if (in.scenario) {
    const auto setting = in.scenario->covariate_setting;
    const RatioOracle oracle = [setting](std::span<const double> x) { return true_density_ratio(setting, x); };
    metrics["oracle"] = { { "l2_error", empirical_l2_error(r, oracle, in.data().source_x()) },
                          { "mse", ratio_mse(r, oracle, in.data().source_x()) } };
  }
  finish_fit(o, manifest, to_json(r), metrics);
  return 0;
}

int run_cde_fit(const FitOptions& o, int threads_flag, Manifest& manifest)
{
  Loaded in = load_inputs(o.input, manifest);
  if (o.kappa)
    in.pipeline.kappa = *o.kappa;
  in.pipeline.validate();
  in.effective["pipeline"] = to_json(in.pipeline);
  manifest.effective_config = in.effective;
  manifest.master_seed = in.pipeline.seed;
  in.pipeline.threads = resolve_cli_threads(threads_flag, in.pipeline.threads);

  const FittedNuisances fit = fit_nuisances(EstimationMethod::Mi, in.data(), in.pipeline);
  const CondDensityModel& model = *fit.cde;
  const Capacity cap = model.ratio().capacity();
  Json metrics = { { "divergence", in.pipeline.divergence },
                   { "n", in.data().n() },
                   { "m", in.data().m() },
                   { "d", in.data().d() },
                   { "objective", model.ratio().objective },
                   { "capacity", { { "size", cap.size }, { "depth", cap.depth } } },
                   { "kappa", fit.values.imputations->kappa } };
  if (in.scenario) {
    const auto rm = in.scenario->response_model;
    const auto oracle = [rm](double y, std::span<const double> x) { return true_conditional_density(y, x, rm); };
    const Eigen::Index probes = std::min<Eigen::Index>(5, in.data().m());
    metrics["oracle"] = { { "density_mse", density_mse(model, in.data(), oracle) },
                          { "grid_ise", grid_ise(model, in.data().target_x().topRows(probes), oracle) } };
  }
  if (!o.draws_out.empty()) {
    write_text(o.draws_out, imputations_csv(*fit.values.imputations));
    manifest.outputs.push_back(o.draws_out);
  }
  finish_fit(o, manifest, to_json(model), metrics);
  return 0;
}

int run_selfcheck_cmd()
{
  int failed = 0;
  for (const auto& c : run_selfcheck()) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name;
    if (!c.passed) {
      std::cout << ": " << c.detail;
      ++failed;
    }
    std::cout << '\n';
  }
  return failed == 0 ? 0 : 2;
}

// ---- driver -------------------------------------------------------------------

int run(std::vector<std::string> args);

int replay(const fs::path& manifest_file, const std::string& redirect)
{
  const Json doc = Json::parse(read_text(manifest_file));
  std::vector<std::string> args = doc.at("argv").get<std::vector<std::string>>();
  const fs::path target = redirect.empty() ? fs::path() : fs::absolute(redirect);
  if (!target.empty()) {
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
      if (!kOutputOptions.count(args[i]))
        continue;
      args[i + 1] = args[i] == "--out-dir" ? target.string() : (target / fs::path(args[i + 1]).filename()).string();
      ++i;
    }
  }
  fs::current_path(doc.at("cwd").get<std::string>());
  for (const auto& [path, digest] : doc.at("inputs").items()) {
    if (!fs::exists(path) || sha256_file(path) != digest.get<std::string>())
      throw ConfigError("input '" + path + "' differs from the manifest");
  }
  log(LogLevel::Info, "replaying " + doc.at("subcommand").get<std::string>() + " from " + manifest_file.string());
  return run(args);
}

int run(std::vector<std::string> args)
{
  CLI::App app{ "Covariate-shift estimation with empirical likelihood", "shiftel" };
  app.set_version_flag("--version", std::string(kVersion));
  int threads = 0;
  std::string log_level = "info";
  std::string from_manifest;
  std::string redirect;
  app.add_option("--threads", threads, "worker threads (0: SHIFTEL_THREADS or all cores)");
  auto* log_opt = app.add_option("--log-level", log_level, "quiet, info or debug")
    ->check(CLI::IsMember({ "quiet", "info", "debug" }));
  app.add_option("--from-manifest", from_manifest, "replay the run recorded in a manifest")
    ->check(CLI::ExistingFile);
  app.add_option("--redirect", redirect, "with --from-manifest: write outputs into this directory");
  app.require_subcommand(0, 1);

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "run a Monte Carlo experiment plan");
  simulate->add_option("--plan", sim.plan, "experiment plan (TOML or JSON)")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out-dir", sim.out_dir, "output directory")->required();
  simulate->add_option("--replications", sim.replications, "override the replication count");
  simulate->add_option("--master-seed", sim.master_seed, "override the master seed");

  EstimateOptions est;
  auto* estimate = app.add_subcommand("estimate", "point estimate and interval for one dataset");
  add_input_options(estimate, est.input);
  estimate->add_option("--estimand", est.estimand, "mean, median or quantile:<alpha>");
  estimate->add_option("--method", est.method, "drw-mi, drw, mi or drw-mi-t");
  estimate->add_option("--ci", est.ci, "wilks, bootstrap or none")
    ->check(CLI::IsMember({ "wilks", "bootstrap", "none" }));
  estimate->add_option("--level", est.level, "interval level");
  estimate->add_option("--kappa", est.kappa, "imputations per row");
  estimate->add_option("--bootstrap", est.bootstrap, "bootstrap replicates");
  estimate->add_option("--ratio-model", est.ratio_model, "fitted ratio model (JSON)")->check(CLI::ExistingFile);
  estimate->add_option("--cde-model", est.cde_model, "fitted conditional density model (JSON)")
    ->check(CLI::ExistingFile);
  estimate->add_option("--out", est.out, "result JSON (stdout when absent)");
  estimate->add_option("--write-data", est.write_data, "also write the dataset as CSV");

  FitOptions dr;
  auto* dr_fit = app.add_subcommand("dr-fit", "fit a density ratio model");
  add_input_options(dr_fit, dr.input);
  dr_fit->add_option("--method", dr.method, "ddr, ks or pc")->check(CLI::IsMember({ "ddr", "ks", "pc" }));
  dr_fit->add_option("--out", dr.out, "model JSON")->required();
  dr_fit->add_option("--metrics-out", dr.metrics_out, "metrics JSON (default <out>.metrics.json)");

  FitOptions cde;
  auto* cde_fit = app.add_subcommand("cde-fit", "fit a conditional density model and draw imputations");
  add_input_options(cde_fit, cde.input);
  cde_fit->add_option("--kappa", cde.kappa, "imputations per row");
  cde_fit->add_option("--out", cde.out, "model JSON")->required();
  cde_fit->add_option("--metrics-out", cde.metrics_out, "metrics JSON (default <out>.metrics.json)");
  cde_fit->add_option("--draws-out", cde.draws_out, "imputation draws CSV");

  auto* selfcheck = app.add_subcommand("selfcheck", "fast invariant checks");

  std::reverse(args.begin(), args.end());
  std::vector<std::string> original(args.rbegin(), args.rend());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (log_opt->count() > 0)
    g_log_level = log_level == "quiet" ? LogLevel::Quiet : log_level == "debug" ? LogLevel::Debug : LogLevel::Info;

  if (!from_manifest.empty()) {
    if (app.get_subcommands().size() > 0)
      throw ConfigError("--from-manifest cannot be combined with a subcommand");
    return replay(from_manifest, redirect);
  }
  if (!redirect.empty())
    throw ConfigError("--redirect needs --from-manifest");

  Manifest manifest;
  manifest.argv = original;
  if (simulate->parsed()) {
    manifest.subcommand = "simulate";
    return run_simulate(sim, threads, manifest);
  }
  if (estimate->parsed()) {
    manifest.subcommand = "estimate";
    return run_estimate_cmd(est, threads, manifest);
  }
  if (dr_fit->parsed()) {
    manifest.subcommand = "dr-fit";
    return run_dr_fit(dr, threads, manifest);
  }
  if (cde_fit->parsed()) {
    manifest.subcommand = "cde-fit";
    return run_cde_fit(cde, threads, manifest);
  }
  if (selfcheck->parsed())
    return run_selfcheck_cmd();
  std::cerr << app.help();
  return 1;
}

} // namespace

int main(int argc, char** argv)
{
  try {
    return run(std::vector<std::string>(argv + 1, argv + argc));
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << '\n';
  } catch (const ContractError& e) {
    std::cerr << "contract error: " << e.what() << '\n';
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << '\n';
  } catch (const Json::exception& e) {
    std::cerr << "parse error: " << e.what() << '\n';
  } catch (const fs::filesystem_error& e) {
    std::cerr << "file error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
