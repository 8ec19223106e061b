#include "shiftel/io.hpp"
#include "shiftel/error.hpp"

#include <openssl/evp.h>
#include <toml.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace shiftel {

namespace {

std::string join(const std::string& where, const std::string& key)
{
  return where.empty() ? key : where + "." + key;
}

// Object reader that remembers which keys were consumed.
class Fields
{
public:
  Fields(const Json& doc, std::string where)
    : doc_(doc), where_(std::move(where))
  {
    if (!doc_.is_object())
      throw ConfigError("'" + (where_.empty() ? std::string("document") : where_) + "' must be a table");
  }

  const Json* find(const std::string& key)
  {
    seen_.insert(key);
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return join(where_, key); }

  double number(const std::string& key, double fallback)
  {
    const Json* v = find(key);
    if (!v)
      return fallback;
    if (!v->is_number())
      throw ConfigError("key '" + path(key) + "' must be a number");
    return v->get<double>();
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback)
  {
    const Json* v = find(key);
    if (!v)
      return fallback;
    if (!v->is_number_integer())
      throw ConfigError("key '" + path(key) + "' must be an integer");
    return v->get<std::int64_t>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback)
  {
    const Json* v = find(key);
    if (!v)
      return fallback;
    if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0))
      throw ConfigError("key '" + path(key) + "' must be a non-negative integer");
    return v->get<std::uint64_t>();
  }

  std::string string(const std::string& key, const std::string& fallback)
  {
    const Json* v = find(key);
    if (!v)
      return fallback;
    if (!v->is_string())
      throw ConfigError("key '" + path(key) + "' must be a string");
    return v->get<std::string>();
  }

  std::vector<int> int_list(const std::string& key, const std::vector<int>& fallback)
  {
    const Json* v = find(key);
    if (!v)
      return fallback;
    if (v->is_number_integer())
      return { v->get<int>() };
    if (!v->is_array())
      throw ConfigError("key '" + path(key) + "' must be an integer or a list of integers");
    std::vector<int> out;
    for (const auto& e : *v) {
      if (!e.is_number_integer())
        throw ConfigError("key '" + path(key) + "' must hold integers");
      out.push_back(e.get<int>());
    }
    return out;
  }

  std::vector<double> number_list(const std::string& key, const std::vector<double>& fallback)
  {
    const Json* v = find(key);
    if (!v)
      return fallback;
    if (!v->is_array())
      throw ConfigError("key '" + path(key) + "' must be a list of numbers");
    std::vector<double> out;
    for (const auto& e : *v) {
      if (!e.is_number())
        throw ConfigError("key '" + path(key) + "' must hold numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  // Runs a parser on a string option and prefixes its error with the key.
  template <typename F>
  auto parsed(const std::string& key, const std::string& fallback, F parse)
  {
    const std::string s = string(key, fallback);
    try {
      return parse(s);
    } catch (const ConfigError& e) {
      throw ConfigError("key '" + path(key) + "': " + e.what());
    }
  }

  void finish() const
  {
    for (auto it = doc_.begin(); it != doc_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ConfigError("unknown key '" + path(it.key()) + "'");
  }

private:
  const Json& doc_;
  std::string where_;
  std::set<std::string> seen_;
};

Json from_toml(const toml::node& node, const std::string& where)
{
  if (const auto* t = node.as_table()) {
    Json obj = Json::object();
    for (auto&& [k, v] : *t)
      obj[std::string(k.str())] = from_toml(v, join(where, std::string(k.str())));
    return obj;
  }
  if (const auto* a = node.as_array()) {
    Json arr = Json::array();
    for (const auto& v : *a)
      arr.push_back(from_toml(v, where));
    return arr;
  }
  if (const auto* i = node.as_integer())
    return i->get();
  if (const auto* f = node.as_floating_point())
    return f->get();
  if (const auto* b = node.as_boolean())
    return b->get();
  if (const auto* s = node.as_string())
    return s->get();
  throw ConfigError("key '" + where + "' has an unsupported TOML type (dates and times are not accepted)");
}

Json vec(const Eigen::VectorXd& v)
{
  return std::vector<double>(v.data(), v.data() + v.size());
}

Json mat(const Eigen::MatrixXd& m)
{
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

Json rows_json(const RowMatrix& m)
{
  return mat(Eigen::MatrixXd(m));
}

// NaN and inf are written as null
double num(const Json& doc, const char* key)
{
  const auto it = doc.find(key);
  if (it == doc.end())
    throw ParseError(std::string("model document lacks '") + key + "'");
  if (it->is_null())
    return std::nan("");
  if (!it->is_number())
    throw ParseError(std::string("model field '") + key + "' must be a number");
  return it->get<double>();
}

const Json& field(const Json& doc, const char* key)
{
  const auto it = doc.find(key);
  if (it == doc.end())
    throw ParseError(std::string("model document lacks '") + key + "'");
  return *it;
}

Eigen::VectorXd read_vec(const Json& doc, const char* key)
{
  const Json& a = field(doc, key);
  if (!a.is_array())
    throw ParseError(std::string("model field '") + key + "' must be a list");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = a[i].is_null() ? std::nan("") : a[i].get<double>();
  return v;
}

RowMatrix read_rows(const Json& doc, const char* key)
{
  const Json& a = field(doc, key);
  if (!a.is_array() || a.empty())
    throw ParseError(std::string("model field '") + key + "' must be a non-empty list of rows");
  const std::size_t cols = a[0].size();
  RowMatrix m(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != cols)
      throw ParseError(std::string("model field '") + key + "' has ragged rows");
    for (std::size_t j = 0; j < cols; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a[i][j].get<double>();
  }
  return m;
}

std::string link_name(Link l)
{
  return l == Link::Exp ? "exp" : "identity";
}

Link parse_link(const std::string& s)
{
  if (s == "exp")
    return Link::Exp;
  if (s == "identity")
    return Link::Identity;
  throw ParseError("unknown link '" + s + "'");
}

Json capacity_json(const Capacity& c)
{
  return { { "size", c.size }, { "depth", c.depth } };
}

} // namespace

// ---- configuration ---------------------------------------------------------

Json load_config_document(const std::filesystem::path& path)
{
  if (!std::filesystem::exists(path))
    throw ConfigError("config file not found: " + path.string());
  if (path.extension() == ".toml") {
    try {
      const toml::table tbl = toml::parse_file(path.string());
      return from_toml(tbl, "");
    } catch (const toml::parse_error& e) {
      throw ParseError(path.string() + ":" + std::to_string(e.source().begin.line) + ": " +
                         std::string(e.description()),
                       static_cast<long>(e.source().begin.line));
    }
  }
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

ScenarioConfig scenario_from_json(const Json& doc, const std::string& where)
{
  Fields f(doc, where);
  ScenarioConfig s;
  s.covariate_setting = f.parsed("setting", "S1", parse_covariate_setting);
  s.response_model = f.parsed("model", "M2", parse_response_model);
  s.n = f.integer("n", s.n);
  s.m = f.integer("m", s.n / 2);
  s.d = f.integer("d", s.d);
  s.seed = f.unsigned_integer("seed", s.seed);
  f.finish();
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("'" + where + "': " + e.what());
  }
  return s;
}

FunctionClassConfig function_class_from_json(const Json& doc,
                                             FunctionClassConfig defaults,
                                             const std::string& where)
{
  Fields f(doc, where);
  FunctionClassConfig c = defaults;
  const FunctionKind kind = f.parsed("kind", to_string(defaults.kind), parse_function_kind);
  if (kind != defaults.kind) {
    c = kind == FunctionKind::Mlp ? FunctionClassConfig::mlp() : FunctionClassConfig::poly_sieve();
    c.r_min = defaults.r_min;
    c.r_max = defaults.r_max;
  }
  c.degree_or_width_candidates = f.int_list("candidates", c.degree_or_width_candidates);
  c.depth_candidates = f.int_list("depths", c.depth_candidates);
  c.r_min = f.number("r_min", c.r_min);
  c.r_max = f.number("r_max", c.r_max);
  c.cv_folds = static_cast<int>(f.integer("cv_folds", c.cv_folds));
  c.max_basis = static_cast<int>(f.integer("max_basis", c.max_basis));
  if (const Json* opt = f.find("optimizer")) {
    Fields o(*opt, f.path("optimizer"));
    c.optimizer.method = o.parsed("method", to_string(c.optimizer.method), parse_optimizer_method);
    c.optimizer.learning_rate = o.number("learning_rate", c.optimizer.learning_rate);
    c.optimizer.max_epochs = static_cast<int>(o.integer("max_epochs", c.optimizer.max_epochs));
    c.optimizer.tolerance = o.number("tolerance", c.optimizer.tolerance);
    c.optimizer.patience = static_cast<int>(o.integer("patience", c.optimizer.patience));
    c.optimizer.record_every = static_cast<int>(o.integer("record_every", c.optimizer.record_every));
    o.finish();
  }
  f.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("'" + where + "': " + e.what());
  }
  return c;
}

ELConfig el_config_from_json(const Json& doc, const std::string& where)
{
  Fields f(doc, where);
  ELConfig c;
  c.max_iter = static_cast<int>(f.integer("max_iter", c.max_iter));
  c.tolerance = f.number("tolerance", c.tolerance);
  c.max_halvings = static_cast<int>(f.integer("max_halvings", c.max_halvings));
  c.grid_points = static_cast<int>(f.integer("grid_points", c.grid_points));
  c.lower_quantile = f.number("lower_quantile", c.lower_quantile);
  c.upper_quantile = f.number("upper_quantile", c.upper_quantile);
  c.bracket_expand = f.number("bracket_expand", c.bracket_expand);
  const auto bracket = f.number_list("bracket", {});
  if (!bracket.empty()) {
    if (bracket.size() != 2)
      throw ConfigError("key '" + f.path("bracket") + "' must be [lo, hi]");
    c.bracket = std::pair{ bracket[0], bracket[1] };
  }
  c.outer_tolerance = f.number("outer_tolerance", c.outer_tolerance);
  c.simplex_max_evaluations = static_cast<int>(f.integer("simplex_max_evaluations", c.simplex_max_evaluations));
  c.max_widenings = static_cast<int>(f.integer("max_widenings", c.max_widenings));
  c.crossing_tolerance = f.number("crossing_tolerance", c.crossing_tolerance);
  f.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("'" + where + "': " + e.what());
  }
  return c;
}

PipelineConfig pipeline_from_json(const Json& doc, const std::string& where)
{
  Fields f(doc, where);
  PipelineConfig c;
  c.divergence = f.string("divergence", c.divergence);
  c.ratio_method = f.parsed("ratio_method", "ddr", parse_ratio_method);
  if (const Json* v = f.find("ratio"))
    c.ratio = function_class_from_json(*v, c.ratio, f.path("ratio"));
  if (const Json* v = f.find("kernel")) {
    Fields k(*v, f.path("kernel"));
    c.kernel.bandwidth_grid = k.number_list("bandwidth_grid", c.kernel.bandwidth_grid);
    c.kernel.loo_max = k.integer("loo_max", c.kernel.loo_max);
    c.kernel.r_min = k.number("r_min", c.kernel.r_min);
    c.kernel.r_max = k.number("r_max", c.kernel.r_max);
    k.finish();
  }
  if (const Json* v = f.find("classifier")) {
    Fields k(*v, f.path("classifier"));
    c.classifier.degree = static_cast<int>(k.integer("degree", c.classifier.degree));
    c.classifier.max_basis = static_cast<int>(k.integer("max_basis", c.classifier.max_basis));
    c.classifier.ridge = k.number("ridge", c.classifier.ridge);
    c.classifier.max_iterations = static_cast<int>(k.integer("max_iterations", c.classifier.max_iterations));
    c.classifier.r_min = k.number("r_min", c.classifier.r_min);
    c.classifier.r_max = k.number("r_max", c.classifier.r_max);
    k.finish();
  }
  if (const Json* v = f.find("cde"))
    c.cde = function_class_from_json(*v, c.cde, f.path("cde"));
  if (const Json* v = f.find("aux")) {
    Fields a(*v, f.path("aux"));
    c.aux.inflation = a.number("inflation", c.aux.inflation);
    c.aux.grid_size = static_cast<int>(a.integer("grid_size", c.aux.grid_size));
    c.aux.grid_margin = a.number("grid_margin", c.aux.grid_margin);
    a.finish();
  }
  c.kappa = static_cast<int>(f.integer("kappa", c.kappa));
  if (const Json* v = f.find("el"))
    c.el = el_config_from_json(*v, f.path("el"));
  const std::string ci = f.string("ci", "default");
  if (ci != "default")
    c.ci = f.parsed("ci", ci, parse_ci_method);
  c.bootstrap_replicates = static_cast<int>(f.integer("bootstrap_replicates", c.bootstrap_replicates));
  c.level = f.number("level", c.level);
  c.seed = f.unsigned_integer("seed", c.seed);
  c.threads = static_cast<unsigned>(f.unsigned_integer("threads", c.threads));
  f.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("'" + where + "': " + e.what());
  }
  return c;
}

ExperimentPlan plan_from_json(const Json& doc)
{
  Fields f(doc, "");
  ExperimentPlan p;
  p.name = f.string("name", p.name);
  p.estimand = f.string("estimand", p.estimand);
  if (const Json* v = f.find("methods")) {
    if (!v->is_array())
      throw ConfigError("key 'methods' must be a list of method names");
    p.methods.clear();
    for (const auto& e : *v) {
      if (!e.is_string())
        throw ConfigError("key 'methods' must hold strings");
      try {
        p.methods.push_back(parse_estimation_method(e.get<std::string>()));
      } catch (const ConfigError& err) {
        throw ConfigError(std::string("key 'methods': ") + err.what());
      }
    }
  }
  p.replications = static_cast<int>(f.integer("replications", p.replications));
  p.master_seed = f.unsigned_integer("master_seed", p.master_seed);
  p.truth_draws = f.integer("truth_draws", p.truth_draws);
  p.threads = static_cast<unsigned>(f.unsigned_integer("threads", p.threads));
  if (const Json* v = f.find("pipeline"))
    p.pipeline = pipeline_from_json(*v, "pipeline");
  const Json* sc = f.find("scenarios");
  if (!sc || !sc->is_array() || sc->empty())
    throw ConfigError("key 'scenarios' must be a non-empty list of tables");
  for (std::size_t i = 0; i < sc->size(); ++i) {
    const std::string where = "scenarios[" + std::to_string(i) + "]";
    Fields s((*sc)[i], where);
    const auto ns = s.int_list("n", { 1000 });
    const auto ms = s.int_list("m", {});
    if (!ms.empty() && ms.size() != ns.size())
      throw ConfigError("key '" + s.path("m") + "' must match the length of 'n'");
    Json base = Json::object();
    for (const char* key : { "setting", "model", "d" })
      if (const Json* v = s.find(key))
        base[key] = *v;
    s.finish();
    for (std::size_t k = 0; k < ns.size(); ++k) {
      Json one = base;
      one["n"] = ns[k];
      if (!ms.empty())
        one["m"] = ms[k];
      p.scenarios.push_back(scenario_from_json(one, where));
    }
  }
  f.finish();
  p.validate();
  return p;
}

Json to_json(const ScenarioConfig& s)
{
  return { { "setting", to_string(s.covariate_setting) },
           { "model", to_string(s.response_model) },
           { "n", s.n },
           { "m", s.m },
           { "d", s.d },
           { "seed", s.seed } };
}

Json to_json(const FunctionClassConfig& c)
{
  return { { "kind", to_string(c.kind) },
           { "candidates", c.degree_or_width_candidates },
           { "depths", c.depth_candidates },
           { "r_min", c.r_min },
           { "r_max", c.r_max },
           { "cv_folds", c.cv_folds },
           { "max_basis", c.max_basis },
           { "optimizer",
             { { "method", to_string(c.optimizer.method) },
               { "learning_rate", c.optimizer.learning_rate },
               { "max_epochs", c.optimizer.max_epochs },
               { "tolerance", c.optimizer.tolerance },
               { "patience", c.optimizer.patience },
               { "record_every", c.optimizer.record_every } } } };
}

Json to_json(const ELConfig& c)
{
  Json j = { { "max_iter", c.max_iter },
             { "tolerance", c.tolerance },
             { "max_halvings", c.max_halvings },
             { "grid_points", c.grid_points },
             { "lower_quantile", c.lower_quantile },
             { "upper_quantile", c.upper_quantile },
             { "bracket_expand", c.bracket_expand },
             { "outer_tolerance", c.outer_tolerance },
             { "simplex_max_evaluations", c.simplex_max_evaluations },
             { "max_widenings", c.max_widenings },
             { "crossing_tolerance", c.crossing_tolerance } };
  if (c.bracket)
    j["bracket"] = { c.bracket->first, c.bracket->second };
  return j;
}

Json to_json(const PipelineConfig& c)
{
  return { { "divergence", c.divergence },
           { "ratio_method", to_string(c.ratio_method) },
           { "ratio", to_json(c.ratio) },
           { "kernel",
             { { "bandwidth_grid", c.kernel.bandwidth_grid },
               { "loo_max", c.kernel.loo_max },
               { "r_min", c.kernel.r_min },
               { "r_max", c.kernel.r_max } } },
           { "classifier",
             { { "degree", c.classifier.degree },
               { "max_basis", c.classifier.max_basis },
               { "ridge", c.classifier.ridge },
               { "max_iterations", c.classifier.max_iterations },
               { "r_min", c.classifier.r_min },
               { "r_max", c.classifier.r_max } } },
           { "cde", to_json(c.cde) },
           { "aux",
             { { "inflation", c.aux.inflation },
               { "grid_size", c.aux.grid_size },
               { "grid_margin", c.aux.grid_margin } } },
           { "kappa", c.kappa },
           { "el", to_json(c.el) },
           { "ci", c.ci ? to_string(*c.ci) : std::string("default") },
           { "bootstrap_replicates", c.bootstrap_replicates },
           { "level", c.level },
           { "seed", c.seed } };
}

Json to_json(const ExperimentPlan& p)
{
  Json methods = Json::array();
  for (auto m : p.methods)
    methods.push_back(to_string(m));
  Json scenarios = Json::array();
  for (const auto& s : p.scenarios) {
    Json j = to_json(s);
    j.erase("seed");
    scenarios.push_back(j);
  }
  return { { "name", p.name },
           { "estimand", p.estimand },
           { "methods", methods },
           { "replications", p.replications },
           { "master_seed", p.master_seed },
           { "truth_draws", p.truth_draws },
           { "scenarios", scenarios },
           { "pipeline", to_json(p.pipeline) } };
}

// ---- models ------------------------------------------------------------------

Json to_json(const FittedFunction& f)
{
  Json arch;
  if (const auto* b = std::get_if<PolySieveBasis>(&f.architecture())) {
    arch = { { "type", "poly-sieve" },
             { "degree", b->degree },
             { "exponents", b->exponents },
             { "lo", vec(b->lo) },
             { "hi", vec(b->hi) } };
  } else {
    const auto& a = std::get<MlpArchitecture>(f.architecture());
    arch = { { "type", "mlp" },
             { "input_dim", a.input_dim },
             { "width", a.width },
             { "depth", a.depth },
             { "mean", vec(a.mean) },
             { "scale", vec(a.scale) } };
  }
  return { { "architecture", arch },
           { "link", link_name(f.link()) },
           { "r_min", f.r_min() },
           { "r_max", f.r_max() },
           { "parameters", vec(f.parameters()) },
           { "objective", f.objective },
           { "epochs", f.epochs },
           { "cv_scores", f.cv_scores } };
}

FittedFunction fitted_function_from_json(const Json& doc)
{
  try {
    const Json& a = field(doc, "architecture");
    const std::string type = field(a, "type").get<std::string>();
    Architecture arch;
    if (type == "poly-sieve") {
      PolySieveBasis b;
      b.degree = field(a, "degree").get<int>();
      b.exponents = field(a, "exponents").get<std::vector<std::vector<int>>>();
      b.lo = read_vec(a, "lo");
      b.hi = read_vec(a, "hi");
      for (const auto& e : b.exponents)
        if (static_cast<Eigen::Index>(e.size()) != b.lo.size())
          throw ParseError("sieve exponents do not match the input dimension");
      arch = b;
    } else if (type == "mlp") {
      MlpArchitecture m;
      m.input_dim = field(a, "input_dim").get<int>();
      m.width = field(a, "width").get<int>();
      m.depth = field(a, "depth").get<int>();
      m.mean = read_vec(a, "mean");
      m.scale = read_vec(a, "scale");
      arch = m;
    } else {
      throw ParseError("unknown architecture '" + type + "'");
    }
    FittedFunction f(std::move(arch),
                     read_vec(doc, "parameters"),
                     parse_link(field(doc, "link").get<std::string>()),
                     num(doc, "r_min"),
                     num(doc, "r_max"));
    const Eigen::Index expected = std::visit(
      [](const auto& x) -> Eigen::Index {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, PolySieveBasis>)
          return x.size();
        else
          return x.parameter_count();
      },
      f.architecture());
    if (f.parameters().size() != expected)
      throw ParseError("parameter vector has length " + std::to_string(f.parameters().size()) +
                       ", expected " + std::to_string(expected));
    f.objective = num(doc, "objective");
    f.epochs = field(doc, "epochs").get<int>();
    f.cv_scores = field(doc, "cv_scores").get<std::vector<double>>();
    return f;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed function document: ") + e.what());
  } catch (const ShapeError& e) {
    throw ParseError(std::string("malformed function document: ") + e.what());
  }
}

Json to_json(const RatioModel& r)
{
  Json j = { { "method", to_string(r.method()) },
             { "divergence", r.spec().name() },
             { "input_dim", r.input_dim() },
             { "objective", r.objective_value() },
             { "divergence_estimate", r.divergence_estimate() } };
  std::visit(
    [&](const auto& impl) {
      using T = std::decay_t<decltype(impl)>;
      if constexpr (std::is_same_v<T, FittedFunction>) {
        j["function"] = to_json(impl);
      } else if constexpr (std::is_same_v<T, KernelRatio>) {
        j["kernel"] = { { "source_x", rows_json(impl.source_x) },
                        { "target_x", rows_json(impl.target_x) },
                        { "bandwidth_source", vec(impl.bandwidth_source) },
                        { "bandwidth_target", vec(impl.bandwidth_target) },
                        { "r_min", impl.r_min },
                        { "r_max", impl.r_max } };
      } else if constexpr (std::is_same_v<T, ClassifierRatio>) {
        j["classifier"] = { { "degree", impl.basis.degree },
                            { "exponents", impl.basis.exponents },
                            { "lo", vec(impl.basis.lo) },
                            { "hi", vec(impl.basis.hi) },
                            { "coefficients", vec(impl.coefficients) },
                            { "tau", impl.tau },
                            { "r_min", impl.r_min },
                            { "r_max", impl.r_max } };
      } else {
        throw ContractError("ratio function '" + impl.name + "' cannot be serialised");
      }
    },
    r.impl());
  return j;
}

RatioModel ratio_model_from_json(const Json& doc)
{
  try {
    const RatioMethod method = parse_ratio_method(field(doc, "method").get<std::string>());
    const DivergenceSpec spec = divergence_from_name(field(doc, "divergence").get<std::string>());
    const double objective = num(doc, "objective");
    const double divergence = num(doc, "divergence_estimate");
    switch (method) {
      case RatioMethod::Ddr:
        return RatioModel(fitted_function_from_json(field(doc, "function")), spec, objective, divergence);
      case RatioMethod::KernelSmoothing: {
        const Json& k = field(doc, "kernel");
        KernelRatio kr;
        kr.source_x = read_rows(k, "source_x");
        kr.target_x = read_rows(k, "target_x");
        kr.bandwidth_source = read_vec(k, "bandwidth_source");
        kr.bandwidth_target = read_vec(k, "bandwidth_target");
        kr.r_min = num(k, "r_min");
        kr.r_max = num(k, "r_max");
        return RatioModel(kr, spec, objective, divergence);
      }
      case RatioMethod::ProbClassification: {
        const Json& k = field(doc, "classifier");
        ClassifierRatio cr;
        cr.basis.degree = field(k, "degree").get<int>();
        cr.basis.exponents = field(k, "exponents").get<std::vector<std::vector<int>>>();
        cr.basis.lo = read_vec(k, "lo");
        cr.basis.hi = read_vec(k, "hi");
        cr.coefficients = read_vec(k, "coefficients");
        cr.tau = num(k, "tau");
        cr.r_min = num(k, "r_min");
        cr.r_max = num(k, "r_max");
        if (cr.coefficients.size() != cr.basis.size())
          throw ParseError("classifier coefficients do not match the basis");
        return RatioModel(cr, spec, objective, divergence);
      }
      case RatioMethod::Function:
        break;
    }
    throw ParseError("ratio functions cannot be read from a document");
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed ratio model document: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("malformed ratio model document: ") + e.what());
  }
}

Json to_json(const CondDensityModel& m)
{
  return { { "aux", { { "location", m.aux().location }, { "scale", m.aux().scale } } },
           { "y_grid", vec(m.y_grid()) },
           { "input_dim", m.input_dim() },
           { "ratio", to_json(m.ratio()) } };
}

CondDensityModel cond_density_from_json(const Json& doc)
{
  try {
    AuxiliaryDistribution aux;
    const Json& a = field(doc, "aux");
    aux.location = num(a, "location");
    aux.scale = num(a, "scale");
    return CondDensityModel(aux, fitted_function_from_json(field(doc, "ratio")), read_vec(doc, "y_grid"));
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed conditional density document: ") + e.what());
  }
}

// ---- results -----------------------------------------------------------------

Json estimate_to_json(const EstimateReport& report,
                      const Dataset& data,
                      const EstimatingFunction& g,
                      int rn_points)
{
  const InferenceResult& inf = report.inference;
  Json j;
  j["method"] = to_string(report.method);
  j["estimand"] = estimand_label(g);
  j["moment"] = to_string(inf.kind);
  j["n"] = data.n();
  j["m"] = data.m();
  j["d"] = data.d();
  j["kappa"] = report.kappa;
  j["theta_hat"] = vec(inf.theta_hat);
  j["ell_hat"] = inf.ell_hat;
  j["evaluations"] = inf.evaluations;
  j["bracket"] = { inf.bracket.first, inf.bracket.second };
  j["lambda"] = vec(inf.solution.lambda);
  j["convergence"] = { { "converged", inf.solution.converged },
                       { "iterations", inf.solution.iterations },
                       { "gradient_norm", inf.solution.gradient_norm } };
  if (report.ci)
    j["ci"] = { { "method", to_string(report.ci_method) },
                { "level", inf.level },
                { "lo", report.ci->lo },
                { "hi", report.ci->hi } };
  else
    j["ci"] = nullptr;

  // R_N on a grid; null marks an infeasible parameter value
  Json rn = Json::array();
  if (inf.theta_hat.size() == 1 && rn_points >= 2) {
    double lo = inf.bracket.first, hi = inf.bracket.second;
    if (report.ci) {
      lo = std::min(lo, report.ci->lo);
      hi = std::max(hi, report.ci->hi);
    }
    for (int k = 0; k < rn_points; ++k) {
      const double t = lo + (hi - lo) * k / (rn_points - 1.0);
      const double v = inf.r_n(t);
      rn.push_back({ { "theta", t }, { "r_n", std::isfinite(v) ? Json(v) : Json(nullptr) } });
    }
  }
  j["r_n"] = rn;

  try {
    const auto v = variance_estimates(inf.kind, data, report.nuisances.values, g, inf.theta_hat);
    Json var = { { "gamma", mat(v.gamma) }, { "omega", mat(v.omega) } };
    if (v.sigma.size() > 0) {
      var["sigma"] = mat(v.sigma);
      var["standard_error"] =
        vec((v.sigma.diagonal() / static_cast<double>(data.total())).cwiseSqrt());
    }
    j["variance"] = var;
  } catch (const Error& e) {
    j["variance"] = { { "error", e.what() } };
  }

  if (report.bootstrap) {
    j["bootstrap"] = { { "replicates", report.bootstrap->estimates.size() + report.bootstrap->failures },
                       { "failures", report.bootstrap->failures },
                       { "failure_log", report.bootstrap->failure_log },
                       { "estimates", report.bootstrap->estimates } };
  }

  Json nu = Json::object();
  if (report.nuisances.ratio) {
    const RatioModel& r = *report.nuisances.ratio;
    Json rj = { { "method", to_string(r.method()) },
                { "objective", r.objective_value() },
                { "divergence_estimate", r.divergence_estimate() } };
    if (const auto* f = std::get_if<FittedFunction>(&r.impl()))
      rj["capacity"] = capacity_json(f->capacity());
    nu["ratio"] = rj;
  }
  if (report.nuisances.cde)
    nu["cde"] = { { "capacity", capacity_json(report.nuisances.cde->ratio().capacity()) },
                  { "objective", report.nuisances.cde->ratio().objective } };
  j["nuisances"] = nu;
  return j;
}

Json to_json(const SimReport& report)
{
  Json summaries = Json::array();
  for (const auto& s : report.summaries) {
    const auto& sc = report.plan.scenarios.at(s.scenario);
    summaries.push_back({ { "scenario", s.scenario },
                          { "setting", to_string(sc.covariate_setting) },
                          { "model", to_string(sc.response_model) },
                          { "n", sc.n },
                          { "m", sc.m },
                          { "d", sc.d },
                          { "method", to_string(s.method) },
                          { "successes", s.successes },
                          { "failures", s.failures },
                          { "bias", s.bias },
                          { "std_dev", s.std_dev },
                          { "std_dev_defined", s.std_dev_defined },
                          { "mse", s.mse },
                          { "median_squared_error", s.median_squared_error },
                          { "coverage", s.coverage },
                          { "mean_ci_length", s.mean_ci_length },
                          { "mean_r_n_truth", s.mean_r_n_truth },
                          { "rejection_rate", s.rejection_rate } });
  }
  return { { "plan", to_json(report.plan) },
           { "truths", report.truths },
           { "summaries", summaries },
           { "run_failed", report.run_failed },
           { "failure_message", report.failure_message } };
}

// ---- files -------------------------------------------------------------------

std::string sha256_hex(std::string_view bytes)
{
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw NumericError("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path)
{
  return sha256_hex(read_text(path));
}

void write_text(const std::filesystem::path& path, std::string_view text)
{
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw ConfigError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out)
    throw ConfigError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dump(const Json& doc)
{
  return doc.dump(2) + "\n";
}

std::string imputations_csv(const ImputationSet& imputations)
{
  std::ostringstream os;
  os << "row";
  for (int k = 0; k < imputations.kappa; ++k)
    os << ",draw_" << (k + 1);
  os << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < imputations.rows(); ++i) {
    os << i;
    for (Eigen::Index k = 0; k < imputations.draws.cols(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", imputations.draws(i, k));
      os << ',' << buf;
    }
    os << '\n';
  }
  return os.str();
}

} // namespace shiftel
