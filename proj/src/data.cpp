#include "shiftel/data.hpp"
#include "shiftel/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

namespace shiftel {

namespace {

constexpr double kBetaShape = 6.0 / 5.0;
constexpr double kAr1 = 0.5;

bool all_finite(const RowMatrix& x)
{
  return x.allFinite();
}

// sums over the even- and odd-indexed coordinates (1-based) up to floor(d/2)
std::pair<double, double> paired_sums(std::span<const double> x)
{
  const std::size_t half = x.size() / 2;
  double even = 0.0;
  double odd = 0.0;
  for (std::size_t k = 1; k <= half; ++k) {
    even += x[2 * k - 1];
    odd += x[2 * k - 2];
  }
  return { even, odd };
}

std::string trim(std::string_view s)
{
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos)
    return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line)
{
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ','))
    out.push_back(trim(field));
  if (!line.empty() && line.back() == ',')
    out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& out)
{
  if (s.empty())
    return false;
  const char* begin = s.data();
  if (*begin == '+')
    ++begin;
  auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

} // namespace

Dataset::Dataset(RowMatrix source_x, Eigen::VectorXd source_y, RowMatrix target_x)
  : source_x_(std::move(source_x))
  , source_y_(std::move(source_y))
  , target_x_(std::move(target_x))
{
  if (source_x_.rows() < 1)
    throw ConfigError("dataset needs at least one source row");
  if (target_x_.rows() < 1)
    throw ConfigError("dataset needs at least one target row");
  if (source_x_.cols() < 1)
    throw ConfigError("dataset needs at least one covariate column");
  if (source_x_.cols() != target_x_.cols())
    throw ShapeError("source and target covariate counts differ");
  if (source_y_.size() != source_x_.rows())
    throw ShapeError("source response length does not match source rows");
  if (!all_finite(source_x_) || !all_finite(target_x_) || !source_y_.allFinite())
    throw DomainError("dataset contains non-finite values");
}

RowMatrix Dataset::pooled_x() const
{
  RowMatrix out(total(), d());
  out.topRows(n()) = source_x_;
  out.bottomRows(m()) = target_x_;
  return out;
}

void ScenarioConfig::validate() const
{
  if (n < 1 || m < 1)
    throw ConfigError("scenario sample sizes must be positive");
  if (d < 1)
    throw ConfigError("scenario dimension d must be at least 1");
}

std::string to_string(CovariateSetting s)
{
  return s == CovariateSetting::S1 ? "S1" : "S2";
}

std::string to_string(ResponseModel m)
{
  switch (m) {
    case ResponseModel::M1:
      return "M1";
    case ResponseModel::M2:
      return "M2";
    case ResponseModel::M3:
      return "M3";
  }
  return "?";
}

CovariateSetting parse_covariate_setting(std::string_view s)
{
  if (s == "S1" || s == "s1")
    return CovariateSetting::S1;
  if (s == "S2" || s == "s2")
    return CovariateSetting::S2;
  throw ConfigError("unknown covariate setting '" + std::string(s) + "'");
}

ResponseModel parse_response_model(std::string_view s)
{
  if (s == "M1" || s == "m1")
    return ResponseModel::M1;
  if (s == "M2" || s == "m2")
    return ResponseModel::M2;
  if (s == "M3" || s == "m3")
    return ResponseModel::M3;
  throw ConfigError("unknown response model '" + std::string(s) + "'");
}

double sample_beta(double a, double b, Rng& rng)
{
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double u = ga(rng);
  const double v = gb(rng);
  return u / (u + v);
}

RowMatrix generate_covariates(CovariateSetting setting,
                              SampleRole role,
                              std::int64_t n,
                              std::int64_t d,
                              Rng& rng)
{
  if (n < 1 || d < 1)
    throw ConfigError("generate_covariates: n and d must be positive");

  RowMatrix x(n, d);
  if (setting == CovariateSetting::S1) {
    if (role == SampleRole::Source) {
      for (Eigen::Index i = 0; i < x.size(); ++i)
        x.data()[i] = rng.uniform();
    } else {
      for (Eigen::Index i = 0; i < x.size(); ++i)
        x.data()[i] = sample_beta(kBetaShape, kBetaShape, rng);
    }
    return x;
  }

  std::normal_distribution<double> z(0.0, 1.0);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x.data()[i] = z(rng);
  if (role == SampleRole::Target) {
    Eigen::MatrixXd sigma(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        sigma(i, j) = std::pow(kAr1, std::abs(static_cast<double>(i - j)));
    const Eigen::MatrixXd lower = sigma.llt().matrixL();
    // rows are i.i.d. N(0, I); right-multiplying by L^T gives N(0, L L^T)
    x = (x * lower.transpose()).eval();
  }
  return x;
}

double regression_function(std::span<const double> x, ResponseModel model)
{
  const auto [even, odd] = paired_sums(x);
  switch (model) {
    case ResponseModel::M1:
      return 0.5 * even - 0.5 * odd;
    case ResponseModel::M2:
      return std::sin(std::numbers::pi * even);
    case ResponseModel::M3:
      return even < odd ? 1.0 : 0.0;
  }
  return 0.0;
}

double noise_sd(std::span<const double> x)
{
  return std::sqrt(std::max(0.5, std::abs(x[0])));
}

double generate_response(std::span<const double> x, ResponseModel model, Rng& rng)
{
  std::normal_distribution<double> z(0.0, 1.0);
  return regression_function(x, model) + noise_sd(x) * z(rng);
}

double true_conditional_density(double y,
                                std::span<const double> x,
                                ResponseModel model)
{
  const double sd = noise_sd(x);
  const double u = (y - regression_function(x, model)) / sd;
  return std::exp(-0.5 * u * u) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

double beta_pdf(double x, double a, double b)
{
  if (x < 0.0 || x > 1.0)
    return 0.0;
  if ((x == 0.0 && a > 1.0) || (x == 1.0 && b > 1.0))
    return 0.0;
  const double log_norm =
    std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  return std::exp(log_norm + (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x));
}

double true_density_ratio_s1(std::span<const double> x)
{
  double r = 1.0;
  for (double v : x) {
    if (!(v >= 0.0 && v <= 1.0))
      throw DomainError("S1 density ratio is only defined on the unit cube");
    r *= beta_pdf(v, kBetaShape, kBetaShape);
  }
  return r;
}

double true_density_ratio_s2(std::span<const double> x)
{
  // Sigma is AR(1) with rho = 0.5: tridiagonal inverse, det = (1 - rho^2)^(d-1)
  const std::size_t d = x.size();
  const double rho2 = kAr1 * kAr1;
  double quad_sigma_inv = 0.0;
  if (d == 1) {
    quad_sigma_inv = x[0] * x[0];
  } else {
    double diag = x[0] * x[0] + x[d - 1] * x[d - 1];
    for (std::size_t j = 1; j + 1 < d; ++j)
      diag += (1.0 + rho2) * x[j] * x[j];
    double cross = 0.0;
    for (std::size_t j = 0; j + 1 < d; ++j)
      cross += x[j] * x[j + 1];
    quad_sigma_inv = (diag - 2.0 * kAr1 * cross) / (1.0 - rho2);
  }
  double quad_identity = 0.0;
  for (double v : x)
    quad_identity += v * v;
  const double log_det = static_cast<double>(d - 1) * std::log(1.0 - rho2);
  return std::exp(-0.5 * log_det - 0.5 * (quad_sigma_inv - quad_identity));
}

double true_density_ratio(CovariateSetting setting, std::span<const double> x)
{
  return setting == CovariateSetting::S1 ? true_density_ratio_s1(x)
                                         : true_density_ratio_s2(x);
}

Dataset generate_dataset(const ScenarioConfig& config)
{
  config.validate();
  Rng master(config.seed);
  Rng sx = master.split(0);
  Rng sy = master.split(1);
  Rng tx = master.split(2);

  RowMatrix source_x = generate_covariates(
    config.covariate_setting, SampleRole::Source, config.n, config.d, sx);
  Eigen::VectorXd source_y(config.n);
  for (Eigen::Index i = 0; i < config.n; ++i)
    source_y(i) = generate_response(row_span(source_x, i), config.response_model, sy);
  RowMatrix target_x = generate_covariates(
    config.covariate_setting, SampleRole::Target, config.m, config.d, tx);
  return Dataset(std::move(source_x), std::move(source_y), std::move(target_x));
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema)
{
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open data file '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line))
    throw ParseError("data file is empty: " + path.string(), 0);
  const auto header = split_csv_line(line);

  std::map<int, std::size_t> covariate_cols;
  long y_col = -1;
  long role_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h == schema.response_column) {
      y_col = static_cast<long>(c);
    } else if (h == schema.role_column) {
      role_col = static_cast<long>(c);
    } else if (h.rfind(schema.covariate_prefix, 0) == 0) {
      int idx = 0;
      const auto suffix = h.substr(schema.covariate_prefix.size());
      auto [p, ec] = std::from_chars(suffix.data(), suffix.data() + suffix.size(), idx);
      if (ec != std::errc() || p != suffix.data() + suffix.size() || idx < 1)
        throw ParseError("unrecognised column '" + h + "'", 0);
      covariate_cols[idx] = c;
    } else {
      throw ParseError("unrecognised column '" + h + "'", 0);
    }
  }
  if (role_col < 0)
    throw ParseError("missing '" + schema.role_column + "' column", 0);
  if (y_col < 0)
    throw ParseError("missing '" + schema.response_column + "' column", 0);
  if (covariate_cols.empty())
    throw ParseError("no covariate columns", 0);
  const int d = static_cast<int>(covariate_cols.size());
  if (covariate_cols.rbegin()->first != d)
    throw ParseError("covariate columns must be numbered 1..d without gaps", 0);

  std::vector<double> sx, sy, tx;
  long row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty())
      continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ParseError("row " + std::to_string(row) + ": expected " +
                         std::to_string(header.size()) + " fields",
                       row);
    const std::string& role = fields[role_col];
    const bool is_source = role == "source";
    if (!is_source && role != "target")
      throw ParseError("row " + std::to_string(row) + ": role must be source or target",
                       row);
    auto& dest = is_source ? sx : tx;
    for (const auto& [idx, col] : covariate_cols) {
      double v = 0.0;
      if (!parse_double(fields[col], v) || !std::isfinite(v))
        throw ParseError("row " + std::to_string(row) + ": covariate x" +
                           std::to_string(idx) + " is missing or not finite",
                         row);
      dest.push_back(v);
    }
    if (is_source) {
      const std::string& yf = fields[y_col];
      double v = 0.0;
      if (yf.empty() || yf == "NA" || !parse_double(yf, v) || !std::isfinite(v))
        throw ParseError("row " + std::to_string(row) +
                           ": source row needs a finite response",
                         row);
      sy.push_back(v);
    }
  }

  if (sy.empty())
    throw ConfigError("data file has no source rows");
  if (tx.empty())
    throw ConfigError("data file has no target rows");

  const auto n = static_cast<Eigen::Index>(sy.size());
  const auto m = static_cast<Eigen::Index>(tx.size() / d);
  RowMatrix source_x = Eigen::Map<RowMatrix>(sx.data(), n, d);
  RowMatrix target_x = Eigen::Map<RowMatrix>(tx.data(), m, d);
  Eigen::VectorXd source_y = Eigen::Map<Eigen::VectorXd>(sy.data(), n);
  return Dataset(std::move(source_x), std::move(source_y), std::move(target_x));
}

void write_csv(const Dataset& data, const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out)
    throw ConfigError("cannot write '" + path.string() + "'");
  out.precision(17);
  for (Eigen::Index j = 0; j < data.d(); ++j)
    out << 'x' << (j + 1) << ',';
  out << "y,role\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < data.d(); ++j)
      out << data.source_x()(i, j) << ',';
    out << data.source_y()(i) << ",source\n";
  }
  for (Eigen::Index i = 0; i < data.m(); ++i) {
    for (Eigen::Index j = 0; j < data.d(); ++j)
      out << data.target_x()(i, j) << ',';
    out << "NA,target\n";
  }
}

} // namespace shiftel
