#pragma once

#include "shiftel/estimation.hpp"
#include "shiftel/harness.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>

namespace shiftel {

using Json = nlohmann::json;

inline constexpr std::string_view kVersion = "0.1.0";

// ---- configuration -------------------------------------------------------

//! Reads a TOML (.toml) or JSON (any other extension) document into a JSON
//! tree. Throws ParseError on malformed input and ConfigError when missing.
Json load_config_document(const std::filesystem::path& path);

//! Strict readers: unknown keys and wrongly typed values raise ConfigError
//! naming the dotted key path.
ScenarioConfig scenario_from_json(const Json& doc, const std::string& where = "scenario");
FunctionClassConfig function_class_from_json(const Json& doc,
                                             FunctionClassConfig defaults,
                                             const std::string& where);
ELConfig el_config_from_json(const Json& doc, const std::string& where = "pipeline.el");
PipelineConfig pipeline_from_json(const Json& doc, const std::string& where = "pipeline");
//! Scenario entries accept a list for n (and m), expanded into a grid.
ExperimentPlan plan_from_json(const Json& doc);

Json to_json(const ScenarioConfig& s);
Json to_json(const FunctionClassConfig& c);
Json to_json(const ELConfig& c);
Json to_json(const PipelineConfig& c);
Json to_json(const ExperimentPlan& p);

// ---- models --------------------------------------------------------------

Json to_json(const FittedFunction& f);
FittedFunction fitted_function_from_json(const Json& doc);
//! Function-backed ratios (oracles) cannot be serialised; ContractError.
Json to_json(const RatioModel& r);
RatioModel ratio_model_from_json(const Json& doc);
Json to_json(const CondDensityModel& m);
CondDensityModel cond_density_from_json(const Json& doc);

// ---- results -------------------------------------------------------------

//! Estimate, interval, multipliers, diagnostics and R_N evaluated on
//! `rn_points` parameter values across the search bracket.
Json estimate_to_json(const EstimateReport& report,
                      const Dataset& data,
                      const EstimatingFunction& g,
                      int rn_points = 41);
Json to_json(const SimReport& report);

// ---- files ---------------------------------------------------------------

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);
//! Writes the file, creating parent directories.
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);
//! Pretty JSON with a trailing newline.
std::string dump(const Json& doc);

//! Imputation draws as CSV (row, then kappa draw columns).
std::string imputations_csv(const ImputationSet& imputations);

} // namespace shiftel
