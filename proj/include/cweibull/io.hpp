#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cweibull/estimation.hpp"
#include "cweibull/metrics.hpp"
#include "cweibull/model.hpp"
#include "cweibull/simulation.hpp"

namespace cweibull::io {

inline constexpr int kFormatVersion = 1;

// Shortest round-trip decimal form, independent of the C locale.
std::string format_double(double v);
// Throws ConfigError on anything but a complete decimal number.
double parse_double(std::string_view text, std::string_view context = {});

// RFC-4180 table: first record is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text);
std::string to_csv(const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
// Writes to a temporary sibling and renames, so readers never see a
// partially written file.
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

nlohmann::json read_json(const std::filesystem::path& path);
std::string dump_json(const nlohmann::json& j);

// Survival data with named covariate columns: header time,status,<names...>.
struct NamedDataset {
  Dataset data;
  std::vector<std::string> covariate_names;
};

NamedDataset dataset_from_csv(const CsvTable& table);
// Covariates only; time/status columns are used when present and otherwise
// filled with 1. `names` selects and orders the covariate columns.
NamedDataset covariates_from_csv(const CsvTable& table,
                                 const std::vector<std::string>& names);
CsvTable dataset_to_csv(const NamedDataset& data);

// A model structure resolved against covariate names.
struct NamedModel {
  ModelSpec spec;
  std::vector<std::string> covariate_names;
  // Present when every group carries alpha, beta and sigma.
  std::optional<Theta> theta;
};

// Reads a model-spec JSON: {"groups": [{"name", "covariates": [names...],
// optional "alpha", "beta", "sigma"}]}. Also accepts truth and fit files.
// Unknown keys are rejected.
NamedModel model_from_json(const nlohmann::json& j,
                           const std::vector<std::string>& covariate_names);

// Scenario JSON: {groups: [{indices, alpha, beta, sigma}], n,
// target_censoring, seed}; indices are zero-based covariate columns.
ScenarioSpec scenario_from_json(const nlohmann::json& j);

std::vector<std::string> default_covariate_names(std::size_t p);

nlohmann::json truth_to_json(const ScenarioSpec& scenario,
                             const SimulatedDataset& sim,
                             const std::vector<std::string>& covariate_names);

// Everything `fit` writes and `predict` / `evaluate` read back.
struct FitFile {
  std::string method = "em";  // "em" or "weibull_aft"
  std::vector<std::string> covariate_names;
  ModelSpec spec;
  Theta theta;
  std::vector<double> std_errors;  // empty when unavailable
  std::string std_error_message;
  PenaltyConfig penalty;
  FitConfig config;
  bool converged = false;
  int n_iters = 0;
  double log_likelihood = 0.0;
  double penalized_objective = 0.0;
  std::vector<double> loglik_trace;
};

nlohmann::json fit_to_json(const FitFile& fit);
FitFile fit_from_json(const nlohmann::json& j);

CsvTable eta_to_csv(const Dataset& data, const EtaMatrix& eta,
                    const ModelSpec& spec);

nlohmann::json roc_to_json(const RocCurve& roc);
CsvTable roc_to_csv(const RocCurve& roc);

}  // namespace cweibull::io
