#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixcop/estimation.hpp"
#include "mixcop/marginals.hpp"
#include "mixcop/simulation.hpp"
#include "mixcop/validation.hpp"

namespace mixcop {

inline constexpr int kSchemaVersion = 1;

/// Unreadable or malformed input data.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration file or option.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Column mapping for long-format CSV input.
struct ColumnSpec {
  std::string subject = "subject";
  std::string time = "time";
  std::string response = "y";
  /// Empty selects every column other than subject and response.
  std::vector<std::string> covariates;
  /// Prepend a constant column named "intercept" unless one is already selected.
  bool intercept = true;
};

/// One row per subject-visit; rows of a subject need not be contiguous and
/// are sorted by time. Lines starting with '#' are skipped. Throws DataError.
LongitudinalDataset read_long_csv(std::istream& in, const ColumnSpec& columns = {});
LongitudinalDataset read_long_csv(const std::string& path, const ColumnSpec& columns = {});

/// Writes subject, time, y and every covariate column except "time" itself.
void write_long_csv(std::ostream& out, const LongitudinalDataset& data);

/// Everything `fit` needs besides the data.
struct ModelConfig {
  ColumnSpec columns;
  MarginalFamily marginal = MarginalFamily::NegBinomial;
  CopulaFitConfig copula;
  std::uint64_t seed = 1;
  int threads = 1;
};

ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& config);

nlohmann::json to_json(const MarginalSpec& spec);
MarginalSpec marginal_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MixtureCopulaSpec& spec);
MixtureCopulaSpec copula_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CopulaFitConfig& config);
CopulaFitConfig copula_fit_config_from_json(const nlohmann::json& j, CopulaFitConfig base = {});

StudyConfig study_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StudyConfig& config);

nlohmann::json to_json(const FitResult& fit);
FitResult fit_result_from_json(const nlohmann::json& j);

nlohmann::json to_json(const StudyReport& report);

/// Parses a JSON file; throws ConfigError if unreadable or invalid.
nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

/// Fit summary: parameter, estimate, SE, then comp_loglik, CLAIC, CLBIC.
void write_fit_table(std::ostream& out, const FitResult& fit);

}  // namespace mixcop
