#pragma once

// JSON and CSV serialization for specs, fits, reports, configs and tables.

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "drig/adaptation.hpp"
#include "drig/experiments.hpp"
#include "drig/robustness.hpp"

namespace drig::io {

using Json = nlohmann::json;

/// Shortest decimal that parses back to the same double; "inf", "-inf", "nan"
/// for non-finite values.
std::string format_double(double x);

Json to_json(const Matrix& m);
Json to_json(const Vector& v);
Matrix matrix_from_json(const Json& j, const std::string& what);
Vector vector_from_json(const Json& j, const std::string& what);

Json to_json(const ScmSpec& spec);
/// Parses and validates; malformed documents raise InvalidInput.
ScmSpec spec_from_json(const Json& j);

Json to_json(const FitResult& fit);
Json to_json(const DualityReport& report);
Json to_json(const TestDomainInfo& info);
TestDomainInfo test_info_from_json(const Json& j);
GammaMatrix gamma_matrix_from_json(const Json& j);

Json to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const Json& j);

/// Per-method curves (mean, median, bootstrap interval) plus recorded errors.
Json summary_json(const ExperimentConfig& config, const RunResult& result);

Json read_json_file(const std::string& path);

/// Writes `content` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

/// Comma-separated file with a header row and no missing cells.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

/// Columns of `table` (all, in order) parsed as doubles.
Matrix numeric_matrix(const CsvTable& table, const std::vector<std::size_t>& columns);

/// Environment-labeled regression data. samples[0] is the reference.
struct EnvironmentData {
    std::vector<std::string> labels;
    std::vector<std::string> covariates;
    std::vector<Matrix> samples;  ///< columns: covariates then response
};

/// Splits `table` by `env_column`. Every other column except `response_column`
/// is a covariate. The reference defaults to the smallest label (numeric order
/// when all labels are numbers).
EnvironmentData split_environments(const CsvTable& table, const std::string& env_column,
                                   const std::string& response_column, const std::string& reference = "");

/// Header env,x1..xp,y; one block of rows per environment.
std::string samples_csv(const std::vector<Matrix>& samples);

std::string results_csv(const std::vector<ResultRow>& rows);

}  // namespace drig::io
