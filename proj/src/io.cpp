#include "drig/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unistd.h>

#include "drig/random.hpp"

namespace drig::io {

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorKind::InvalidInput, msg); }

const Json& field(const Json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) bad(where + ": missing field '" + key + "'");
    return j.at(key);
}

double number(const Json& j, const std::string& what) {
    if (!j.is_number()) bad(what + " must be a number");
    return j.get<double>();
}

std::size_t count(const Json& j, const std::string& what) {
    if (!j.is_number_integer() && !j.is_number_unsigned()) bad(what + " must be an integer");
    const auto v = j.get<long long>();
    if (v < 0) bad(what + " must be non-negative");
    return static_cast<std::size_t>(v);
}

std::vector<double> numbers(const Json& j, const std::string& what) {
    if (!j.is_array()) bad(what + " must be an array");
    std::vector<double> out;
    for (const auto& x : j) out.push_back(number(x, what));
    return out;
}

void only_keys(const Json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) bad(where + " must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (std::none_of(keys.begin(), keys.end(), [&](const char* key) { return k == key; })) {
            bad(where + ": unknown field '" + k + "'");
        }
    }
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
            was_quoted = true;
        } else if (c == ',') {
            cells.push_back(was_quoted ? cell : trim(cell));
            cell.clear();
            was_quoted = false;
        } else {
            cell += c;
        }
    }
    if (quoted) bad("unterminated quote in CSV line");
    cells.push_back(was_quoted ? cell : trim(cell));
    return cells;
}

std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const auto* begin = s.data();
    const auto* end = s.data() + s.size();
    if (*begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end) return std::nullopt;
    return v;
}

}  // namespace

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, ptr);
}

Json to_json(const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Json to_json(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Matrix matrix_from_json(const Json& j, const std::string& what) {
    if (!j.is_array()) bad(what + " must be an array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) return Matrix(0, 0);
    if (!j.front().is_array()) bad(what + " must be an array of rows");
    const auto cols = static_cast<Eigen::Index>(j.front().size());
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) bad(what + " has ragged rows");
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = number(row[static_cast<std::size_t>(c)], what);
    }
    return m;
}

Vector vector_from_json(const Json& j, const std::string& what) {
    const auto values = numbers(j, what);
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Json to_json(const ScmSpec& spec) {
    Json envs = Json::array();
    for (const auto& e : spec.environments) {
        envs.push_back({{"mu", to_json(e.mu)}, {"S", to_json(e.cov)}, {"weight", e.weight}});
    }
    return {{"p", spec.p}, {"B", to_json(spec.B)}, {"noise_cov", to_json(spec.noise_cov)}, {"environments", envs}};
}

ScmSpec spec_from_json(const Json& j) {
    only_keys(j, {"p", "B", "noise_cov", "environments"}, "spec");
    ScmSpec spec;
    const auto p = count(field(j, "p", "spec"), "p");
    if (p < 1 || p > 100000) bad("p must be a positive integer");
    spec.p = static_cast<int>(p);
    spec.B = matrix_from_json(field(j, "B", "spec"), "B");
    spec.noise_cov = matrix_from_json(field(j, "noise_cov", "spec"), "noise_cov");
    const Json& envs = field(j, "environments", "spec");
    if (!envs.is_array() || envs.empty()) bad("environments must be a non-empty array");
    for (const auto& e : envs) {
        only_keys(e, {"mu", "S", "weight"}, "environment");
        InterventionLaw law;
        law.mu = vector_from_json(field(e, "mu", "environment"), "mu");
        law.cov = matrix_from_json(field(e, "S", "environment"), "S");
        law.weight = e.contains("weight") ? number(e.at("weight"), "weight")
                                          : 1.0 / static_cast<double>(envs.size());
        spec.environments.push_back(std::move(law));
    }
    validate(spec);
    return spec;
}

Json to_json(const FitResult& fit) {
    Json j{{"method", std::string(to_string(fit.method))}};
    if (fit.gamma) j["gamma"] = *fit.gamma;
    j["b"] = to_json(fit.b);
    j["objective"] = fit.objective;
    j["grad_invariance_residual"] = fit.grad_invariance_residual;
    j["condition"] = fit.condition;
    if (fit.gamma_matrix) {
        j["gamma_matrix"] = {{"Gamma_x", to_json(fit.gamma_matrix->gamma_x)},
                             {"gamma_y", fit.gamma_matrix->gamma_y}};
    }
    return j;
}

Json to_json(const DualityReport& report) {
    return {{"max_identity_violation", report.max_identity_violation},
            {"min_gap_vs_drig", report.min_gap_vs_drig},
            {"probes", report.probes}};
}

Json to_json(const TestDomainInfo& info) {
    Json j{{"sigma_x", to_json(info.sigma_x)}, {"sigma_xy", to_json(info.sigma_xy)}};
    if (info.n_l) j["n_l"] = *info.n_l;
    if (info.n_u) {
        j["n_u"] = *info.n_u;
    } else {
        j["n_u"] = "population";
    }
    return j;
}

TestDomainInfo test_info_from_json(const Json& j) {
    only_keys(j, {"sigma_x", "sigma_xy", "n_l", "n_u"}, "test info");
    TestDomainInfo info;
    info.sigma_x = matrix_from_json(field(j, "sigma_x", "test info"), "sigma_x");
    info.sigma_xy = vector_from_json(field(j, "sigma_xy", "test info"), "sigma_xy");
    if (info.sigma_x.rows() != info.sigma_xy.size() || info.sigma_x.cols() != info.sigma_xy.size()) {
        bad("sigma_x must be p x p with p = size of sigma_xy");
    }
    linalg::checked_psd(info.sigma_x, "sigma_x");
    if (j.contains("n_l")) info.n_l = count(j.at("n_l"), "n_l");
    if (j.contains("n_u") && !(j.at("n_u").is_string() && j.at("n_u") == "population")) {
        info.n_u = count(j.at("n_u"), "n_u");
    }
    return info;
}

GammaMatrix gamma_matrix_from_json(const Json& j) {
    GammaMatrix g;
    if (j.is_object()) {
        only_keys(j, {"Gamma_x", "gamma_y"}, "Gamma");
        g.gamma_x = matrix_from_json(field(j, "Gamma_x", "Gamma"), "Gamma_x");
        g.gamma_y = number(field(j, "gamma_y", "Gamma"), "gamma_y");
        return g;
    }
    // A full (p+1)x(p+1) matrix; it must be block diagonal.
    const Matrix full = matrix_from_json(j, "Gamma");
    const Eigen::Index d = full.rows();
    if (d < 2 || full.cols() != d) bad("Gamma must be a square matrix of size p+1");
    const Eigen::Index p = d - 1;
    if (full.row(p).head(p).cwiseAbs().maxCoeff() != 0.0 || full.col(p).head(p).cwiseAbs().maxCoeff() != 0.0) {
        bad("Gamma must be block diagonal diag(Gamma_x, gamma_y)");
    }
    g.gamma_x = full.topLeftCorner(p, p);
    g.gamma_y = full(p, p);
    return g;
}

Json to_json(const ExperimentConfig& c) {
    Json methods = c.methods;
    Json j{{"scenario", std::string(to_string(c.scenario))},
           {"alpha_grid", c.alpha_grid},
           {"gamma_grid", c.gamma_grid},
           {"methods", methods},
           {"repetitions", c.repetitions},
           {"seed", c.seed},
           {"weights", c.weights == WeightMode::uniform ? "uniform" : "sample-size"}};
    if (c.p) j["p"] = *c.p;
    if (c.n_train) j["n_train"] = *c.n_train;
    if (c.n_labeled) j["n_labeled"] = *c.n_labeled;
    if (c.n_train_envs) j["n_train_envs"] = *c.n_train_envs;
    if (c.n_test_envs) j["n_test_envs"] = *c.n_test_envs;
    if (c.edge_prob) j["edge_prob"] = *c.edge_prob;
    if (c.spec) j["spec"] = to_json(*c.spec);
    if (!c.test_laws.empty()) {
        Json laws = Json::array();
        for (const auto& law : c.test_laws) laws.push_back({{"mu", to_json(law.mu)}, {"S", to_json(law.cov)}});
        j["test_laws"] = laws;
    }
    return j;
}

ExperimentConfig config_from_json(const Json& j) {
    only_keys(j,
              {"scenario", "alpha_grid", "gamma_grid", "methods", "repetitions", "seed", "weights", "p", "n_train",
               "n_labeled", "n_train_envs", "n_test_envs", "edge_prob", "spec", "test_laws"},
              "config");
    ExperimentConfig c;
    const Json& scenario = field(j, "scenario", "config");
    if (!scenario.is_string()) bad("scenario must be a string");
    const auto s = scenario_from_string(scenario.get<std::string>());
    if (!s) bad("unknown scenario '" + scenario.get<std::string>() + "'");
    c.scenario = *s;
    c.alpha_grid = numbers(field(j, "alpha_grid", "config"), "alpha_grid");
    if (j.contains("gamma_grid")) c.gamma_grid = numbers(j.at("gamma_grid"), "gamma_grid");
    const Json& methods = field(j, "methods", "config");
    if (!methods.is_array()) bad("methods must be an array of strings");
    for (const auto& m : methods) {
        if (!m.is_string()) bad("methods must be an array of strings");
        c.methods.push_back(m.get<std::string>());
    }
    if (j.contains("repetitions")) c.repetitions = count(j.at("repetitions"), "repetitions");
    if (j.contains("seed")) c.seed = j.at("seed").is_number_unsigned() || j.at("seed").is_number_integer()
                                         ? j.at("seed").get<std::uint64_t>()
                                         : (bad("seed must be an integer"), 0);
    if (j.contains("weights")) {
        const Json& w = j.at("weights");
        if (w == "uniform") {
            c.weights = WeightMode::uniform;
        } else if (w == "sample-size" || w == "size") {
            c.weights = WeightMode::sample_size;
        } else {
            bad("weights must be 'uniform' or 'sample-size'");
        }
    }
    if (j.contains("p")) c.p = static_cast<int>(count(j.at("p"), "p"));
    if (j.contains("n_train")) c.n_train = count(j.at("n_train"), "n_train");
    if (j.contains("n_labeled")) c.n_labeled = count(j.at("n_labeled"), "n_labeled");
    if (j.contains("n_train_envs")) c.n_train_envs = count(j.at("n_train_envs"), "n_train_envs");
    if (j.contains("n_test_envs")) c.n_test_envs = count(j.at("n_test_envs"), "n_test_envs");
    if (j.contains("edge_prob")) c.edge_prob = number(j.at("edge_prob"), "edge_prob");
    if (j.contains("spec")) c.spec = spec_from_json(j.at("spec"));
    if (j.contains("test_laws")) {
        if (!j.at("test_laws").is_array()) bad("test_laws must be an array");
        for (const auto& law : j.at("test_laws")) {
            only_keys(law, {"mu", "S"}, "test law");
            c.test_laws.push_back({vector_from_json(field(law, "mu", "test law"), "mu"),
                                   matrix_from_json(field(law, "S", "test law"), "S")});
        }
    }
    c.validate();
    return c;
}

Json summary_json(const ExperimentConfig& config, const RunResult& result) {
    std::map<std::string, std::map<double, std::vector<double>>> cells;
    std::map<std::string, std::pair<std::string, int>> meta;
    for (const auto& row : result.rows) {
        cells[row.method][row.alpha].push_back(row.mse);
        meta[row.method] = {row.gamma_label, row.worst_case_flag};
    }

    Json methods = Json::object();
    for (const auto& name : config.methods) {
        if (!cells.count(name)) continue;
        Json curve{{"gamma_or_adaptive", meta[name].first},
                   {"worst_case", meta[name].second == 1},
                   {"alpha", Json::array()},
                   {"mean", Json::array()},
                   {"median", Json::array()},
                   {"ci_low", Json::array()},
                   {"ci_high", Json::array()},
                   {"failures", Json::array()}};
        std::size_t cell = 0;
        for (const auto& [alpha, values] : cells[name]) {
            std::vector<double> finite;
            for (double v : values) {
                if (std::isfinite(v)) finite.push_back(v);
            }
            double mean = std::nan("");
            double median = std::nan("");
            if (!finite.empty()) {
                mean = 0.0;
                for (double v : finite) mean += v;
                mean /= static_cast<double>(finite.size());
                std::vector<double> sorted = finite;
                std::sort(sorted.begin(), sorted.end());
                const std::size_t mid = sorted.size() / 2;
                median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
            }
            const Interval ci = bootstrap_mean_ci(finite, derive_seed(config.seed, 0xB007 + cell++));
            const auto num = [](double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); };
            curve["alpha"].push_back(alpha);
            curve["mean"].push_back(num(mean));
            curve["median"].push_back(num(median));
            curve["ci_low"].push_back(num(ci.low));
            curve["ci_high"].push_back(num(ci.high));
            curve["failures"].push_back(values.size() - finite.size());
        }
        methods[name] = curve;
    }

    Json errors = Json::array();
    for (const auto& e : result.errors) {
        errors.push_back({{"method", e.method}, {"alpha", e.alpha}, {"repetition", e.repetition}, {"message", e.message}});
    }
    Json j{{"scenario", std::string(to_string(config.scenario))},
           {"repetitions", is_population_scenario(config) ? std::size_t{1} : config.repetitions},
           {"alpha_grid", config.alpha_grid},
           {"methods", methods},
           {"errors", errors}};
    if (!result.oracle_gamma_median.empty()) j["oracle_gamma_median"] = result.oracle_gamma_median;
    return j;
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) bad("cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        bad("invalid JSON in '" + path + "': " + e.what());
    }
}

void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp" + std::to_string(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) bad("cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) bad("failed writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        bad("cannot rename into '" + path + "'");
    }
}

std::size_t CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) bad("CSV has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(std::istream& in) {
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_line(line);
        if (table.header.empty()) {
            std::set<std::string> seen;
            for (const auto& h : cells) {
                if (h.empty()) bad("CSV header has an empty column name");
                if (!seen.insert(h).second) bad("CSV header repeats column '" + h + "'");
            }
            table.header = std::move(cells);
            continue;
        }
        if (cells.size() != table.header.size()) {
            bad("CSV line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) + " cells, expected " +
                std::to_string(table.header.size()));
        }
        for (const auto& c : cells) {
            if (c.empty() || c == "NA" || c == "NaN" || c == "nan") {
                bad("CSV line " + std::to_string(line_no) + " has a missing value");
            }
        }
        table.rows.push_back(std::move(cells));
    }
    if (table.header.empty()) bad("CSV is empty");
    return table;
}

CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) bad("cannot open '" + path + "'");
    return read_csv(in);
}

Matrix numeric_matrix(const CsvTable& table, const std::vector<std::size_t>& columns) {
    Matrix m(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        for (std::size_t k = 0; k < columns.size(); ++k) {
            const auto& cell = table.rows[i][columns[k]];
            const auto v = parse_double(cell);
            if (!v || !std::isfinite(*v)) {
                bad("CSV row " + std::to_string(i + 1) + " column '" + table.header[columns[k]] +
                    "' is not a finite number: '" + cell + "'");
            }
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = *v;
        }
    }
    return m;
}

EnvironmentData split_environments(const CsvTable& table, const std::string& env_column,
                                   const std::string& response_column, const std::string& reference) {
    const std::size_t env_col = table.column(env_column);
    const std::size_t y_col = table.column(response_column);
    if (env_col == y_col) bad("environment and response columns coincide");

    EnvironmentData data;
    std::vector<std::size_t> columns;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (c != env_col && c != y_col) {
            columns.push_back(c);
            data.covariates.push_back(table.header[c]);
        }
    }
    if (columns.empty()) bad("CSV has no covariate columns");
    columns.push_back(y_col);

    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < table.rows.size(); ++i) groups[table.rows[i][env_col]].push_back(i);
    if (groups.empty()) bad("CSV has no data rows");

    std::vector<std::string> labels;
    for (const auto& [label, rows] : groups) labels.push_back(label);
    const bool numeric = std::all_of(labels.begin(), labels.end(), [](const std::string& l) {
        const auto v = parse_double(l);
        return v && std::isfinite(*v);
    });
    if (numeric) {
        std::stable_sort(labels.begin(), labels.end(),
                         [](const std::string& a, const std::string& b) { return *parse_double(a) < *parse_double(b); });
    }
    if (!reference.empty()) {
        const auto it = std::find(labels.begin(), labels.end(), reference);
        if (it == labels.end()) bad("reference environment '" + reference + "' does not occur in the CSV");
        std::rotate(labels.begin(), it, it + 1);
    }

    const Matrix all = numeric_matrix(table, columns);
    for (const auto& label : labels) {
        const auto& rows = groups[label];
        Matrix m(static_cast<Eigen::Index>(rows.size()), all.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            m.row(static_cast<Eigen::Index>(i)) = all.row(static_cast<Eigen::Index>(rows[i]));
        }
        data.samples.push_back(std::move(m));
    }
    data.labels = std::move(labels);
    return data;
}

std::string samples_csv(const std::vector<Matrix>& samples) {
    std::string out = "env";
    const Eigen::Index d = samples.empty() ? 0 : samples.front().cols();
    for (Eigen::Index j = 0; j + 1 < d; ++j) out += ",x" + std::to_string(j + 1);
    out += ",y\n";
    for (std::size_t e = 0; e < samples.size(); ++e) {
        const std::string label = std::to_string(e);
        for (Eigen::Index i = 0; i < samples[e].rows(); ++i) {
            out += label;
            for (Eigen::Index j = 0; j < d; ++j) {
                out += ',';
                out += format_double(samples[e](i, j));
            }
            out += '\n';
        }
    }
    return out;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
    std::string out = "scenario,method,gamma_or_adaptive,alpha,repetition,mse,worst_case_flag\n";
    for (const auto& r : rows) {
        out += r.scenario + ',' + r.method + ',' + r.gamma_label + ',' + format_double(r.alpha) + ',' +
               std::to_string(r.repetition) + ',' + format_double(r.mse) + ',' + std::to_string(r.worst_case_flag) +
               '\n';
    }
    return out;
}

}  // namespace drig::io
