#pragma once

// Synthetic replication studies: scenario construction, random SCM instances,
// oracle gamma selection and the long-format result table.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drig/adaptation.hpp"
#include "drig/estimators.hpp"
#include "drig/scm.hpp"

namespace drig {

/// A test intervention law v ~ N(mu, cov); strength alpha scales it to
/// N(sqrt(alpha) mu, alpha cov).
struct TestLaw {
    Vector mu;
    Matrix cov;

    TestLaw scaled(double alpha) const { return {std::sqrt(alpha) * mu, alpha * cov}; }
};

struct RandomInstanceSpec {
    int p = 10;
    std::size_t n_train_envs = 3;  ///< interventional environments besides the reference
    std::size_t n_test_envs = 20;
    double edge_prob = 0.3;
    bool intervene_y = false;
    double mean_factor = 3.1622776601683795;  ///< sqrt(10)
    double cov_factor = 10.0;
};

struct RandomInstance {
    ScmSpec spec;
    std::vector<TestLaw> test_laws;
};

/// Random DAG over a random topological order, noise covariance S S^T with
/// Unif[0,1] entries, unit-norm intervention means and covariances scaled by
/// the training factors, and test laws at unit strength.
RandomInstance random_instance(const RandomInstanceSpec& spec, std::uint64_t seed);

/// X = eps_x (+ delta_x), Y = 2 X + eps_y with corr(eps) = 0.5 and
/// delta_x ~ N(0.5, 1) in environment 1.
ScmSpec example1_spec();

/// As example1_spec but delta^1 ~ N((0.5, 0.1), [[1, 0.1], [0.1, 0.05]]).
ScmSpec example2_spec();

/// Draws n rows from N(mean, gram - mean mean^T) of one environment.
Matrix sample_from_moments(const EnvironmentMoments& env, std::size_t n, std::uint64_t seed);

struct OracleChoice {
    double gamma = 0.0;
    double mse = 0.0;
    std::size_t index = 0;  ///< position in the ascending grid
};

/// Grid gamma minimizing the exact test MSE of drig or anchor; ties go to the
/// smaller gamma and grid points whose fit fails are skipped.
OracleChoice oracle_gamma(const MomentSet& training, const EnvironmentMoments& test,
                          std::span<const double> gamma_grid, Method method);

/// One method column of a sweep, parsed from "drig(5)", "anchor(oracle)",
/// "drig_a(10)", "causal", "ols_ref", "ols_pooled", "drig_inf", "group_dro",
/// "drig_a_adaptive" or "test_ols".
struct MethodSpec {
    enum class Kind { estimator, oracle, causal };
    std::string name;
    Method method = Method::drig;
    Kind kind = Kind::estimator;
    std::optional<double> gamma;

    static MethodSpec parse(const std::string& text);
    std::string gamma_label() const;
};

enum class Scenario { example1, example2, example3, example4, appendix_g_covariate, appendix_g_all, custom };

std::string_view to_string(Scenario s);
std::optional<Scenario> scenario_from_string(std::string_view tag);

struct ExperimentConfig {
    Scenario scenario = Scenario::example1;
    std::vector<double> alpha_grid;
    std::vector<double> gamma_grid{0, 0.5, 1, 2, 5, 10, 20, 50, 100};
    std::vector<std::string> methods;
    std::size_t repetitions = 1;
    std::uint64_t seed = 0;
    WeightMode weights = WeightMode::uniform;

    std::optional<int> p;
    std::optional<std::size_t> n_train;     ///< per environment, sampled scenarios
    std::optional<std::size_t> n_labeled;   ///< labeled test sample size
    std::optional<std::size_t> n_train_envs;
    std::optional<std::size_t> n_test_envs;
    std::optional<double> edge_prob;
    std::optional<ScmSpec> spec;            ///< custom scenario
    std::vector<TestLaw> test_laws;         ///< custom scenario

    /// Throws InvalidInput when the config cannot be run.
    void validate() const;
};

struct ResultRow {
    std::string scenario;
    std::string method;
    std::string gamma_label;
    double alpha = 0.0;
    std::size_t repetition = 0;
    double mse = 0.0;
    int worst_case_flag = 0;
};

struct RunError {
    std::string method;
    double alpha = 0.0;
    std::size_t repetition = 0;
    std::string message;
};

struct RunResult {
    std::vector<ResultRow> rows;
    std::vector<RunError> errors;
    /// Median oracle gamma over test environments, per repetition and alpha
    /// (filled when a drig(oracle) method is present).
    std::vector<std::vector<double>> oracle_gamma_median;
};

/// True for scenarios evaluated on exact training moments with one repetition.
bool is_population_scenario(const ExperimentConfig& config);

RunResult run(const ExperimentConfig& config);

struct Interval {
    double low = 0.0;
    double high = 0.0;
};

/// Percentile bootstrap interval for the mean.
Interval bootstrap_mean_ci(std::span<const double> values, std::uint64_t seed,
                           std::size_t resamples = 1000, double level = 0.95);

/// Number of worker threads: DRIG_THREADS when set and positive, otherwise the
/// hardware concurrency.
std::size_t worker_threads();

}  // namespace drig
