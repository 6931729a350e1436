#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <map>

#include "drig/experiments.hpp"
#include "oracles.hpp"

using namespace drig;

namespace {

bool is_acyclic(const Matrix& b) {
    // Nilpotent adjacency <=> no directed cycle.
    Matrix a = (b.array() != 0.0).cast<double>().matrix();
    Matrix power = a;
    for (Eigen::Index k = 0; k < a.rows(); ++k) power = power * a;
    return power.cwiseAbs().maxCoeff() == 0.0;
}

std::map<std::pair<std::string, double>, double> by_method_alpha(const RunResult& r) {
    std::map<std::pair<std::string, double>, double> out;
    for (const auto& row : r.rows) out[{row.method, row.alpha}] = row.mse;
    return out;
}

// Exact test MSE of drig(gamma) in example 1 under a test law of strength alpha.
double example1_test_mse(double gamma, double alpha) {
    const double c = 0.5 / (1.0 + 0.625 * gamma);
    return 1.0 - c + c * c * (1.0 + 1.25 * alpha);
}

}  // namespace

TEST_CASE("random instances") {
    RandomInstanceSpec rs;
    const RandomInstance a = random_instance(rs, 1);
    const RandomInstance b = random_instance(rs, 1);
    CHECK(a.spec.B == b.spec.B);
    CHECK(a.spec.noise_cov == b.spec.noise_cov);
    CHECK(a.test_laws.size() == 20);
    CHECK(a.spec.environments.size() == 4);
    CHECK(validate(a.spec).empty());
    CHECK(is_acyclic(a.spec.B));
    CHECK(a.spec.B.diagonal().cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.spec.environments[0].mu.norm() == 0.0);
    CHECK(a.spec.environments[0].cov.norm() == 0.0);
    for (std::size_t e = 1; e < 4; ++e) {
        const auto& env = a.spec.environments[e];
        CHECK(env.mu(10) == 0.0);
        CHECK(env.cov.row(10).norm() == 0.0);
        CHECK(env.mu.norm() == doctest::Approx(std::sqrt(10.0)));
        CHECK(env.weight == doctest::Approx(0.25));
    }
    for (const auto& law : a.test_laws) {
        CHECK(law.mu(10) == 0.0);
        CHECK(law.cov.col(10).norm() == 0.0);
    }
    CHECK_FALSE(random_instance(rs, 2).spec.B == a.spec.B);

    int full_rank = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const MomentSet m = population_moments(random_instance(rs, seed).spec);
        const Matrix dx = heterogeneity(m).x();
        Eigen::SelfAdjointEigenSolver<Matrix> eig(dx, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() > 1e-10 * eig.eigenvalues().maxCoeff()) ++full_rank;
    }
    CHECK(full_rank >= 95);
}

TEST_CASE("oracle gamma selection") {
    const ScmSpec spec = example1_spec();
    const MomentSet train = population_moments(spec);
    const auto test_at = [&](double alpha) {
        const TestLaw law = TestLaw{spec.environments[1].mu, spec.environments[1].cov}.scaled(alpha);
        return test_moments(spec, law.mu, law.cov);
    };
    const std::vector<double> grid{8, 0.5, 1, 2, 4};
    const OracleChoice at2 = oracle_gamma(train, test_at(2.0), grid, Method::drig);
    CHECK(at2.gamma == 4.0);
    CHECK(at2.index == 3);
    CHECK(at2.mse == doctest::Approx(example1_test_mse(4.0, 2.0)).epsilon(1e-12));
    CHECK(oracle_gamma(train, test_at(1e-4), grid, Method::drig).gamma == 0.5);

    const std::vector<double> dense{0, 0.5, 1, 2, 5, 10, 20, 50, 100};
    for (double alpha : {0.1, 1.0, 3.0, 10.0, 40.0}) {
        const EnvironmentMoments test = test_at(alpha);
        const OracleChoice best = oracle_gamma(train, test, dense, Method::drig);
        for (double g : dense) CHECK(best.mse <= evaluate_mse(drig::drig(train, g).b, test) + 1e-15);
        for (double g : dense) CHECK(best.mse <= example1_test_mse(g, alpha) + 1e-12);
        CHECK(oracle_gamma(train, test, dense, Method::anchor).mse <= evaluate_mse(anchor(train, 5).b, test) + 1e-15);
    }
    CHECK_THROWS_AS(oracle_gamma(train, test_at(1), std::vector<double>{}, Method::drig), Error);
    CHECK_THROWS_AS(oracle_gamma(train, test_at(1), grid, Method::group_dro), Error);
}

TEST_CASE("example 1 sweep: crossover and the invariant causal risk") {
    ExperimentConfig cfg;
    cfg.scenario = Scenario::example1;
    cfg.alpha_grid = {0.1, 1.0, 10.0};
    cfg.methods = {"drig(5)", "ols_ref", "causal", "drig(oracle)"};
    const RunResult r = run(cfg);
    CHECK(r.errors.empty());
    CHECK(r.rows.size() == 12);
    const auto mse = by_method_alpha(r);
    CHECK_FALSE(mse.at({"drig(5)", 0.1}) < mse.at({"ols_ref", 0.1}));
    CHECK(mse.at({"drig(5)", 1.0}) < mse.at({"ols_ref", 1.0}));
    CHECK(mse.at({"drig(5)", 10.0}) < mse.at({"ols_ref", 10.0}));
    CHECK(mse.at({"drig(5)", 1.0}) == doctest::Approx(example1_test_mse(5.0, 1.0)).epsilon(1e-12));
    for (double alpha : cfg.alpha_grid) {
        CHECK(mse.at({"causal", alpha}) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(mse.at({"drig(oracle)", alpha}) <= mse.at({"drig(5)", alpha}) + 1e-15);
    }
    for (const auto& row : r.rows) {
        CHECK(row.worst_case_flag == 0);
        CHECK(row.scenario == "example1");
    }
    REQUIRE(r.oracle_gamma_median.size() == 1);
    CHECK(r.oracle_gamma_median[0].size() == 3);
}

TEST_CASE("method parsing") {
    CHECK(MethodSpec::parse("drig(5)").gamma == 5.0);
    CHECK(MethodSpec::parse("drig(5)").gamma_label() == "5");
    CHECK(MethodSpec::parse("drig(0.5)").gamma_label() == "0.5");
    CHECK(MethodSpec::parse("anchor(oracle)").kind == MethodSpec::Kind::oracle);
    CHECK(MethodSpec::parse("causal").gamma_label() == "inf");
    CHECK(MethodSpec::parse("drig_a_adaptive").gamma_label() == "adaptive");
    CHECK(MethodSpec::parse("test_ols").gamma_label() == "test");
    for (const char* bad : {"drig", "drig(-1)", "drig(x)", "ols_ref(1)", "drig_a(oracle)", "lasso", "causal(1)"}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(MethodSpec::parse(bad), Error);
    }
    for (auto s : {Scenario::example1, Scenario::example2, Scenario::example3, Scenario::example4,
                   Scenario::appendix_g_covariate, Scenario::appendix_g_all, Scenario::custom}) {
        CHECK(scenario_from_string(to_string(s)) == s);
    }
}

TEST_CASE("config validation") {
    ExperimentConfig cfg;
    cfg.alpha_grid = {1.0};
    cfg.methods = {"drig(1)"};
    CHECK_NOTHROW(cfg.validate());
    auto broken = cfg;
    broken.methods.clear();
    CHECK_THROWS_AS(broken.validate(), Error);
    broken = cfg;
    broken.alpha_grid = {2.0, 1.0};
    CHECK_THROWS_AS(broken.validate(), Error);
    broken = cfg;
    broken.alpha_grid = {0.0};
    CHECK_THROWS_AS(broken.validate(), Error);
    broken = cfg;
    broken.repetitions = 0;
    CHECK_THROWS_AS(broken.validate(), Error);
    broken = cfg;
    broken.scenario = Scenario::custom;
    CHECK_THROWS_AS(broken.validate(), Error);
    broken.spec = example1_spec();
    CHECK_THROWS_AS(broken.validate(), Error);
    broken.test_laws = {TestLaw{Vector::Zero(3), Matrix::Zero(3, 3)}};
    CHECK_THROWS_AS(broken.validate(), Error);
    broken.test_laws = {TestLaw{Vector::Zero(2), Matrix::Identity(2, 2)}};
    CHECK_NOTHROW(broken.validate());
}

TEST_CASE("sampled sweeps are bit-identical across thread counts") {
    ExperimentConfig cfg;
    cfg.scenario = Scenario::appendix_g_covariate;
    cfg.alpha_grid = {1.0, 10.0};
    cfg.methods = {"drig(5)", "drig(oracle)", "anchor(5)", "drig_a_adaptive", "test_ols", "ols_pooled"};
    cfg.repetitions = 4;
    cfg.seed = 99;
    cfg.p = 4;
    cfg.n_train = 300;
    cfg.n_test_envs = 3;

    setenv("DRIG_THREADS", "1", 1);
    const RunResult serial = run(cfg);
    setenv("DRIG_THREADS", "4", 1);
    const RunResult parallel = run(cfg);
    unsetenv("DRIG_THREADS");

    REQUIRE(serial.rows.size() == parallel.rows.size());
    CHECK(serial.rows.size() == 4 * 2 * 6);
    for (std::size_t i = 0; i < serial.rows.size(); ++i) {
        const auto& a = serial.rows[i];
        const auto& b = parallel.rows[i];
        CHECK(a.method == b.method);
        CHECK(a.repetition == b.repetition);
        CHECK(std::memcmp(&a.mse, &b.mse, sizeof(double)) == 0);
        CHECK(a.worst_case_flag == 1);
    }
    CHECK(serial.errors.size() == parallel.errors.size());

    cfg.seed = 100;
    const RunResult other = run(cfg);
    bool differs = false;
    for (std::size_t i = 0; i < other.rows.size(); ++i) differs |= other.rows[i].mse != serial.rows[i].mse;
    CHECK(differs);
}

TEST_CASE("worker thread count honours the environment") {
    setenv("DRIG_THREADS", "3", 1);
    CHECK(worker_threads() == 3);
    setenv("DRIG_THREADS", "zero", 1);
    CHECK(worker_threads() >= 1);
    unsetenv("DRIG_THREADS");
}

TEST_CASE("bootstrap confidence interval") {
    std::vector<double> values;
    for (int i = 0; i < 200; ++i) values.push_back(static_cast<double>(i % 10));
    const Interval ci = bootstrap_mean_ci(values, 5);
    CHECK(ci.low < 4.5);
    CHECK(ci.high > 4.5);
    CHECK(ci.high - ci.low < 1.5);
    const Interval again = bootstrap_mean_ci(values, 5);
    CHECK(again.low == ci.low);
    CHECK(again.high == ci.high);

    values.push_back(std::nan(""));
    CHECK(std::isfinite(bootstrap_mean_ci(values, 5).low));
    CHECK(std::isnan(bootstrap_mean_ci(std::vector<double>{}, 5).low));
    CHECK(bootstrap_mean_ci(std::vector<double>{3.0}, 5).high == 3.0);
}

TEST_CASE("moment-matched sampling") {
    const MomentSet m = population_moments(example1_spec());
    const Matrix z = sample_from_moments(m[1], 200000, 4);
    const Vector mean = z.colwise().mean().transpose();
    const Matrix g = z.transpose() * z / static_cast<double>(z.rows());
    CHECK((mean - m[1].mean).cwiseAbs().maxCoeff() < 2e-2);
    CHECK((g - m[1].gram).cwiseAbs().maxCoeff() < 0.1);
    CHECK(sample_from_moments(m[1], 10, 4) == sample_from_moments(m[1], 10, 4));
}

TEST_CASE("fixed gamma beats pooled OLS, which beats reference OLS, on most random instances") {
    ExperimentConfig cfg;
    cfg.scenario = Scenario::appendix_g_covariate;
    cfg.alpha_grid = {10.0, 50.0, 100.0};
    cfg.methods = {"drig(10)", "ols_pooled", "ols_ref"};
    cfg.repetitions = 50;
    cfg.seed = 5;
    const RunResult r = run(cfg);
    CHECK(r.errors.empty());
    std::map<std::pair<std::size_t, double>, std::map<std::string, double>> cells;
    for (const auto& row : r.rows) cells[{row.repetition, row.alpha}][row.method] = row.mse;
    for (double alpha : cfg.alpha_grid) {
        int ordered = 0;
        for (std::size_t rep = 0; rep < 50; ++rep) {
            const auto& m = cells.at({rep, alpha});
            ordered += m.at("drig(10)") <= m.at("ols_pooled") && m.at("ols_pooled") <= m.at("ols_ref");
        }
        CAPTURE(alpha);
        CHECK(ordered > 25);
    }
}
