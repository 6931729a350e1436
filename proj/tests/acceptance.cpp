// One PASS/FAIL line per acceptance criterion. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "drig/adaptation.hpp"
#include "drig/experiments.hpp"
#include "drig/random.hpp"
#include "drig/robustness.hpp"
#include "oracles.hpp"

using namespace drig;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

std::string fmt(const char* f, double x) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

oracle::SpecOptions options_for(std::mt19937_64& rng, int max_p) {
    oracle::SpecOptions o;
    o.p = std::uniform_int_distribution<int>(1, max_p)(rng);
    o.interventional_envs = std::uniform_int_distribution<int>(1, 4)(rng);
    return o;
}

// 1
Verdict example1_closed_forms() {
    const MomentSet m = population_moments(example1_spec());
    const double g0x = 1, g0xy = 2.5, g0y = 7, g1x = 2.25, g1xy = 5, g1y = 12;
    const auto l0 = [&](double b) { return g0y - 2 * b * g0xy + b * b * g0x; };
    const auto l1 = [&](double b) { return g1y - 2 * b * g1xy + b * b * g1x; };
    const auto drig_loss = [&](double g) {
        return [&, g](double b) { return l0(b) + g * 0.5 * (l1(b) - l0(b)); };
    };
    const auto anchor_loss = [&](double b) {
        const double resid = 1.0 - 0.5 * b;
        return 0.5 * (l0(b) + l1(b)) + 4.0 * 0.5 * resid * resid;
    };
    struct Row {
        const char* name;
        double got;
        double expected;
        double independent;
    };
    const std::vector<Row> rows{
        {"drig(0)", drig::drig(m, 0).b(0), 2.5, oracle::argmin_1d(drig_loss(0), 0, 4, 1e-3)},
        {"drig(1)", drig::drig(m, 1).b(0), 2.307692307692308, oracle::argmin_1d(drig_loss(1), 0, 4, 1e-3)},
        {"drig(5)", drig::drig(m, 5).b(0), 2.121212121212121, oracle::argmin_1d(drig_loss(5), 0, 4, 1e-3)},
        // gamma -> infinity: the gradient-invariance root of the loss difference.
        {"drig_inf", drig_infinity(m).b(0), 2.0, (g1xy - g0xy) / (g1x - g0x)},
        {"anchor(5)", anchor(m, 5).b(0), 2.235294117647059, oracle::argmin_1d(anchor_loss, 0, 4, 1e-3)},
        {"causal_dantzig", causal_dantzig(m).b(0), 2.0, (g1xy - g0xy) / (g1x - g0x)},
    };
    double worst = 0.0;
    for (const auto& r : rows) {
        worst = std::max(worst, std::abs(r.got - r.expected));
        worst = std::max(worst, std::abs(r.independent - r.expected) > 1e-7 ? 1.0 : 0.0);
    }
    return {worst < 1e-9, "max abs error " + fmt("%.2e", worst)};
}

// 2 and 6
Verdict duality(bool matrix_penalty) {
    std::mt19937_64 rng(matrix_penalty ? 6 : 2);
    std::uniform_real_distribution<double> gamma_dist(0.0, 10.0);
    double worst_identity = 0.0;
    double worst_gap = std::numeric_limits<double>::infinity();
    for (int t = 0; t < 50; ++t) {
        const ScmSpec spec = oracle::random_spec(rng, options_for(rng, 5));
        const PerturbationClass cls =
            matrix_penalty ? build_class(spec, GammaMatrix{oracle::random_psd(rng, spec.p, gamma_dist(rng)),
                                                           gamma_dist(rng)})
                           : build_class(spec, ClassKind::drig, gamma_dist(rng));
        const DualityReport r = verify_duality(spec, cls, default_probes(spec, static_cast<std::uint64_t>(t)));
        worst_identity = std::max(worst_identity, r.max_identity_violation);
        worst_gap = std::min(worst_gap, r.min_gap_vs_drig);
    }
    return {worst_identity < 1e-8 && worst_gap >= -1e-8,
            "max relative identity violation " + fmt("%.2e", worst_identity) + ", min probe gap " +
                fmt("%.2e", worst_gap)};
}

// 3
Verdict anchor_equivalence() {
    std::mt19937_64 rng(3);
    double loss_gap = 0.0;
    double coef_gap = 0.0;
    std::normal_distribution<double> n(0.0, 1.0);
    for (int t = 0; t < 20; ++t) {
        oracle::SpecOptions o = options_for(rng, 5);
        o.shared_covariance = true;
        const ScmSpec spec = oracle::random_spec(rng, o);
        const MomentSet m = population_moments(spec);
        const double gamma = std::uniform_real_distribution<double>(0.0, 10.0)(rng);
        for (int k = 0; k < 50; ++k) {
            Vector b(spec.p);
            for (int i = 0; i < spec.p; ++i) b(i) = 2.0 * n(rng);
            loss_gap = std::max(loss_gap, rel(anchor_objective(b, m, gamma), drig_objective(b, m, gamma)));
        }
        coef_gap = std::max(coef_gap, (anchor(m, gamma).b - drig::drig(m, gamma).b).cwiseAbs().maxCoeff());
    }
    return {loss_gap < 1e-10 && coef_gap < 1e-9,
            "max loss gap " + fmt("%.2e", loss_gap) + ", max coefficient gap " + fmt("%.2e", coef_gap)};
}

// 4
Verdict causal_identification() {
    std::mt19937_64 rng(4);
    double coef = 0.0;
    double objective = 0.0;
    int accepted = 0;
    int drawn = 0;
    while (accepted < 50 && drawn < 1000) {
        ++drawn;
        oracle::SpecOptions o = options_for(rng, 5);
        o.intervene_y = false;
        o.interventional_envs = std::max(o.interventional_envs, 2);
        const ScmSpec spec = oracle::random_spec(rng, o);
        const Matrix l = intervention_shift(spec);
        if (!(linalg::min_eigenvalue(l.topLeftCorner(spec.p, spec.p)) > 1e-6)) continue;
        ++accepted;
        const FitResult fit = drig_infinity(population_moments(spec));
        coef = std::max(coef, (fit.b - spec.causal_parameter()).cwiseAbs().maxCoeff());
        objective = std::max(objective, rel(fit.objective, spec.noise_cov(spec.p, spec.p)));
    }
    return {accepted == 50 && coef < 1e-8 && objective < 1e-8,
            std::to_string(accepted) + " instances, max |b - b*| " + fmt("%.2e", coef) + ", objective error " +
                fmt("%.2e", objective)};
}

// 5
Verdict bias_formula() {
    std::mt19937_64 rng(5);
    double worst = 0.0;
    int accepted = 0;
    int drawn = 0;
    while (accepted < 50 && drawn < 1000) {
        ++drawn;
        oracle::SpecOptions o = options_for(rng, 5);
        o.intervene_y = true;
        const ScmSpec spec = oracle::random_spec(rng, o);
        const Matrix c = oracle::propagation(spec.B);
        Matrix l = Matrix::Zero(spec.dim(), spec.dim());
        for (const auto& e : spec.environments) {
            l += e.weight * (e.cov - spec.environments[0].cov + e.mu * e.mu.transpose());
        }
        const Eigen::Index p = spec.p;
        const Matrix clc = (c * l * c.transpose()).topLeftCorner(p, p);
        if (!(linalg::rcond(clc) > 1e-8)) continue;
        ++accepted;
        const Vector inner = c.topLeftCorner(p, p) * l.col(p).head(p) + c.col(p).head(p) * l(p, p);
        const Vector expected = spec.causal_parameter() + clc.fullPivLu().solve(inner);
        const Vector got = drig_infinity(population_moments(spec)).b;
        worst = std::max(worst, (got - expected).cwiseAbs().maxCoeff() / std::max(1.0, expected.cwiseAbs().maxCoeff()));
    }
    return {accepted == 50 && worst < 1e-8, std::to_string(accepted) + " instances, max error " + fmt("%.2e", worst)};
}

// 7
Verdict gamma_plug_back() {
    std::mt19937_64 rng(7);
    double worst = 0.0;
    int failures = 0;
    for (int t = 0; t < 50; ++t) {
        RandomInstanceSpec rs;
        rs.p = std::uniform_int_distribution<int>(1, 10)(rng);
        rs.n_test_envs = 1;
        const RandomInstance inst = random_instance(rs, derive_seed(7, static_cast<std::uint64_t>(t)));
        const double alpha = std::uniform_real_distribution<double>(1.0, 100.0)(rng);
        const TestLaw law = inst.test_laws[0].scaled(alpha);
        const MomentSet m = population_moments(inst.spec);
        const Matrix sigma = test_moments(inst.spec, law.mu, law.cov).gram_x();
        try {
            const Matrix g = gamma_star_x(sigma, m);
            const Matrix rebuilt = m[0].gram_x() + g * heterogeneity(m).x() * g;
            worst = std::max(worst, (rebuilt - sigma).norm() / sigma.norm());
        } catch (const Error&) {
            ++failures;
        }
    }
    return {failures == 0 && worst < 1e-8,
            "max relative residual " + fmt("%.2e", worst) + ", failures " + std::to_string(failures)};
}

// 8
Verdict adaptive_dominance() {
    const double alpha = 10.0;
    const std::uint64_t seed = 8;
    RandomInstanceSpec rs;
    rs.p = 20;
    rs.n_train_envs = 1;
    rs.n_test_envs = 1;
    rs.mean_factor = 1.0;
    rs.cov_factor = 1.0;
    const RandomInstance inst = random_instance(rs, seed);
    const MomentSet train = population_moments(inst.spec);
    const EnvironmentMoments test =
        test_moments(inst.spec, Vector::Zero(21), alpha * inst.test_laws[0].cov);
    // Gaussian, zero-mean test law: Var(X Y) = Sigma_x Sigma_yy + Sigma_xy Sigma_xy^T.
    const Vector shift = test.gram_xy() - train[0].gram_xy();
    const Matrix var_xy = test.gram_x() * test.gram_y() + test.gram_xy() * test.gram_xy().transpose();
    const double condition = linalg::min_eigenvalue(var_xy - shift * shift.transpose());
    if (!(condition > 0.0)) return {false, "instance violates the variance condition: " + fmt("%.3e", condition)};

    ExperimentConfig cfg;
    cfg.scenario = Scenario::example4;
    cfg.alpha_grid = {alpha};
    cfg.methods = {"drig_a_adaptive", "test_ols"};
    cfg.repetitions = 200;
    cfg.seed = seed;
    cfg.n_labeled = 50;
    const RunResult r = run(cfg);
    std::map<std::size_t, std::pair<double, double>> paired;
    for (const auto& row : r.rows) {
        auto& slot = paired[row.repetition];
        (row.method == "test_ols" ? slot.second : slot.first) = row.mse;
    }
    std::vector<double> diffs;
    double mean_a = 0.0, mean_t = 0.0;
    for (const auto& [rep, pr] : paired) {
        diffs.push_back(pr.second - pr.first);
        mean_a += pr.first;
        mean_t += pr.second;
    }
    const double n = static_cast<double>(diffs.size());
    double mean = 0.0;
    for (double d : diffs) mean += d;
    mean /= n;
    double var = 0.0;
    for (double d : diffs) var += (d - mean) * (d - mean);
    var /= n - 1.0;
    const double t = mean / std::sqrt(var / n);
    const boost::math::students_t dist(n - 1.0);
    const double p_value = boost::math::cdf(boost::math::complement(dist, t));
    return {r.errors.empty() && diffs.size() == 200 && std::isfinite(p_value) && p_value < 0.01 && mean > 0.0,
            "mean test MSE adaptive " + fmt("%.4f", mean_a / n) + " vs test OLS " + fmt("%.4f", mean_t / n) +
                ", one-sided p " + fmt("%.2e", p_value) + ", errors " + std::to_string(r.errors.size())};
}

// 9
Verdict finite_sample_rate() {
    RandomInstanceSpec rs;
    rs.n_test_envs = 0;
    const RandomInstance inst = random_instance(rs, 9);
    const MomentSet pop = population_moments(inst.spec);
    std::string detail;
    bool pass = true;
    for (double gamma : {1.0, 5.0}) {
        const Vector target = drig::drig(pop, gamma).b;
        std::vector<double> small, large;
        for (std::uint64_t s = 0; s < 50; ++s) {
            for (std::size_t n : {std::size_t{2000}, std::size_t{8000}}) {
                std::vector<Matrix> samples;
                for (std::size_t e = 0; e < inst.spec.environments.size(); ++e) {
                    samples.push_back(sample(inst.spec, e, n, derive_seed(derive_seed(s, n), e)));
                }
                const double err = (drig::drig(empirical_moments(samples, WeightMode::uniform), gamma).b - target).norm();
                (n == 2000 ? small : large).push_back(err);
            }
        }
        const double ratio = median(small) / median(large);
        pass = pass && ratio >= 1.5 && ratio <= 3.0;
        detail += (detail.empty() ? "" : ", ") + std::string("gamma ") + fmt("%g", gamma) + " ratio " +
                  fmt("%.3f", ratio);
    }
    return {pass, detail};
}

// 10
Verdict population_curves() {
    std::vector<double> alphas;
    for (double a = 0.5; a <= 10.0; a += 0.5) alphas.push_back(a);
    const auto sweep = [&](Scenario s) {
        ExperimentConfig cfg;
        cfg.scenario = s;
        cfg.alpha_grid = alphas;
        cfg.methods = {"causal", "drig(5)", "ols_ref"};
        std::map<std::string, std::vector<double>> curves;
        for (const auto& row : run(cfg).rows) curves[row.method].push_back(row.mse);
        return curves;
    };
    const auto ex1 = sweep(Scenario::example1);
    const auto ex2 = sweep(Scenario::example2);
    bool constant = true, increasing = true, below_ols = true, below_causal = true;
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        constant = constant && std::abs(ex1.at("causal")[i] - ex1.at("causal")[0]) < 1e-12;
        if (i > 0) increasing = increasing && ex2.at("causal")[i] > ex2.at("causal")[i - 1];
        if (alphas[i] >= 4.0) below_ols = below_ols && ex1.at("drig(5)")[i] < ex1.at("ols_ref")[i];
        if (alphas[i] <= 1.0) below_causal = below_causal && ex1.at("drig(5)")[i] < ex1.at("causal")[i];
    }
    const auto yn = [](bool b) { return b ? "yes" : "no"; };
    return {constant && increasing && below_ols && below_causal,
            std::string("causal constant (ex1) ") + yn(constant) + ", causal increasing (ex2) " + yn(increasing) +
                ", drig(5) < ols_ref for alpha >= 4 " + yn(below_ols) + ", drig(5) < causal for alpha <= 1 " +
                yn(below_causal)};
}

// 11
Verdict simulation_ordering() {
    ExperimentConfig cfg;
    cfg.scenario = Scenario::appendix_g_covariate;
    cfg.alpha_grid = {10, 20, 50, 100};
    cfg.methods = {"drig(oracle)", "drig(10)", "anchor(10)", "ols_pooled"};
    cfg.repetitions = 50;
    cfg.seed = 11;
    const RunResult r = run(cfg);
    std::map<std::size_t, std::map<double, std::map<std::string, double>>> by_rep;
    for (const auto& row : r.rows) by_rep[row.repetition][row.alpha][row.method] = row.mse;
    int ordered = 0;
    for (const auto& [rep, per_alpha] : by_rep) {
        bool ok = true;
        for (const auto& [alpha, m] : per_alpha) {
            ok = ok && m.at("drig(oracle)") <= m.at("drig(10)") && m.at("drig(10)") <= m.at("anchor(10)") &&
                 m.at("anchor(10)") <= m.at("ols_pooled");
        }
        ordered += ok;
    }
    std::vector<double> grid = cfg.gamma_grid;
    std::sort(grid.begin(), grid.end());
    const auto index_of = [&](double g) {
        return static_cast<int>(std::lower_bound(grid.begin(), grid.end(), g - 1e-12) - grid.begin());
    };
    int monotone = 0;
    for (const auto& medians : r.oracle_gamma_median) {
        bool ok = true;
        for (std::size_t i = 1; i < medians.size(); ++i) {
            // Medians of an even count may fall between grid points; allow one grid step of slack.
            ok = ok && index_of(medians[i]) >= index_of(medians[i - 1]) - 1;
        }
        monotone += ok;
    }
    const int reps = static_cast<int>(by_rep.size());
    return {reps == 50 && ordered >= 35 && monotone >= 40 && r.errors.empty(),
            "ordering in " + std::to_string(ordered) + "/50, oracle monotone in " + std::to_string(monotone) +
                "/" + std::to_string(r.oracle_gamma_median.size()) + ", errors " + std::to_string(r.errors.size())};
}

// 12
Verdict group_dro_checks() {
    std::mt19937_64 rng(12);
    double value_gap = 0.0;
    for (int t = 0; t < 20; ++t) {
        oracle::SpecOptions o;
        o.p = 1;
        o.interventional_envs = std::uniform_int_distribution<int>(1, 4)(rng);
        const MomentSet m = population_moments(oracle::random_spec(rng, o));
        const auto worst = [&](double b) {
            double w = -1.0;
            for (const auto& e : m) w = std::max(w, oracle::mse(e.gram, Vector::Constant(1, b)));
            return w;
        };
        const FitResult fit = group_dro(m);
        double grid = std::numeric_limits<double>::infinity();
        for (double b = fit.b(0) - 10.0; b <= fit.b(0) + 10.0; b += 1e-4) grid = std::min(grid, worst(b));
        value_gap = std::max(value_gap, std::abs(fit.objective - grid));
    }
    double dominating_gap = 0.0;
    for (int t = 0; t < 20; ++t) {
        oracle::SpecOptions o;
        o.p = std::uniform_int_distribution<int>(1, 4)(rng);
        o.interventional_envs = 1;
        ScmSpec spec = oracle::random_spec(rng, o);
        InterventionLaw big = spec.environments[1];
        big.mu *= 1.5;
        big.cov = 2.0 * big.cov + oracle::random_psd(rng, spec.dim(), 0.5);
        for (auto& e : spec.environments) e.weight = 1.0 / 3.0;
        big.weight = 1.0 / 3.0;
        spec.environments.push_back(big);
        const MomentSet m = population_moments(spec);
        const Vector ols = m[2].gram_x().llt().solve(m[2].gram_xy());
        dominating_gap = std::max(dominating_gap, (group_dro(m).b - ols).cwiseAbs().maxCoeff());
    }
    return {value_gap < 1e-4 && dominating_gap < 1e-6,
            "max minimax value gap " + fmt("%.2e", value_gap) + ", max gap to dominating OLS " +
                fmt("%.2e", dominating_gap)};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double time_limit;  // seconds, 0 = none
        std::function<Verdict()> check;
    };
    const std::vector<Criterion> criteria{
        {1, "example 1 closed forms", 1.0, example1_closed_forms},
        {2, "worst-case duality", 30.0, [] { return duality(false); }},
        {3, "anchor equals drig under mean shifts", 0.0, anchor_equivalence},
        {4, "causal identification at infinite gamma", 0.0, causal_identification},
        {5, "bias formula at infinite gamma", 0.0, bias_formula},
        {6, "matrix-penalty duality", 0.0, [] { return duality(true); }},
        {7, "adaptive Gamma plug-back", 0.0, gamma_plug_back},
        {8, "adaptive estimate beats test OLS", 120.0, adaptive_dominance},
        {9, "finite-sample rate", 0.0, finite_sample_rate},
        {10, "population MSE curves", 0.0, population_curves},
        {11, "simulation ordering and oracle gamma", 0.0, simulation_ordering},
        {12, "group DRO minimax", 0.0, group_dro_checks},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.check();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.time_limit > 0.0 && secs > c.time_limit) {
            v.pass = false;
            v.detail += ", over time limit";
        }
        failures += !v.pass;
        std::printf("%s criterion %2d: %s (%s; %.2fs)\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(),
                    secs);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures;
}
