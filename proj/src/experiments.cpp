#include "drig/experiments.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <mutex>
#include <thread>

#include "drig/random.hpp"

namespace drig {

namespace {

constexpr std::array<std::pair<Scenario, std::string_view>, 7> kScenarioTags{{
    {Scenario::example1, "example1"},
    {Scenario::example2, "example2"},
    {Scenario::example3, "example3"},
    {Scenario::example4, "example4"},
    {Scenario::appendix_g_covariate, "appendix_g_covariate"},
    {Scenario::appendix_g_all, "appendix_g_all"},
    {Scenario::custom, "custom"},
}};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_gamma(double g) {
    std::string s = std::to_string(g);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

struct Prepared {
    ScmSpec spec;
    MomentSet training;
    std::function<std::vector<EnvironmentMoments>(double)> tests;
    Vector gamma_shape;         ///< diagonal of the drig_a penalty at unit strength
    bool sampled_labels = false;
    bool sampled_training = false;
};

EnvironmentMoments moments_of(const ScmSpec& spec, const TestLaw& law) {
    return test_moments(spec, law.mu, law.cov);
}

Prepared prepare(const ExperimentConfig& cfg, std::size_t rep) {
    Prepared out;
    switch (cfg.scenario) {
        case Scenario::example1:
        case Scenario::example2: {
            out.spec = cfg.scenario == Scenario::example1 ? example1_spec() : example2_spec();
            const auto& shift = out.spec.environments[1];
            const TestLaw law = cfg.scenario == Scenario::example1
                                    ? TestLaw{shift.mu, shift.cov}
                                    : TestLaw{Vector::Zero(2), 0.5 * shift.second_moment()};
            const ScmSpec spec = out.spec;
            out.tests = [spec, law](double a) { return std::vector{moments_of(spec, law.scaled(a))}; };
            break;
        }
        case Scenario::example3: {
            RandomInstanceSpec rs;
            rs.p = cfg.p.value_or(5);
            rs.n_train_envs = 1;
            rs.n_test_envs = 0;
            rs.edge_prob = cfg.edge_prob.value_or(rs.edge_prob);
            rs.mean_factor = 1.0;
            rs.cov_factor = 1.0;
            out.spec = random_instance(rs, cfg.seed).spec;
            const Eigen::Index d = out.spec.dim();
            out.gamma_shape = Vector::LinSpaced(d, 1.0, static_cast<double>(d));
            const MomentSet pop = population_moments(out.spec);
            const Matrix shape = out.gamma_shape.asDiagonal();
            const Matrix lift = shape * (pop[1].gram - pop[0].gram) * shape;
            const Matrix g0 = pop[0].gram;
            out.tests = [g0, lift, d](double a) {
                EnvironmentMoments m;
                m.gram = g0 + 0.5 * a * lift;
                m.mean = Vector::Zero(d);
                return std::vector{m};
            };
            break;
        }
        case Scenario::example4: {
            RandomInstanceSpec rs;
            rs.p = cfg.p.value_or(20);
            rs.n_train_envs = 1;
            rs.n_test_envs = 1;
            rs.edge_prob = cfg.edge_prob.value_or(rs.edge_prob);
            rs.mean_factor = 1.0;
            rs.cov_factor = 1.0;
            RandomInstance inst = random_instance(rs, cfg.seed);
            out.spec = inst.spec;
            const TestLaw law{Vector::Zero(out.spec.dim()), inst.test_laws.front().cov};
            const ScmSpec spec = out.spec;
            out.tests = [spec, law](double a) { return std::vector{moments_of(spec, law.scaled(a))}; };
            out.sampled_labels = true;
            break;
        }
        case Scenario::appendix_g_covariate:
        case Scenario::appendix_g_all: {
            RandomInstanceSpec rs;
            rs.p = cfg.p.value_or(10);
            rs.n_train_envs = cfg.n_train_envs.value_or(3);
            rs.n_test_envs = cfg.n_test_envs.value_or(20);
            rs.edge_prob = cfg.edge_prob.value_or(rs.edge_prob);
            rs.intervene_y = cfg.scenario == Scenario::appendix_g_all;
            const std::uint64_t instance_seed = derive_seed(cfg.seed, rep);
            RandomInstance inst = random_instance(rs, instance_seed);
            out.spec = inst.spec;
            const ScmSpec spec = out.spec;
            const auto laws = inst.test_laws;
            out.tests = [spec, laws](double a) {
                std::vector<EnvironmentMoments> tests;
                tests.reserve(laws.size());
                for (const auto& law : laws) tests.push_back(moments_of(spec, law.scaled(a)));
                return tests;
            };
            out.sampled_labels = true;
            out.sampled_training = true;
            break;
        }
        case Scenario::custom: {
            out.spec = *cfg.spec;
            const ScmSpec spec = out.spec;
            const auto laws = cfg.test_laws;
            out.tests = [spec, laws](double a) {
                std::vector<EnvironmentMoments> tests;
                for (const auto& law : laws) tests.push_back(moments_of(spec, law.scaled(a)));
                return tests;
            };
            break;
        }
    }
    if (out.gamma_shape.size() == 0) out.gamma_shape = Vector::Ones(out.spec.dim());

    if (out.sampled_training) {
        const std::size_t n = cfg.n_train.value_or(10000);
        const std::uint64_t data_seed = derive_seed(derive_seed(cfg.seed, rep), 0x7261696eULL);
        std::vector<Matrix> samples;
        for (std::size_t e = 0; e < out.spec.environments.size(); ++e) {
            samples.push_back(sample(out.spec, e, n, derive_seed(data_seed, e)));
        }
        out.training = empirical_moments(samples, cfg.weights);
    } else {
        out.training = population_moments(out.spec);
    }
    return out;
}

FitResult fit_estimator(const MethodSpec& m, const Prepared& prep) {
    const MomentSet& t = prep.training;
    switch (m.method) {
        case Method::drig: return drig(t, *m.gamma);
        case Method::anchor: return anchor(t, *m.gamma);
        case Method::drig_a: {
            const Eigen::Index p = prep.spec.p;
            const Vector diag = *m.gamma * prep.gamma_shape;
            return drig_a(t, GammaMatrix{diag.head(p).asDiagonal(), diag(p)});
        }
        case Method::drig_inf: return drig_infinity(t);
        case Method::causal_dantzig: return causal_dantzig(t);
        case Method::group_dro: return group_dro(t);
        case Method::ols_ref: return ols_reference(t);
        case Method::ols_pooled: return ols_pooled(t);
        case Method::drig_a_adaptive:
        case Method::test_ols: break;
    }
    throw Error(ErrorKind::InvalidInput, "method needs test-domain information");
}

double worst_mse(const Vector& b, const std::vector<EnvironmentMoments>& tests) {
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& t : tests) worst = std::max(worst, evaluate_mse(b, t));
    return worst;
}

struct RepOutput {
    std::vector<ResultRow> rows;
    std::vector<RunError> errors;
    std::vector<double> oracle_medians;
};

double median_of(std::vector<double> v) {
    if (v.empty()) return kNaN;
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

RepOutput run_repetition(const ExperimentConfig& cfg, const std::vector<MethodSpec>& methods, std::size_t rep) {
    RepOutput out;
    const std::string scenario(to_string(cfg.scenario));
    std::vector<double> grid = cfg.gamma_grid;
    std::sort(grid.begin(), grid.end());

    const auto record_error = [&](const MethodSpec& m, double alpha, const std::string& msg) {
        out.errors.push_back({m.name, alpha, rep, msg});
    };

    Prepared prep;
    try {
        prep = prepare(cfg, rep);
    } catch (const Error& e) {
        for (double alpha : cfg.alpha_grid) {
            for (const auto& m : methods) {
                out.rows.push_back({scenario, m.name, m.gamma_label(), alpha, rep, kNaN, 0});
                record_error(m, alpha, e.what());
            }
        }
        return out;
    }

    // Fits that do not depend on the test law.
    std::vector<std::optional<Vector>> fixed(methods.size());
    std::vector<std::string> fixed_error(methods.size());
    for (std::size_t k = 0; k < methods.size(); ++k) {
        const auto& m = methods[k];
        if (m.kind == MethodSpec::Kind::causal) {
            fixed[k] = prep.spec.causal_parameter();
        } else if (m.kind == MethodSpec::Kind::estimator && m.method != Method::drig_a_adaptive &&
                   m.method != Method::test_ols) {
            try {
                fixed[k] = fit_estimator(m, prep).b;
            } catch (const Error& e) {
                fixed_error[k] = e.what();
            }
        }
    }

    const AdaptOptions adapt{prep.sampled_training};
    const std::size_t n_labeled = cfg.n_labeled.value_or(50);
    const std::uint64_t label_base = derive_seed(derive_seed(cfg.seed, rep), 0x6c61626cULL);

    for (std::size_t ai = 0; ai < cfg.alpha_grid.size(); ++ai) {
        const double alpha = cfg.alpha_grid[ai];
        std::vector<EnvironmentMoments> tests;
        try {
            tests = prep.tests(alpha);
        } catch (const Error& e) {
            for (const auto& m : methods) {
                out.rows.push_back({scenario, m.name, m.gamma_label(), alpha, rep, kNaN, 0});
                record_error(m, alpha, e.what());
            }
            continue;
        }
        const int flag = tests.size() > 1 ? 1 : 0;

        std::vector<TestDomainInfo> infos;
        const auto test_infos = [&]() -> const std::vector<TestDomainInfo>& {
            if (!infos.empty()) return infos;
            for (std::size_t j = 0; j < tests.size(); ++j) {
                TestDomainInfo info = population_test_info(tests[j]);
                if (prep.sampled_labels) {
                    const Matrix lab = sample_from_moments(
                        tests[j], n_labeled, derive_seed(label_base, ai * 100003 + j));
                    const Eigen::Index p = prep.spec.p;
                    info.sigma_xy = lab.leftCols(p).transpose() * lab.col(p) / static_cast<double>(n_labeled);
                    info.n_l = n_labeled;
                }
                infos.push_back(std::move(info));
            }
            return infos;
        };

        for (std::size_t k = 0; k < methods.size(); ++k) {
            const auto& m = methods[k];
            double mse = kNaN;
            try {
                if (fixed[k]) {
                    mse = worst_mse(*fixed[k], tests);
                } else if (!fixed_error[k].empty()) {
                    record_error(m, alpha, fixed_error[k]);
                } else if (m.kind == MethodSpec::Kind::oracle) {
                    double worst = -std::numeric_limits<double>::infinity();
                    std::vector<double> chosen;
                    for (const auto& t : tests) {
                        const OracleChoice c = oracle_gamma(prep.training, t, grid, m.method);
                        worst = std::max(worst, c.mse);
                        chosen.push_back(c.gamma);
                    }
                    mse = worst;
                    if (m.method == Method::drig) {
                        if (out.oracle_medians.size() < cfg.alpha_grid.size()) {
                            out.oracle_medians.resize(cfg.alpha_grid.size(), kNaN);
                        }
                        out.oracle_medians[ai] = median_of(chosen);
                    }
                } else {
                    const auto& is = test_infos();
                    double worst = -std::numeric_limits<double>::infinity();
                    for (std::size_t j = 0; j < tests.size(); ++j) {
                        const FitResult fit = m.method == Method::test_ols ? test_ols(is[j])
                                                                           : drig_a_adaptive(prep.training, is[j], adapt);
                        worst = std::max(worst, evaluate_mse(fit.b, tests[j]));
                    }
                    mse = worst;
                }
            } catch (const Error& e) {
                mse = kNaN;
                record_error(m, alpha, e.what());
            }
            out.rows.push_back({scenario, m.name, m.gamma_label(), alpha, rep, mse, flag});
        }
    }
    return out;
}

}  // namespace

std::string_view to_string(Scenario s) {
    for (const auto& [k, tag] : kScenarioTags) {
        if (k == s) return tag;
    }
    return "unknown";
}

std::optional<Scenario> scenario_from_string(std::string_view tag) {
    for (const auto& [k, name] : kScenarioTags) {
        if (name == tag) return k;
    }
    return std::nullopt;
}

MethodSpec MethodSpec::parse(const std::string& text) {
    MethodSpec m;
    m.name = text;
    std::string base = text;
    std::optional<std::string> arg;
    if (const auto open = text.find('('); open != std::string::npos) {
        if (text.back() != ')' || open == 0) throw Error(ErrorKind::InvalidInput, "malformed method '" + text + "'");
        base = text.substr(0, open);
        arg = text.substr(open + 1, text.size() - open - 2);
    }
    if (base == "causal") {
        m.kind = Kind::causal;
        m.method = Method::drig_inf;
        if (arg) throw Error(ErrorKind::InvalidInput, "causal takes no parameter");
        return m;
    }
    const auto method = method_from_string(base);
    if (!method) throw Error(ErrorKind::InvalidInput, "unknown method '" + text + "'");
    m.method = *method;
    const bool takes_gamma = m.method == Method::drig || m.method == Method::anchor || m.method == Method::drig_a;
    if (takes_gamma != arg.has_value()) {
        throw Error(ErrorKind::InvalidInput, "method '" + text + "' has the wrong parameter list");
    }
    if (!arg) return m;
    if (*arg == "oracle") {
        if (m.method == Method::drig_a) throw Error(ErrorKind::InvalidInput, "drig_a has no oracle scheme");
        m.kind = Kind::oracle;
        return m;
    }
    std::size_t used = 0;
    double g = 0.0;
    try {
        g = std::stod(*arg, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != arg->size() || !(g >= 0.0) || !std::isfinite(g)) {
        throw Error(ErrorKind::InvalidInput, "bad gamma in '" + text + "'");
    }
    m.gamma = g;
    return m;
}

std::string MethodSpec::gamma_label() const {
    if (kind == Kind::oracle) return "oracle";
    if (kind == Kind::causal) return "inf";
    switch (method) {
        case Method::drig:
        case Method::anchor: return format_gamma(*gamma);
        case Method::drig_a: return "Gamma";
        case Method::drig_inf: return "inf";
        case Method::ols_ref: return "0";
        case Method::ols_pooled: return "1";
        case Method::drig_a_adaptive: return "adaptive";
        case Method::test_ols: return "test";
        case Method::causal_dantzig: return "inf";
        case Method::group_dro: return "na";
    }
    return "na";
}

void ExperimentConfig::validate() const {
    if (alpha_grid.empty()) throw Error(ErrorKind::InvalidInput, "alpha_grid is empty");
    for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
        if (!(alpha_grid[i] > 0.0) || !std::isfinite(alpha_grid[i])) {
            throw Error(ErrorKind::InvalidInput, "alpha_grid entries must be positive");
        }
        if (i > 0 && !(alpha_grid[i] > alpha_grid[i - 1])) {
            throw Error(ErrorKind::InvalidInput, "alpha_grid must be strictly increasing");
        }
    }
    if (methods.empty()) throw Error(ErrorKind::InvalidInput, "method list is empty");
    for (const auto& m : methods) MethodSpec::parse(m);
    if (repetitions < 1) throw Error(ErrorKind::InvalidInput, "repetitions must be at least 1");
    for (double g : gamma_grid) {
        if (!(g >= 0.0) || !std::isfinite(g)) throw Error(ErrorKind::InvalidInput, "gamma_grid entries must be >= 0");
    }
    if (gamma_grid.empty()) throw Error(ErrorKind::InvalidInput, "gamma_grid is empty");
    if (p && *p < 1) throw Error(ErrorKind::InvalidInput, "p must be positive");
    if (n_train && *n_train < 2) throw Error(ErrorKind::InvalidInput, "n_train must be at least 2");
    if (n_labeled && *n_labeled < 1) throw Error(ErrorKind::InvalidInput, "n_labeled must be positive");
    if (edge_prob && !(*edge_prob >= 0.0 && *edge_prob <= 1.0)) {
        throw Error(ErrorKind::InvalidInput, "edge_prob must lie in [0, 1]");
    }
    if (scenario == Scenario::custom) {
        if (!spec) throw Error(ErrorKind::InvalidInput, "custom scenario needs a spec");
        drig::validate(*spec);
        if (test_laws.empty()) throw Error(ErrorKind::InvalidInput, "custom scenario needs test_laws");
        for (const auto& law : test_laws) {
            if (law.mu.size() != spec->dim() || law.cov.rows() != spec->dim() || law.cov.cols() != spec->dim()) {
                throw Error(ErrorKind::InvalidInput, "test law has the wrong dimension");
            }
            linalg::checked_psd(law.cov, "test law covariance");
        }
    }
}

bool is_population_scenario(const ExperimentConfig& config) {
    return config.scenario == Scenario::example1 || config.scenario == Scenario::example2 ||
           config.scenario == Scenario::example3 || config.scenario == Scenario::custom;
}

OracleChoice oracle_gamma(const MomentSet& training, const EnvironmentMoments& test,
                          std::span<const double> gamma_grid, Method method) {
    if (gamma_grid.empty()) throw Error(ErrorKind::InvalidInput, "gamma grid is empty");
    if (method != Method::drig && method != Method::anchor) {
        throw Error(ErrorKind::InvalidInput, "oracle gamma supports drig and anchor");
    }
    std::vector<double> grid(gamma_grid.begin(), gamma_grid.end());
    std::sort(grid.begin(), grid.end());
    std::optional<OracleChoice> best;
    std::string last_error;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        try {
            const FitResult fit = method == Method::drig ? drig(training, grid[i]) : anchor(training, grid[i]);
            const double mse = evaluate_mse(fit.b, test);
            if (!best || mse < best->mse) best = OracleChoice{grid[i], mse, i};
        } catch (const Error& e) {
            last_error = e.what();
        }
    }
    if (!best) throw Error(ErrorKind::NonPdSystem, "no grid gamma could be fitted: " + last_error);
    return *best;
}

std::size_t worker_threads() {
    if (const char* env = std::getenv("DRIG_THREADS")) {
        char* end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && n > 0) return static_cast<std::size_t>(n);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

RunResult run(const ExperimentConfig& config) {
    config.validate();
    std::vector<MethodSpec> methods;
    for (const auto& m : config.methods) methods.push_back(MethodSpec::parse(m));

    const std::size_t reps = is_population_scenario(config) ? 1 : config.repetitions;
    std::vector<RepOutput> outputs(reps);
    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
        for (std::size_t r = next++; r < reps; r = next++) outputs[r] = run_repetition(config, methods, r);
    };
    const std::size_t threads = std::min(worker_threads(), reps);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    RunResult result;
    for (auto& o : outputs) {
        result.rows.insert(result.rows.end(), o.rows.begin(), o.rows.end());
        result.errors.insert(result.errors.end(), o.errors.begin(), o.errors.end());
        if (!o.oracle_medians.empty()) result.oracle_gamma_median.push_back(std::move(o.oracle_medians));
    }
    return result;
}

Interval bootstrap_mean_ci(std::span<const double> values, std::uint64_t seed, std::size_t resamples, double level) {
    std::vector<double> finite;
    for (double v : values) {
        if (std::isfinite(v)) finite.push_back(v);
    }
    if (finite.empty()) return {kNaN, kNaN};
    if (finite.size() == 1 || resamples == 0) return {finite.front(), finite.front()};
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, finite.size() - 1);
    std::vector<double> means(resamples);
    for (auto& m : means) {
        double total = 0.0;
        for (std::size_t i = 0; i < finite.size(); ++i) total += finite[pick(rng)];
        m = total / static_cast<double>(finite.size());
    }
    std::sort(means.begin(), means.end());
    const double tail = 0.5 * (1.0 - level);
    const auto at = [&](double q) {
        const double pos = q * static_cast<double>(means.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, means.size() - 1);
        return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
    };
    return {at(tail), at(1.0 - tail)};
}

}  // namespace drig
