#include "drig/robustness.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "drig/random.hpp"

namespace drig {

namespace {

constexpr std::array<std::pair<ClassKind, std::string_view>, 5> kClassTags{{
    {ClassKind::drig, "drig"},
    {ClassKind::anchor, "anchor"},
    {ClassKind::drig_a, "drig_a"},
    {ClassKind::group_dro, "group_dro"},
    {ClassKind::causal, "causal"},
}};

Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

std::size_t dominating_environment(const ScmSpec& spec) {
    for (std::size_t m = 0; m < spec.environments.size(); ++m) {
        const Matrix big = spec.environments[m].second_moment();
        bool dominates = true;
        for (std::size_t e = 0; e < spec.environments.size() && dominates; ++e) {
            if (e != m) dominates = linalg::psd_dominates(big, spec.environments[e].second_moment());
        }
        if (dominates) return m;
    }
    throw Error(ErrorKind::NoDominatingEnvironment,
                "no environment's intervention second moment dominates all others");
}

}  // namespace

std::string_view to_string(ClassKind kind) {
    for (const auto& [k, tag] : kClassTags) {
        if (k == kind) return tag;
    }
    return "unknown";
}

std::optional<ClassKind> class_from_string(std::string_view tag) {
    for (const auto& [k, name] : kClassTags) {
        if (name == tag) return k;
    }
    return std::nullopt;
}

Matrix intervention_shift(const ScmSpec& spec) {
    const Matrix& s0 = spec.environments.front().cov;
    Matrix u = Matrix::Zero(spec.dim(), spec.dim());
    for (const auto& env : spec.environments) {
        u += env.weight * (env.cov - s0 + env.mu * env.mu.transpose());
    }
    return symmetrize(u);
}

PerturbationClass build_class(const ScmSpec& spec, ClassKind kind, double gamma) {
    validate(spec);
    PerturbationClass cls;
    cls.kind = kind;
    const Matrix& s0 = spec.environments.front().cov;
    switch (kind) {
        case ClassKind::drig:
        case ClassKind::anchor: {
            if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
                throw Error(ErrorKind::InvalidInput, "gamma must be a finite non-negative number");
            }
            cls.gamma = gamma;
            if (kind == ClassKind::drig) {
                cls.bound = symmetrize(s0 + gamma * intervention_shift(spec));
            } else {
                Matrix m = Matrix::Zero(spec.dim(), spec.dim());
                for (const auto& env : spec.environments) {
                    m += env.weight * (env.cov + gamma * env.mu * env.mu.transpose());
                }
                cls.bound = symmetrize(m);
            }
            break;
        }
        case ClassKind::group_dro: {
            const std::size_t m = dominating_environment(spec);
            cls.dominating_env = m;
            cls.bound = symmetrize(spec.environments[m].second_moment());
            break;
        }
        case ClassKind::causal:
            break;
        case ClassKind::drig_a:
            throw Error(ErrorKind::InvalidInput, "the drig_a class needs a Gamma matrix");
    }
    if (cls.bound) cls.bound = linalg::checked_psd(*cls.bound, "perturbation bound");
    return cls;
}

PerturbationClass build_class(const ScmSpec& spec, const GammaMatrix& gamma) {
    validate(spec);
    if (gamma.gamma_x.rows() != spec.p || gamma.gamma_x.cols() != spec.p) {
        throw Error(ErrorKind::InvalidInput, "Gamma_x must be p x p");
    }
    if (!linalg::is_symmetric(gamma.gamma_x)) throw Error(ErrorKind::NotPsd, "Gamma_x must be symmetric");
    const Matrix full = gamma.full();
    linalg::checked_psd(full, "Gamma");

    const Matrix i_minus_b = Matrix::Identity(spec.dim(), spec.dim()) - spec.B;
    const Matrix shaped = i_minus_b * full * spec.propagation();
    PerturbationClass cls;
    cls.kind = ClassKind::drig_a;
    cls.gamma_matrix = gamma;
    cls.bound = linalg::checked_psd(
        symmetrize(spec.environments.front().cov + shaped * intervention_shift(spec) * shaped.transpose()),
        "perturbation bound");
    return cls;
}

Vector residual_loading(const ScmSpec& spec, const Vector& b) {
    if (b.size() != spec.p) throw Error(ErrorKind::InvalidInput, "coefficient dimension mismatch");
    Vector r(spec.dim());
    r.head(spec.p) = -b;
    r(spec.p) = 1.0;
    return spec.propagation().transpose() * r;
}

WorstCase worst_case(const ScmSpec& spec, const Vector& b, const PerturbationClass& cls) {
    const Vector w = residual_loading(spec, b);
    const double noise_part = w.dot(spec.noise_cov * w);
    WorstCase out;
    if (cls.kind == ClassKind::causal) {
        const double tol = 1e-10 * std::max(1.0, w.norm());
        if (w.head(spec.p).cwiseAbs().maxCoeff() <= tol) {
            out.risk = noise_part;
            out.v = Vector::Zero(spec.dim());
        } else {
            out.risk = std::numeric_limits<double>::infinity();
        }
        return out;
    }
    const Matrix& m = *cls.bound;
    const Matrix root = linalg::sym_sqrt(m);
    const Vector projected = root * w;
    const double norm = projected.norm();
    out.risk = noise_part + w.dot(m * w);
    out.v = norm > 0.0 ? Vector(root * projected / norm) : Vector(Vector::Zero(spec.dim()));
    return out;
}

double worst_case_risk(const ScmSpec& spec, const Vector& b, const PerturbationClass& cls) {
    return worst_case(spec, b, cls).risk;
}

double class_loss(const MomentSet& population, const Vector& b, const PerturbationClass& cls) {
    switch (cls.kind) {
        case ClassKind::drig: return drig_objective(b, population, *cls.gamma);
        case ClassKind::anchor: return anchor_objective(b, population, *cls.gamma);
        case ClassKind::drig_a: return drig_a_objective(b, population, *cls.gamma_matrix);
        case ClassKind::group_dro: {
            double worst = -std::numeric_limits<double>::infinity();
            for (const auto& m : population) worst = std::max(worst, evaluate_mse(b, m));
            return worst;
        }
        case ClassKind::causal: break;
    }
    throw Error(ErrorKind::InvalidInput, "the causal class has no finite-parameter loss");
}

FitResult class_estimator(const MomentSet& population, const PerturbationClass& cls) {
    switch (cls.kind) {
        case ClassKind::drig: return drig(population, *cls.gamma);
        case ClassKind::anchor: return anchor(population, *cls.gamma);
        case ClassKind::drig_a: return drig_a(population, *cls.gamma_matrix);
        case ClassKind::group_dro: return group_dro(population);
        case ClassKind::causal: return drig_infinity(population);
    }
    throw Error(ErrorKind::InvalidInput, "unknown class");
}

std::vector<Vector> default_probes(const ScmSpec& spec, std::uint64_t seed, std::size_t count) {
    const Vector b_star = spec.causal_parameter();
    std::vector<Vector> probes;
    probes.reserve(count);
    if (count == 0) return probes;
    probes.push_back(b_star);

    if (spec.p == 1) {
        for (int i = 0; i <= 24 && probes.size() < count; ++i) {
            probes.push_back(b_star + Vector::Constant(1, -3.0 + 0.25 * i));
        }
    } else if (spec.p == 2) {
        for (int i = 0; i < 5; ++i) {
            for (int j = 0; j < 5 && probes.size() < count; ++j) {
                Vector d(2);
                d << -2.0 + i, -2.0 + j;
                probes.push_back(b_star + d);
            }
        }
    }

    Rng rng(seed);
    std::size_t k = 0;
    while (probes.size() < count) {
        const double scale = (k++ % 2 == 0) ? 0.1 : 1.0;
        probes.push_back(b_star + scale * standard_normal(rng, spec.p, 1).col(0));
    }
    return probes;
}

DualityReport verify_duality(const ScmSpec& spec, const PerturbationClass& cls,
                             const std::vector<Vector>& probes) {
    const MomentSet population = population_moments(spec);
    const FitResult fit = class_estimator(population, cls);
    const double fit_risk = worst_case_risk(spec, fit.b, cls);

    DualityReport report;
    report.probes = probes.size();
    for (const Vector& b : probes) {
        const double risk = worst_case_risk(spec, b, cls);
        const double loss = class_loss(population, b, cls);
        report.max_identity_violation =
            std::max(report.max_identity_violation, std::abs(loss - risk) / std::max(1.0, std::abs(risk)));
        report.min_gap_vs_drig = std::min(report.min_gap_vs_drig, risk - fit_risk);
    }
    return report;
}

DualityReport verify_duality(const ScmSpec& spec, double gamma, const std::vector<Vector>& probes) {
    return verify_duality(spec, build_class(spec, ClassKind::drig, gamma), probes);
}

}  // namespace drig
