#pragma once

// Perturbation classes {v : E[v v^T] <= M} and exact worst-case risks of linear
// predictors over them. For a predictor b the residual Y - b^T X equals w^T (eps + v)
// with w = C^T (-b, 1), so the supremum over a class is w^T noise_cov w + w^T M w.

#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>

#include "drig/estimators.hpp"
#include "drig/scm.hpp"

namespace drig {

enum class ClassKind { drig, anchor, drig_a, group_dro, causal };

std::string_view to_string(ClassKind kind);
std::optional<ClassKind> class_from_string(std::string_view tag);

struct PerturbationClass {
    ClassKind kind = ClassKind::drig;
    std::optional<Matrix> bound;  ///< empty for the causal class
    std::optional<double> gamma;
    std::optional<GammaMatrix> gamma_matrix;
    std::optional<std::size_t> dominating_env;
};

/// U = sum_e w^e (S^e - S^0 + mu^e mu^e^T).
Matrix intervention_shift(const ScmSpec& spec);

/// Classes parameterized by a scalar: drig, anchor (gamma >= 0), group_dro and
/// causal (gamma ignored).
PerturbationClass build_class(const ScmSpec& spec, ClassKind kind, double gamma = 0.0);

/// DRIG-A class for diag(Gamma_x, gamma_y) PSD with Gamma_x symmetric.
PerturbationClass build_class(const ScmSpec& spec, const GammaMatrix& gamma);

/// w = C^T (-b, 1).
Vector residual_loading(const ScmSpec& spec, const Vector& b);

struct WorstCase {
    double risk = 0.0;            ///< +inf when the class admits unbounded risk
    std::optional<Vector> v;      ///< deterministic intervention attaining the supremum
    Matrix gram() const { return v ? Matrix(*v * v->transpose()) : Matrix(); }
};

WorstCase worst_case(const ScmSpec& spec, const Vector& b, const PerturbationClass& cls);
double worst_case_risk(const ScmSpec& spec, const Vector& b, const PerturbationClass& cls);

/// The population loss whose minimizer is robust for `cls`: L_gamma for drig,
/// the anchor loss, the DRIG-A loss, or max_e MSE_e for group DRO.
double class_loss(const MomentSet& population, const Vector& b, const PerturbationClass& cls);

/// Population fit of the estimator paired with `cls`.
FitResult class_estimator(const MomentSet& population, const PerturbationClass& cls);

/// 100 probes by default: b*, a uniform grid around b* when p <= 2, and
/// Gaussian perturbations of b* at scales 0.1 and 1.
std::vector<Vector> default_probes(const ScmSpec& spec, std::uint64_t seed, std::size_t count = 100);

struct DualityReport {
    double max_identity_violation = 0.0;  ///< max |loss - risk| / max(1, |risk|)
    double min_gap_vs_drig = std::numeric_limits<double>::infinity();  ///< min over probes of risk(probe) - risk(fit)
    std::size_t probes = 0;
};

DualityReport verify_duality(const ScmSpec& spec, const PerturbationClass& cls,
                             const std::vector<Vector>& probes);
DualityReport verify_duality(const ScmSpec& spec, double gamma, const std::vector<Vector>& probes);

}  // namespace drig
