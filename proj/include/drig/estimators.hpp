#pragma once

// Linear estimators fitted from per-environment moments. Environment 0 of a
// MomentSet is the reference environment. With covariate block G^e_x,
// cross block g^e and weights w^e, the heterogeneity terms are
//
//   Delta_x  = sum_e w^e (G^e_x - G^0_x),   Delta_xy = sum_e w^e (g^e - g^0).
//
// DRIG(gamma) solves (G^0_x + gamma Delta_x) b = g^0 + gamma Delta_xy; gamma = 0
// is OLS on the reference environment, gamma = 1 is pooled OLS.

#include <optional>
#include <string>
#include <string_view>

#include "drig/scm.hpp"

namespace drig {

enum class Method {
    drig,
    drig_inf,
    anchor,
    drig_a,
    causal_dantzig,
    group_dro,
    ols_ref,
    ols_pooled,
    drig_a_adaptive,
    test_ols,
};

std::string_view to_string(Method m);
std::optional<Method> method_from_string(std::string_view tag);

/// Penalty matrix diag(Gamma_x, gamma_y) of DRIG-A.
struct GammaMatrix {
    Matrix gamma_x;
    double gamma_y = 0.0;

    static GammaMatrix scaled_identity(Eigen::Index p, double gamma) {
        return {gamma * Matrix::Identity(p, p), gamma};
    }
    /// Full (p+1)x(p+1) matrix diag(Gamma_x, gamma_y).
    Matrix full() const;
};

struct FitResult {
    Vector b;
    double objective = 0.0;
    double grad_invariance_residual = 0.0;
    double condition = 0.0;  ///< reciprocal condition number of the solved system
    Method method = Method::drig;
    std::optional<double> gamma;
    std::optional<GammaMatrix> gamma_matrix;
};

struct Heterogeneity {
    Matrix full;  ///< sum_e w^e (G^e - G^0), (p+1)x(p+1)
    Matrix x() const { return full.topLeftCorner(full.rows() - 1, full.rows() - 1); }
    Vector xy() const { return full.col(full.rows() - 1).head(full.rows() - 1); }
};

/// Checks shape agreement, positive weights summing to one, and symmetric Grams.
void check_moments(const MomentSet& moments);

Heterogeneity heterogeneity(const MomentSet& moments);

/// Exact (population or empirical) MSE of the predictor b on one environment:
/// G_y - 2 b^T g + b^T G_x b.
double evaluate_mse(const Vector& b, const EnvironmentMoments& env);

/// || 2 (Delta_x b - Delta_xy) ||_2; zero exactly on the gradient-invariant set.
double gradient_invariance_residual(const Vector& b, const MomentSet& moments);

/// L_gamma(b) evaluated from per-environment MSEs.
double drig_objective(const Vector& b, const MomentSet& moments, double gamma);

/// Anchor loss sum_e w^e MSE_e + (gamma - 1) sum_e w^e (E[Y^e - b^T X^e])^2.
double anchor_objective(const Vector& b, const MomentSet& moments, double gamma);

/// DRIG-A loss: MSE_0(b) + r^T Gamma Delta Gamma r with r = (-b, 1).
double drig_a_objective(const Vector& b, const MomentSet& moments, const GammaMatrix& gamma);

FitResult drig(const MomentSet& moments, double gamma);
FitResult ols_reference(const MomentSet& moments);
FitResult ols_pooled(const MomentSet& moments);

/// gamma -> infinity limit, solved as reference MSE minimization under the
/// constraint Delta_x b = Delta_xy.
FitResult drig_infinity(const MomentSet& moments);

FitResult anchor(const MomentSet& moments, double gamma);

/// Two-environment difference system (G^1_x - G^0_x) b = g^1 - g^0.
FitResult causal_dantzig(const MomentSet& moments);

struct GroupDroOptions {
    double tolerance = 1e-6;      ///< stop when the duality gap falls below this (relative)
    std::size_t max_iters = 100000;
    double step = 0.1;            ///< eta_t = step / sqrt(t) on normalized losses
};

/// argmin_b max_e MSE_e(b) via multiplicative weights over environment mixtures.
FitResult group_dro(const MomentSet& moments, const GroupDroOptions& options = {});

/// DRIG-A closed form [G^0_x + Gamma_x Delta_x Gamma_x]^{-1} [g^0 + gamma_y Gamma_x Delta_xy].
/// Requires symmetric Gamma_x and diag(Gamma_x, gamma_y) PSD.
FitResult drig_a(const MomentSet& moments, const GammaMatrix& gamma);

namespace detail {
/// The DRIG-A solve without the PSD requirement on the penalty (adaptive
/// choices may produce a negative gamma_y).
FitResult drig_a_closed_form(const MomentSet& moments, const GammaMatrix& gamma);
}  // namespace detail

}  // namespace drig
