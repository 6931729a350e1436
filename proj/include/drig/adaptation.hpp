#pragma once

// Semi-supervised adaptation: choose the DRIG-A penalty from test-domain second
// moments so that G^0_x + Gamma_x Delta_x Gamma_x reproduces the test covariate
// Gram, then pick gamma_y to minimize the test MSE along the resulting direction.

#include <optional>

#include "drig/estimators.hpp"

namespace drig {

struct TestDomainInfo {
    Matrix sigma_x;   ///< E[X^v X^v^T], p x p
    Vector sigma_xy;  ///< E[X^v Y^v]
    std::optional<std::size_t> n_l;
    std::optional<std::size_t> n_u;  ///< empty means population
};

/// Exact test information from test-environment moments.
TestDomainInfo population_test_info(const EnvironmentMoments& test);

/// Plug-in test information. Both samples are centered by `center` (the raw
/// reference-environment mean, p+1 entries) before taking second moments.
/// `labeled` has p+1 columns; `unlabeled` has p columns and may be empty, in
/// which case the covariates of the labeled sample are used for sigma_x.
TestDomainInfo sample_test_info(const Matrix& labeled, const Matrix& unlabeled, const Vector& center);

struct AdaptOptions {
    // Finite training samples make Delta_x and Sigma^v_x - G^0_x indefinite
    // whenever some true eigenvalue is below the sampling noise. When set,
    // Delta_x is floored at 1e-8 of its largest eigenvalue and the difference
    // is projected onto the PSD cone instead of raising.
    bool project = false;
};

Matrix gamma_star_x(const Matrix& sigma_x, const MomentSet& moments, const AdaptOptions& options = {});

double gamma_star_y(const Matrix& sigma_x, const Vector& sigma_xy, const Matrix& gamma_x,
                    const MomentSet& moments);

FitResult drig_a_adaptive(const MomentSet& moments, const TestDomainInfo& info,
                          const AdaptOptions& options = {});

/// (Sigma^v_x)^{-1} Sigma^v_xy.
FitResult test_ols(const TestDomainInfo& info);

}  // namespace drig
