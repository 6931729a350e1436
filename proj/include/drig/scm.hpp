#pragma once

// Linear structural causal models with additive interventions:
//
//   Z^e = B Z^e + eps + delta^e,   Z = (X_1, ..., X_p, Y),
//
// with eps ~ (0, noise_cov) shared by all environments and delta^e ~ (mu^e, S^e)
// drawn per environment. Environment 0 is the reference environment; all data
// are centered by its mean.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drig/linalg.hpp"

namespace drig {

struct InterventionLaw {
    Vector mu;   ///< E[delta]
    Matrix cov;  ///< Cov(delta)
    double weight = 1.0;

    /// E[delta delta^T] = cov + mu mu^T.
    Matrix second_moment() const { return cov + mu * mu.transpose(); }
};

struct ScmSpec {
    int p = 0;
    Matrix B;
    Matrix noise_cov;
    std::vector<InterventionLaw> environments;

    Eigen::Index dim() const { return p + 1; }

    /// b*: the response row of B restricted to the covariates.
    Vector causal_parameter() const { return B.row(p).head(p).transpose(); }

    /// C = (I - B)^{-1}; throws SingularModel when rcond(I - B) < 1e-12.
    Matrix propagation() const;
};

/// Checks the structural invariants and throws on violation (InvalidInput,
/// NotPsd, SingularModel). Soft violations, currently only the reference
/// dominance condition, are returned as warnings.
std::vector<std::string> validate(const ScmSpec& spec);

/// Sufficient statistics of one environment, after centering by the
/// reference-environment mean.
struct EnvironmentMoments {
    Vector mean;  ///< E[Z^e]
    Matrix gram;  ///< E[Z^e Z^e^T]
    double weight = 1.0;
    std::optional<std::size_t> n;  ///< sample count, empty for population moments

    Eigen::Index p() const { return gram.rows() - 1; }
    Matrix gram_x() const { return gram.topLeftCorner(p(), p()); }
    Vector gram_xy() const { return gram.col(p()).head(p()); }
    double gram_y() const { return gram(p(), p()); }
    Matrix covariance() const { return gram - mean * mean.transpose(); }
};

using MomentSet = std::vector<EnvironmentMoments>;

/// Exact moments: G^e = C (noise_cov + S^e + mu^e mu^e^T) C^T, m^e = C mu^e.
MomentSet population_moments(const ScmSpec& spec);

/// Moments of the test SCM with intervention v ~ (v_mean, v_cov).
EnvironmentMoments test_moments(const ScmSpec& spec, const Vector& v_mean, const Matrix& v_cov);

/// n Gaussian draws of (X^e, Y^e) as an n x (p+1) column-major matrix,
/// centered by the reference population mean. Deterministic in `seed`.
Matrix sample(const ScmSpec& spec, std::size_t env_index, std::size_t n, std::uint64_t seed);

enum class WeightMode { uniform, sample_size };

/// Per-environment sample moments; samples[0] is the reference environment and
/// its sample mean centers every environment.
MomentSet empirical_moments(std::span<const Matrix> samples, WeightMode mode);
MomentSet empirical_moments(std::span<const Matrix> samples, std::span<const double> weights);

}  // namespace drig
