#include "drig/scm.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "drig/kernels.hpp"
#include "drig/random.hpp"

namespace drig {

Matrix ScmSpec::propagation() const {
    const Matrix i_minus_b = Matrix::Identity(dim(), dim()) - B;
    const double rc = linalg::rcond(i_minus_b);
    if (rc < 1e-12) {
        std::ostringstream os;
        os << "I - B has reciprocal condition number " << rc;
        throw Error(ErrorKind::SingularModel, os.str());
    }
    return i_minus_b.partialPivLu().inverse();
}

std::vector<std::string> validate(const ScmSpec& spec) {
    if (spec.p < 1) throw Error(ErrorKind::InvalidInput, "p must be positive");
    const Eigen::Index d = spec.dim();
    if (spec.B.rows() != d || spec.B.cols() != d) {
        throw Error(ErrorKind::InvalidInput, "B must be (p+1)x(p+1)");
    }
    if (spec.noise_cov.rows() != d || spec.noise_cov.cols() != d) {
        throw Error(ErrorKind::InvalidInput, "noise_cov must be (p+1)x(p+1)");
    }
    if (!spec.B.allFinite() || !spec.noise_cov.allFinite()) {
        throw Error(ErrorKind::InvalidInput, "B and noise_cov must be finite");
    }
    if (spec.B(spec.p, spec.p) != 0.0) {
        throw Error(ErrorKind::InvalidInput, "B[p+1,p+1] must be zero");
    }
    linalg::checked_psd(spec.noise_cov, "noise_cov");
    if (spec.environments.empty()) {
        throw Error(ErrorKind::InvalidInput, "at least the reference environment is required");
    }
    double total = 0.0;
    for (std::size_t e = 0; e < spec.environments.size(); ++e) {
        const auto& env = spec.environments[e];
        const std::string tag = "environment " + std::to_string(e);
        if (env.mu.size() != d) throw Error(ErrorKind::InvalidInput, tag + ": mu must have p+1 entries");
        if (env.cov.rows() != d || env.cov.cols() != d) {
            throw Error(ErrorKind::InvalidInput, tag + ": S must be (p+1)x(p+1)");
        }
        if (!env.mu.allFinite() || !env.cov.allFinite()) {
            throw Error(ErrorKind::InvalidInput, tag + ": non-finite entries");
        }
        if (!(env.weight > 0.0 && env.weight <= 1.0)) {
            throw Error(ErrorKind::InvalidInput, tag + ": weight must lie in (0, 1]");
        }
        linalg::checked_psd(env.cov, tag + " S");
        total += env.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw Error(ErrorKind::InvalidInput, "environment weights must sum to 1");
    }
    if (spec.environments.front().mu.cwiseAbs().maxCoeff() != 0.0) {
        throw Error(ErrorKind::InvalidInput, "reference environment must have zero intervention mean");
    }
    spec.propagation();

    std::vector<std::string> warnings;
    Matrix pooled = Matrix::Zero(d, d);
    for (const auto& env : spec.environments) pooled += env.weight * env.second_moment();
    if (!linalg::psd_dominates(pooled, spec.environments.front().second_moment())) {
        warnings.emplace_back(
            "weighted intervention second moments do not dominate the reference environment");
    }
    return warnings;
}

MomentSet population_moments(const ScmSpec& spec) {
    const Matrix c = spec.propagation();
    MomentSet out;
    out.reserve(spec.environments.size());
    for (const auto& env : spec.environments) {
        EnvironmentMoments m;
        m.mean = c * env.mu;
        Matrix g = c * (spec.noise_cov + env.second_moment()) * c.transpose();
        m.gram = 0.5 * (g + g.transpose());
        m.weight = env.weight;
        out.push_back(std::move(m));
    }
    return out;
}

EnvironmentMoments test_moments(const ScmSpec& spec, const Vector& v_mean, const Matrix& v_cov) {
    if (v_mean.size() != spec.dim() || v_cov.rows() != spec.dim() || v_cov.cols() != spec.dim()) {
        throw Error(ErrorKind::InvalidInput, "test intervention has wrong dimension");
    }
    const Matrix cov = linalg::checked_psd(v_cov, "test intervention covariance");
    const Matrix c = spec.propagation();
    EnvironmentMoments m;
    m.mean = c * v_mean;
    Matrix g = c * (spec.noise_cov + cov + v_mean * v_mean.transpose()) * c.transpose();
    m.gram = 0.5 * (g + g.transpose());
    m.weight = 1.0;
    return m;
}

Matrix sample(const ScmSpec& spec, std::size_t env_index, std::size_t n, std::uint64_t seed) {
    if (env_index >= spec.environments.size()) {
        throw Error(ErrorKind::InvalidInput, "environment index out of range");
    }
    if (n < 1) throw Error(ErrorKind::InvalidInput, "sample size must be at least 1");
    const auto& env = spec.environments[env_index];
    const Matrix c = spec.propagation();
    const Eigen::Index d = spec.dim();
    const auto rows = static_cast<Eigen::Index>(n);

    Rng rng(seed);
    const Matrix noise_root = linalg::sym_sqrt(spec.noise_cov);
    const Matrix shift_root = linalg::sym_sqrt(env.cov);
    const Matrix eps = standard_normal(rng, rows, d) * noise_root;
    Matrix shocks = standard_normal(rng, rows, d) * shift_root;
    shocks.rowwise() += env.mu.transpose();

    Matrix z = (eps + shocks) * c.transpose();
    const Vector reference_mean = c * spec.environments.front().mu;
    for (Eigen::Index j = 0; j < d; ++j) {
        kernels::add_scalar(std::span<double>(z.col(j).data(), n), -reference_mean(j));
    }
    return z;
}

namespace {

MomentSet moments_with_weights(std::span<const Matrix> samples, std::span<const double> weights) {
    if (samples.empty()) throw Error(ErrorKind::EmptyEnvironment, "no environments supplied");
    if (weights.size() != samples.size()) {
        throw Error(ErrorKind::InvalidInput, "one weight per environment is required");
    }
    const Eigen::Index d = samples.front().cols();
    for (std::size_t e = 0; e < samples.size(); ++e) {
        if (samples[e].rows() == 0) {
            throw Error(ErrorKind::EmptyEnvironment, "environment " + std::to_string(e) + " has no samples");
        }
        if (samples[e].cols() != d || d < 2) {
            throw Error(ErrorKind::InvalidInput, "environments must share at least two columns");
        }
    }
    const Vector reference_mean =
        kernels::column_sums(samples.front()) / static_cast<double>(samples.front().rows());

    MomentSet out;
    out.reserve(samples.size());
    for (std::size_t e = 0; e < samples.size(); ++e) {
        Matrix centered = samples[e];
        const auto n = static_cast<std::size_t>(centered.rows());
        for (Eigen::Index j = 0; j < d; ++j) {
            kernels::add_scalar(std::span<double>(centered.col(j).data(), n), -reference_mean(j));
        }
        EnvironmentMoments m;
        m.mean = kernels::column_sums(centered) / static_cast<double>(n);
        m.gram = kernels::cross_product(centered) / static_cast<double>(n);
        m.weight = weights[e];
        m.n = n;
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace

MomentSet empirical_moments(std::span<const Matrix> samples, WeightMode mode) {
    std::vector<double> weights(samples.size(), 0.0);
    if (mode == WeightMode::uniform) {
        for (auto& w : weights) w = 1.0 / static_cast<double>(samples.size());
    } else {
        double total = 0.0;
        for (const auto& s : samples) total += static_cast<double>(s.rows());
        for (std::size_t e = 0; e < samples.size(); ++e) {
            weights[e] = total > 0.0 ? static_cast<double>(samples[e].rows()) / total : 0.0;
        }
    }
    return moments_with_weights(samples, weights);
}

MomentSet empirical_moments(std::span<const Matrix> samples, std::span<const double> weights) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    for (double w : weights) {
        if (!(w > 0.0)) throw Error(ErrorKind::InvalidInput, "weights must be positive");
    }
    if (std::abs(total - 1.0) > 1e-12) throw Error(ErrorKind::InvalidInput, "weights must sum to 1");
    return moments_with_weights(samples, weights);
}

}  // namespace drig
