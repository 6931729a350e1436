#include <algorithm>
#include <cmath>
#include <numeric>

#include "drig/experiments.hpp"
#include "drig/random.hpp"

namespace drig {

namespace {

Matrix random_gram(Rng& rng, Eigen::Index d) {
    const Matrix s = uniform01(rng, d, d);
    return s * s.transpose();
}

Vector unit_mean(Rng& rng, Eigen::Index d, bool zero_last) {
    Vector mu = uniform01(rng, d, 1).col(0);
    if (zero_last) mu(d - 1) = 0.0;
    return mu / mu.norm();
}

Matrix unit_cov(Rng& rng, Eigen::Index d, bool zero_last) {
    Matrix s = random_gram(rng, d);
    if (zero_last) {
        s.row(d - 1).setZero();
        s.col(d - 1).setZero();
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
    return s / eig.eigenvalues().maxCoeff();
}

}  // namespace

RandomInstance random_instance(const RandomInstanceSpec& rs, std::uint64_t seed) {
    if (rs.p < 1) throw Error(ErrorKind::InvalidInput, "p must be positive");
    if (!(rs.edge_prob >= 0.0 && rs.edge_prob <= 1.0)) {
        throw Error(ErrorKind::InvalidInput, "edge probability must lie in [0, 1]");
    }
    const Eigen::Index d = rs.p + 1;
    Rng rng(seed);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), rng);

    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_real_distribution<double> magnitude(0.25, 1.0);
    Matrix b = Matrix::Zero(d, d);
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (std::size_t j = i + 1; j < order.size(); ++j) {
            if (coin(rng) < rs.edge_prob) {
                const double sign = coin(rng) < 0.5 ? -1.0 : 1.0;
                b(order[j], order[i]) = sign * magnitude(rng);
            }
        }
    }

    RandomInstance out;
    out.spec.p = rs.p;
    out.spec.B = b;
    out.spec.noise_cov = random_gram(rng, d);

    const bool zero_last = !rs.intervene_y;
    const double weight = 1.0 / static_cast<double>(rs.n_train_envs + 1);
    out.spec.environments.push_back({Vector::Zero(d), Matrix::Zero(d, d), weight});
    for (std::size_t e = 0; e < rs.n_train_envs; ++e) {
        Vector mu = rs.mean_factor * unit_mean(rng, d, zero_last);
        Matrix cov = rs.cov_factor * unit_cov(rng, d, zero_last);
        out.spec.environments.push_back({std::move(mu), std::move(cov), weight});
    }
    for (std::size_t j = 0; j < rs.n_test_envs; ++j) {
        Vector mu = unit_mean(rng, d, zero_last);
        Matrix cov = unit_cov(rng, d, zero_last);
        out.test_laws.push_back({std::move(mu), std::move(cov)});
    }
    return out;
}

ScmSpec example1_spec() {
    ScmSpec spec;
    spec.p = 1;
    spec.B = Matrix::Zero(2, 2);
    spec.B(1, 0) = 2.0;
    spec.noise_cov.resize(2, 2);
    spec.noise_cov << 1.0, 0.5, 0.5, 1.0;
    InterventionLaw shift{Vector::Zero(2), Matrix::Zero(2, 2), 0.5};
    shift.mu(0) = 0.5;
    shift.cov(0, 0) = 1.0;
    spec.environments = {{Vector::Zero(2), Matrix::Zero(2, 2), 0.5}, shift};
    return spec;
}

ScmSpec example2_spec() {
    ScmSpec spec = example1_spec();
    auto& shift = spec.environments[1];
    shift.mu << 0.5, 0.1;
    shift.cov << 1.0, 0.1, 0.1, 0.05;
    return spec;
}

Matrix sample_from_moments(const EnvironmentMoments& env, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw Error(ErrorKind::InvalidInput, "sample size must be at least 1");
    Rng rng(seed);
    const Matrix root = linalg::sym_sqrt(env.covariance());
    Matrix z = standard_normal(rng, static_cast<Eigen::Index>(n), env.gram.rows()) * root;
    z.rowwise() += env.mean.transpose();
    return z;
}

}  // namespace drig
