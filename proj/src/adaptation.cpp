#include "drig/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "drig/kernels.hpp"

namespace drig {

namespace {

void check_test_dims(const Matrix& sigma_x, const MomentSet& moments) {
    const Eigen::Index p = moments.front().p();
    if (sigma_x.rows() != p || sigma_x.cols() != p) {
        throw Error(ErrorKind::InvalidInput, "test covariate Gram must be p x p");
    }
    if (!sigma_x.allFinite()) throw Error(ErrorKind::InvalidInput, "test covariate Gram is not finite");
}

Matrix from_eigen(const Eigen::SelfAdjointEigenSolver<Matrix>& eig, const Vector& values) {
    Matrix out = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

// Inverse square root of a Gram that must be positive definite.
Matrix test_gram_inv_sqrt(const Matrix& sigma_x) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (sigma_x + sigma_x.transpose()));
    const Vector values = eig.eigenvalues();
    const double largest = values.cwiseAbs().maxCoeff();
    if (!(values.minCoeff() > 1e-12 * largest) || !(largest > 0.0)) {
        std::ostringstream os;
        os << "test covariate Gram has smallest eigenvalue " << values.minCoeff();
        throw Error(ErrorKind::SingularTestGram, os.str());
    }
    return from_eigen(eig, values.cwiseSqrt().cwiseInverse());
}

}  // namespace

TestDomainInfo population_test_info(const EnvironmentMoments& test) {
    TestDomainInfo info;
    info.sigma_x = test.gram_x();
    info.sigma_xy = test.gram_xy();
    return info;
}

TestDomainInfo sample_test_info(const Matrix& labeled, const Matrix& unlabeled, const Vector& center) {
    const Eigen::Index d = center.size();
    const Eigen::Index p = d - 1;
    if (labeled.rows() == 0) throw Error(ErrorKind::EmptyEnvironment, "labeled test sample is empty");
    if (labeled.cols() != d) throw Error(ErrorKind::InvalidInput, "labeled test sample needs p+1 columns");
    if (unlabeled.rows() > 0 && unlabeled.cols() != p) {
        throw Error(ErrorKind::InvalidInput, "unlabeled test sample needs p columns");
    }
    Matrix lab = labeled;
    lab.rowwise() -= center.transpose();
    const auto n_l = static_cast<double>(lab.rows());

    TestDomainInfo info;
    const Matrix lab_gram = kernels::cross_product(lab) / n_l;
    info.sigma_xy = lab_gram.col(p).head(p);
    info.n_l = static_cast<std::size_t>(lab.rows());
    if (unlabeled.rows() > 0) {
        Matrix unl = unlabeled;
        unl.rowwise() -= center.head(p).transpose();
        info.sigma_x = kernels::cross_product(unl) / static_cast<double>(unl.rows());
        info.n_u = static_cast<std::size_t>(unl.rows());
    } else {
        info.sigma_x = lab_gram.topLeftCorner(p, p);
        info.n_u = info.n_l;
    }
    return info;
}

Matrix gamma_star_x(const Matrix& sigma_x, const MomentSet& moments, const AdaptOptions& options) {
    check_moments(moments);
    check_test_dims(sigma_x, moments);
    const Matrix sigma = linalg::checked_psd(sigma_x, "test covariate Gram");
    const Matrix g0x = moments.front().gram_x();

    Eigen::SelfAdjointEigenSolver<Matrix> het(heterogeneity(moments).x());
    Vector het_values = het.eigenvalues();
    const double largest = het_values.maxCoeff();
    const double tol = 1e-10 * std::max(het_values.cwiseAbs().maxCoeff(), g0x.diagonal().maxCoeff());
    if (!(largest > tol) || (!options.project && !(het_values.minCoeff() > tol))) {
        std::ostringstream os;
        os << "Delta_x has smallest eigenvalue " << het_values.minCoeff() << " (tolerance " << tol << ")";
        throw Error(ErrorKind::SingularHeterogeneity, os.str());
    }
    if (options.project) het_values = het_values.cwiseMax(1e-8 * largest);

    Eigen::SelfAdjointEigenSolver<Matrix> diff(0.5 * ((sigma - g0x) + (sigma - g0x).transpose()));
    const double slack = linalg::psd_slack(sigma);
    if (!options.project && diff.eigenvalues().minCoeff() < -slack) {
        std::ostringstream os;
        os << "Sigma_x - G0_x has eigenvalue " << diff.eigenvalues().minCoeff() << " below -" << slack;
        throw Error(ErrorKind::TestBelowReference, os.str());
    }
    const Matrix excess = from_eigen(diff, diff.eigenvalues().cwiseMax(0.0));

    const Matrix root = from_eigen(het, het_values.cwiseSqrt());
    const Matrix inv_root = from_eigen(het, het_values.cwiseSqrt().cwiseInverse());
    const Matrix middle = linalg::sym_sqrt(root * excess * root);
    const Matrix gamma = inv_root * middle * inv_root;
    return 0.5 * (gamma + gamma.transpose());
}

double gamma_star_y(const Matrix& sigma_x, const Vector& sigma_xy, const Matrix& gamma_x,
                    const MomentSet& moments) {
    check_moments(moments);
    check_test_dims(sigma_x, moments);
    if (sigma_xy.size() != sigma_x.rows() || gamma_x.rows() != sigma_x.rows() ||
        gamma_x.cols() != sigma_x.rows()) {
        throw Error(ErrorKind::InvalidInput, "test cross moment or Gamma_x has the wrong dimension");
    }
    const Matrix s = test_gram_inv_sqrt(sigma_x);
    const Vector a = s * gamma_x * heterogeneity(moments).xy();
    const double norm2 = a.squaredNorm();
    if (std::sqrt(norm2) < 1e-12) {
        throw Error(ErrorKind::DegenerateDirection, "Sigma_x^{-1/2} Gamma_x Delta_xy vanishes");
    }
    return a.dot(s * (sigma_xy - moments.front().gram_xy())) / norm2;
}

FitResult drig_a_adaptive(const MomentSet& moments, const TestDomainInfo& info, const AdaptOptions& options) {
    const Matrix gx = gamma_star_x(info.sigma_x, moments, options);
    const double gy = gamma_star_y(info.sigma_x, info.sigma_xy, gx, moments);
    const GammaMatrix gamma{gx, gy};

    FitResult fit;
    if (options.project) {
        // By construction G^0_x + Gamma_x Delta_x Gamma_x = Sigma_x on the projected problem.
        const Vector rhs = moments.front().gram_xy() + gy * gx * heterogeneity(moments).xy();
        const auto sol = linalg::solve_spd(info.sigma_x, rhs, ErrorKind::SingularTestGram, "test covariate Gram");
        fit.b = sol.x;
        fit.condition = sol.rcond;
        fit.objective = drig_a_objective(fit.b, moments, gamma);
        fit.grad_invariance_residual = gradient_invariance_residual(fit.b, moments);
    } else {
        fit = detail::drig_a_closed_form(moments, gamma);
    }
    fit.method = Method::drig_a_adaptive;
    fit.gamma_matrix = gamma;
    return fit;
}

FitResult test_ols(const TestDomainInfo& info) {
    if (info.sigma_x.rows() != info.sigma_xy.size() || info.sigma_x.cols() != info.sigma_xy.size()) {
        throw Error(ErrorKind::InvalidInput, "test moments disagree in dimension");
    }
    const auto sol = linalg::solve_spd(info.sigma_x, info.sigma_xy, ErrorKind::SingularTestGram,
                                       "test covariate Gram");
    FitResult fit;
    fit.b = sol.x;
    fit.condition = std::clamp(sol.rcond, 0.0, 1.0);
    fit.objective = -fit.b.dot(info.sigma_xy);
    fit.method = Method::test_ols;
    return fit;
}

}  // namespace drig
