#include "drig/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace drig::linalg {

double psd_slack(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    const double scale = std::max(std::abs(a.trace()), a.cwiseAbs().maxCoeff());
    return 1e-10 * scale;
}

bool is_symmetric(const Matrix& a, double rel_tol) {
    if (a.rows() != a.cols()) return false;
    if (a.size() == 0) return true;
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

Matrix checked_psd(const Matrix& a, std::string_view what) {
    if (a.rows() != a.cols()) {
        throw Error(ErrorKind::InvalidInput, std::string(what) + " is not square");
    }
    if (!is_symmetric(a)) {
        throw Error(ErrorKind::NotPsd, std::string(what) + " is not symmetric");
    }
    if (a.size() == 0) return a;
    const Matrix sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    const double slack = psd_slack(sym);
    Vector values = eig.eigenvalues();
    if (values.minCoeff() < -slack) {
        std::ostringstream os;
        os << what << " has eigenvalue " << values.minCoeff() << " below -" << slack;
        throw Error(ErrorKind::NotPsd, os.str());
    }
    if (values.minCoeff() >= 0.0) return sym;
    values = values.cwiseMax(0.0);
    Matrix out = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

bool is_psd(const Matrix& a) {
    if (a.size() == 0) return true;
    if (!is_symmetric(a)) return false;
    return min_eigenvalue(a) >= -psd_slack(a);
}

bool psd_dominates(const Matrix& big, const Matrix& small) {
    const Matrix diff = big - small;
    const double scale =
        std::max({std::abs(big.trace()) + std::abs(small.trace()), big.cwiseAbs().maxCoeff(),
                  small.cwiseAbs().maxCoeff()});
    return min_eigenvalue(diff) >= -1e-10 * scale;
}

double min_eigenvalue(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    const Matrix sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

Matrix sym_sqrt(const Matrix& a) {
    const Matrix sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    Matrix out = eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

Matrix sym_inv_sqrt(const Matrix& a) {
    const Matrix sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    const Vector root = eig.eigenvalues().cwiseSqrt().cwiseInverse();
    Matrix out = eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

double rcond(const Matrix& a) {
    if (a.size() == 0) return 1.0;
    Eigen::JacobiSVD<Matrix> svd(a);
    const auto& s = svd.singularValues();
    const double largest = s.maxCoeff();
    if (largest <= 0.0) return 0.0;
    return s.minCoeff() / largest;
}

double rcond_sym(const Matrix& a) {
    if (a.size() == 0) return 1.0;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
    const Vector abs_values = eig.eigenvalues().cwiseAbs();
    const double largest = abs_values.maxCoeff();
    if (largest <= 0.0) return 0.0;
    return std::clamp(eig.eigenvalues().minCoeff() / largest, 0.0, 1.0);
}

SpdSolution solve_spd(const Matrix& f, const Vector& g, ErrorKind failure, std::string_view what) {
    const Matrix sym = 0.5 * (f + f.transpose());
    const double max_diag = sym.diagonal().size() ? sym.diagonal().maxCoeff() : 0.0;
    const double smallest = min_eigenvalue(sym);
    if (!(max_diag > 0.0) || !(smallest > 1e-10 * max_diag)) {
        std::ostringstream os;
        os << what << " is not positive definite (min eigenvalue " << smallest
           << ", max diagonal " << max_diag << ")";
        throw Error(failure, os.str());
    }
    Eigen::LLT<Matrix> llt(sym);
    if (llt.info() != Eigen::Success) {
        throw Error(failure, std::string(what) + " Cholesky factorization failed");
    }
    return {llt.solve(g), rcond_sym(sym)};
}

}  // namespace drig::linalg
