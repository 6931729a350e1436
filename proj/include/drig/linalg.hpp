#pragma once

#include <string_view>

#include <Eigen/Dense>

#include "drig/error.hpp"

namespace drig {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace linalg {

/// Absolute eigenvalue slack used by every PSD test: 1e-10 times the larger
/// of the trace magnitude and the largest entry magnitude.
double psd_slack(const Matrix& a);

bool is_symmetric(const Matrix& a, double rel_tol = 1e-10);

/// Symmetrizes `a`, rejects it if an eigenvalue falls below -psd_slack(a),
/// and clamps the remaining small negative eigenvalues to zero.
Matrix checked_psd(const Matrix& a, std::string_view what);

bool is_psd(const Matrix& a);

/// True when big - small is PSD up to 1e-10 times the combined trace scale.
bool psd_dominates(const Matrix& big, const Matrix& small);

double min_eigenvalue(const Matrix& a);

/// Symmetric square root; negative eigenvalues are clamped to zero.
Matrix sym_sqrt(const Matrix& a);

/// Inverse symmetric square root. The caller guarantees positive definiteness.
Matrix sym_inv_sqrt(const Matrix& a);

/// Ratio of the smallest to the largest singular value (0 for the zero matrix).
double rcond(const Matrix& a);

/// Eigenvalue-based reciprocal condition number of a symmetric matrix,
/// clamped into [0, 1].
double rcond_sym(const Matrix& a);

/// Solves F b = g for symmetric F. F must be positive definite with its
/// smallest eigenvalue above 1e-10 times its largest diagonal entry;
/// otherwise an Error of `failure` kind is thrown.
struct SpdSolution {
    Vector x;
    double rcond = 0.0;
};
SpdSolution solve_spd(const Matrix& f, const Vector& g, ErrorKind failure, std::string_view what);

}  // namespace linalg
}  // namespace drig
