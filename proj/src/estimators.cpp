#include "drig/estimators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace drig {

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 10> kMethodTags{{
    {Method::drig, "drig"},
    {Method::drig_inf, "drig_inf"},
    {Method::anchor, "anchor"},
    {Method::drig_a, "drig_a"},
    {Method::causal_dantzig, "causal_dantzig"},
    {Method::group_dro, "group_dro"},
    {Method::ols_ref, "ols_ref"},
    {Method::ols_pooled, "ols_pooled"},
    {Method::drig_a_adaptive, "drig_a_adaptive"},
    {Method::test_ols, "test_ols"},
}};

void check_gamma(double gamma) {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
        throw Error(ErrorKind::InvalidInput, "gamma must be a finite non-negative number");
    }
}

}  // namespace

std::string_view to_string(Method m) {
    for (const auto& [method, tag] : kMethodTags) {
        if (method == m) return tag;
    }
    return "unknown";
}

std::optional<Method> method_from_string(std::string_view tag) {
    for (const auto& [method, name] : kMethodTags) {
        if (name == tag) return method;
    }
    return std::nullopt;
}

Matrix GammaMatrix::full() const {
    const Eigen::Index p = gamma_x.rows();
    Matrix out = Matrix::Zero(p + 1, p + 1);
    out.topLeftCorner(p, p) = gamma_x;
    out(p, p) = gamma_y;
    return out;
}

void check_moments(const MomentSet& moments) {
    if (moments.empty()) throw Error(ErrorKind::EmptyEnvironment, "no environments supplied");
    const Eigen::Index d = moments.front().gram.rows();
    if (d < 2) throw Error(ErrorKind::InvalidInput, "moments need at least one covariate");
    double total = 0.0;
    for (const auto& m : moments) {
        if (m.gram.rows() != d || m.gram.cols() != d || m.mean.size() != d) {
            throw Error(ErrorKind::InvalidInput, "environment moments disagree in dimension");
        }
        if (!m.gram.allFinite() || !m.mean.allFinite()) {
            throw Error(ErrorKind::InvalidInput, "environment moments contain non-finite values");
        }
        if (!linalg::is_symmetric(m.gram, 1e-9)) {
            throw Error(ErrorKind::InvalidInput, "environment Gram matrix is not symmetric");
        }
        if (!(m.weight > 0.0)) throw Error(ErrorKind::InvalidInput, "environment weights must be positive");
        total += m.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorKind::InvalidInput, "environment weights must sum to 1");
}

Heterogeneity heterogeneity(const MomentSet& moments) {
    const Matrix& g0 = moments.front().gram;
    Matrix delta = Matrix::Zero(g0.rows(), g0.cols());
    for (const auto& m : moments) delta += m.weight * (m.gram - g0);
    return {0.5 * (delta + delta.transpose())};
}

double evaluate_mse(const Vector& b, const EnvironmentMoments& env) {
    if (b.size() != env.p()) throw Error(ErrorKind::InvalidInput, "coefficient dimension mismatch");
    return env.gram_y() - 2.0 * b.dot(env.gram_xy()) + b.dot(env.gram_x() * b);
}

double gradient_invariance_residual(const Vector& b, const MomentSet& moments) {
    const Heterogeneity h = heterogeneity(moments);
    return (2.0 * (h.x() * b - h.xy())).norm();
}

double drig_objective(const Vector& b, const MomentSet& moments, double gamma) {
    const double reference = evaluate_mse(b, moments.front());
    double shift = 0.0;
    for (const auto& m : moments) shift += m.weight * (evaluate_mse(b, m) - reference);
    return reference + gamma * shift;
}

double anchor_objective(const Vector& b, const MomentSet& moments, double gamma) {
    const Eigen::Index p = moments.front().p();
    double pooled = 0.0;
    double mean_term = 0.0;
    for (const auto& m : moments) {
        pooled += m.weight * evaluate_mse(b, m);
        const double residual_mean = m.mean(p) - b.dot(m.mean.head(p));
        mean_term += m.weight * residual_mean * residual_mean;
    }
    return pooled + (gamma - 1.0) * mean_term;
}

double drig_a_objective(const Vector& b, const MomentSet& moments, const GammaMatrix& gamma) {
    const Eigen::Index p = moments.front().p();
    Vector r(p + 1);
    r.head(p) = -b;
    r(p) = 1.0;
    const Vector shaped = gamma.full() * r;
    return evaluate_mse(b, moments.front()) + shaped.dot(heterogeneity(moments).full * shaped);
}

namespace {

FitResult finish(FitResult fit, const MomentSet& moments) {
    fit.grad_invariance_residual = gradient_invariance_residual(fit.b, moments);
    fit.condition = std::clamp(fit.condition, 0.0, 1.0);
    if (!fit.b.allFinite()) throw Error(ErrorKind::NonPdSystem, "solution is not finite");
    return fit;
}

}  // namespace

FitResult drig(const MomentSet& moments, double gamma) {
    check_moments(moments);
    check_gamma(gamma);
    const auto& ref = moments.front();
    const Heterogeneity h = heterogeneity(moments);
    const Matrix f = ref.gram_x() + gamma * h.x();
    const Vector g = ref.gram_xy() + gamma * h.xy();
    const auto sol = linalg::solve_spd(f, g, ErrorKind::NonPdSystem, "DRIG normal matrix");

    FitResult fit;
    fit.b = sol.x;
    fit.condition = sol.rcond;
    fit.objective = drig_objective(fit.b, moments, gamma);
    fit.method = Method::drig;
    fit.gamma = gamma;
    return finish(std::move(fit), moments);
}

FitResult ols_reference(const MomentSet& moments) {
    FitResult fit = drig(moments, 0.0);
    fit.method = Method::ols_ref;
    return fit;
}

FitResult ols_pooled(const MomentSet& moments) {
    FitResult fit = drig(moments, 1.0);
    fit.method = Method::ols_pooled;
    return fit;
}

FitResult drig_infinity(const MomentSet& moments) {
    check_moments(moments);
    const auto& ref = moments.front();
    const Heterogeneity h = heterogeneity(moments);
    const Matrix dx = h.x();
    const Vector dxy = h.xy();
    const Matrix g0x = ref.gram_x();
    const Vector g0 = ref.gram_xy();

    Eigen::SelfAdjointEigenSolver<Matrix> eig(dx);
    const Vector values = eig.eigenvalues();
    const Matrix& q = eig.eigenvectors();
    const double scale = std::max({g0x.cwiseAbs().maxCoeff(), dx.cwiseAbs().maxCoeff(), 1e-300});
    const double rank_tol = 1e-10 * std::max(values.cwiseAbs().maxCoeff(), g0x.diagonal().maxCoeff());

    std::vector<Eigen::Index> range;
    std::vector<Eigen::Index> null;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        (std::abs(values(i)) > rank_tol ? range : null).push_back(i);
    }

    Vector b_part = Vector::Zero(dx.rows());
    double smallest = std::numeric_limits<double>::infinity();
    double largest = 0.0;
    for (Eigen::Index i : range) {
        b_part += q.col(i) * (q.col(i).dot(dxy) / values(i));
        smallest = std::min(smallest, std::abs(values(i)));
        largest = std::max(largest, std::abs(values(i)));
    }
    double condition = range.empty() ? 1.0 : smallest / largest;

    Vector b = b_part;
    if (!null.empty()) {
        Matrix basis(dx.rows(), static_cast<Eigen::Index>(null.size()));
        for (std::size_t k = 0; k < null.size(); ++k) basis.col(static_cast<Eigen::Index>(k)) = q.col(null[k]);
        const double off_range = (basis.transpose() * dxy).norm();
        const double tol = std::max(1e-8 * dxy.norm(), 1e-14 * scale);
        if (off_range > tol) {
            std::ostringstream os;
            os << "Delta_xy has component " << off_range
               << " outside the column space of Delta_x (tolerance " << tol << ")";
            throw Error(ErrorKind::InconsistentInvariance, os.str());
        }
        const Matrix reduced = basis.transpose() * g0x * basis;
        const Vector rhs = basis.transpose() * (g0 - g0x * b_part);
        const Vector z = reduced.completeOrthogonalDecomposition().solve(rhs);
        b = b_part + basis * z;
        condition = std::min(condition, linalg::rcond_sym(reduced));
    }

    FitResult fit;
    fit.b = b;
    fit.condition = condition;
    fit.objective = evaluate_mse(b, ref);
    fit.method = Method::drig_inf;
    return finish(std::move(fit), moments);
}

FitResult anchor(const MomentSet& moments, double gamma) {
    check_moments(moments);
    check_gamma(gamma);
    const Eigen::Index p = moments.front().p();
    Matrix a = Matrix::Zero(p, p);
    Vector c = Vector::Zero(p);
    for (const auto& m : moments) {
        const Vector mx = m.mean.head(p);
        a += m.weight * (m.gram_x() + (gamma - 1.0) * mx * mx.transpose());
        c += m.weight * (m.gram_xy() + (gamma - 1.0) * m.mean(p) * mx);
    }
    const auto sol = linalg::solve_spd(a, c, ErrorKind::NonPdSystem, "anchor normal matrix");

    FitResult fit;
    fit.b = sol.x;
    fit.condition = sol.rcond;
    fit.objective = anchor_objective(fit.b, moments, gamma);
    fit.method = Method::anchor;
    fit.gamma = gamma;
    return finish(std::move(fit), moments);
}

FitResult causal_dantzig(const MomentSet& moments) {
    check_moments(moments);
    if (moments.size() != 2) {
        throw Error(ErrorKind::InvalidInput, "causal Dantzig needs exactly two environments");
    }
    const Matrix diff = moments[1].gram_x() - moments[0].gram_x();
    const Vector rhs = moments[1].gram_xy() - moments[0].gram_xy();
    const double rc = linalg::rcond(diff);
    if (rc < 1e-12) {
        std::ostringstream os;
        os << "Gram difference has reciprocal condition number " << rc;
        throw Error(ErrorKind::SingularDifference, os.str());
    }
    FitResult fit;
    fit.b = diff.partialPivLu().solve(rhs);
    fit.condition = rc;
    fit.objective = evaluate_mse(fit.b, moments.front());
    fit.method = Method::causal_dantzig;
    return finish(std::move(fit), moments);
}

namespace detail {

FitResult drig_a_closed_form(const MomentSet& moments, const GammaMatrix& gamma) {
    check_moments(moments);
    const auto& ref = moments.front();
    const Eigen::Index p = ref.p();
    if (gamma.gamma_x.rows() != p || gamma.gamma_x.cols() != p) {
        throw Error(ErrorKind::InvalidInput, "Gamma_x must be p x p");
    }
    if (!gamma.gamma_x.allFinite() || !std::isfinite(gamma.gamma_y)) {
        throw Error(ErrorKind::InvalidInput, "Gamma must be finite");
    }
    const Heterogeneity h = heterogeneity(moments);
    const Matrix& gx = gamma.gamma_x;
    const Matrix f = ref.gram_x() + gx * h.x() * gx.transpose();
    const Vector g = ref.gram_xy() + gamma.gamma_y * gx * h.xy();
    const auto sol = linalg::solve_spd(f, g, ErrorKind::NonPdSystem, "DRIG-A normal matrix");

    FitResult fit;
    fit.b = sol.x;
    fit.condition = sol.rcond;
    fit.objective = drig_a_objective(fit.b, moments, gamma);
    fit.method = Method::drig_a;
    fit.gamma_matrix = gamma;
    return finish(std::move(fit), moments);
}

}  // namespace detail

FitResult drig_a(const MomentSet& moments, const GammaMatrix& gamma) {
    if (!linalg::is_symmetric(gamma.gamma_x)) {
        throw Error(ErrorKind::NotPsd, "Gamma_x must be symmetric");
    }
    linalg::checked_psd(gamma.gamma_x, "Gamma_x");
    if (gamma.gamma_y < 0.0) throw Error(ErrorKind::NotPsd, "gamma_y must be non-negative");
    return detail::drig_a_closed_form(moments, gamma);
}

}  // namespace drig
