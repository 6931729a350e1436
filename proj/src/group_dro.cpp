#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "drig/estimators.hpp"

namespace drig {

namespace {

struct MixtureFit {
    Vector b;
    Vector losses;
    double dual = 0.0;
    double rcond = 0.0;
};

MixtureFit best_response(const MomentSet& moments, const Vector& lambda) {
    const Eigen::Index p = moments.front().p();
    Matrix gx = Matrix::Zero(p, p);
    Vector gxy = Vector::Zero(p);
    for (std::size_t e = 0; e < moments.size(); ++e) {
        const auto i = static_cast<Eigen::Index>(e);
        gx += lambda(i) * moments[e].gram_x();
        gxy += lambda(i) * moments[e].gram_xy();
    }
    const auto sol = linalg::solve_spd(gx, gxy, ErrorKind::NonPdSystem, "group DRO mixture Gram");
    MixtureFit fit;
    fit.b = sol.x;
    fit.rcond = sol.rcond;
    fit.losses.resize(static_cast<Eigen::Index>(moments.size()));
    for (std::size_t e = 0; e < moments.size(); ++e) {
        fit.losses(static_cast<Eigen::Index>(e)) = evaluate_mse(fit.b, moments[e]);
    }
    fit.dual = lambda.dot(fit.losses);
    return fit;
}

}  // namespace

// Exponentiated-gradient ascent on the concave dual phi(lambda) = min_b sum_e
// lambda_e MSE_e(b). Losses are rescaled by the largest environment response
// energy so the step is unit free. The step starts at options.step and adapts:
// it doubles after an ascent step and halves when phi would decrease.
FitResult group_dro(const MomentSet& moments, const GroupDroOptions& options) {
    check_moments(moments);
    if (!(options.tolerance > 0.0) || !(options.step > 0.0) || options.max_iters == 0) {
        throw Error(ErrorKind::InvalidInput, "group DRO options must be positive");
    }
    const auto envs = static_cast<Eigen::Index>(moments.size());
    double scale = 0.0;
    for (const auto& m : moments) scale = std::max(scale, m.gram_y());
    if (!(scale > 0.0)) scale = 1.0;

    Vector lambda = Vector::Constant(envs, 1.0 / static_cast<double>(envs));
    MixtureFit current = best_response(moments, lambda);
    Vector best_b = current.b;
    double best_primal = current.losses.maxCoeff();
    double best_dual = current.dual;
    double best_rcond = current.rcond;
    double eta = options.step;

    for (std::size_t it = 1; it <= options.max_iters; ++it) {
        const double gap = best_primal - best_dual;
        if (gap <= options.tolerance * std::max(1.0, std::abs(best_primal))) {
            FitResult fit;
            fit.b = best_b;
            fit.objective = best_primal;
            fit.condition = std::clamp(best_rcond, 0.0, 1.0);
            fit.method = Method::group_dro;
            fit.grad_invariance_residual = gradient_invariance_residual(fit.b, moments);
            return fit;
        }

        Vector logits = lambda.array().max(1e-300).log().matrix() + (eta / scale) * current.losses;
        logits.array() -= logits.maxCoeff();
        Vector proposal = logits.array().exp().matrix();
        proposal /= proposal.sum();

        MixtureFit next;
        bool accepted = false;
        try {
            next = best_response(moments, proposal);
            accepted = next.dual >= current.dual;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::NonPdSystem) throw;
        }
        if (!accepted) {
            eta *= 0.5;
            if (eta < 1e-300) break;
            continue;
        }
        lambda = proposal;
        current = std::move(next);
        eta = std::min(eta * 2.0, 1e12);

        const double primal = current.losses.maxCoeff();
        if (primal < best_primal) {
            best_primal = primal;
            best_b = current.b;
            best_rcond = current.rcond;
        }
        best_dual = std::max(best_dual, current.dual);
    }

    std::ostringstream os;
    os << "duality gap " << best_primal - best_dual << " after " << options.max_iters << " iterations";
    throw Error(ErrorKind::NoConvergence, os.str());
}

}  // namespace drig
