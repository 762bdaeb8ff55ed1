#include "ptlab/erm.hpp"

#include <cmath>
#include <stdexcept>

#include "ptlab/mvn.hpp"

namespace ptlab {

namespace {

Eigen::VectorXd project_ball(Eigen::VectorXd v, double radius) {
    const double norm = v.norm();
    if (norm > radius) v *= radius / norm;
    return v;
}

}  // namespace

ErmResult ols_on_features(const Eigen::MatrixXd& features, const Eigen::VectorXd& y) {
    if (features.rows() != y.size())
        throw std::invalid_argument("ols: feature rows and labels differ in count");
    const Eigen::MatrixXd gram = features.transpose() * features;
    const Eigen::VectorXd moment = features.transpose() * y;
    ErmResult result;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    const double rcond_probe =
        gram.diagonal().maxCoeff() <= 0.0
            ? 0.0
            : ldlt.vectorD().minCoeff() / std::max(1e-300, ldlt.vectorD().maxCoeff());
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() && rcond_probe > 1e-13) {
        result.beta = ldlt.solve(moment);
    } else {
        result.beta = features.completeOrthogonalDecomposition().solve(y);
        result.used_pseudo_inverse = true;
    }
    result.objective = (y - features * result.beta).squaredNorm() / static_cast<double>(y.size());
    return result;
}

double truncated_objective(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& beta, double truncation_level) {
    const Eigen::VectorXd residual = y - features * beta;
    double total = 0.0;
    for (Eigen::Index j = 0; j < residual.size(); ++j)
        total += std::min(residual[j] * residual[j], truncation_level);
    return total / static_cast<double>(residual.size());
}

ErmResult truncated_erm(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                        double truncation_level, double radius, const ErmConfig& config,
                        RngStream rng) {
    if (!(truncation_level > 0.0)) throw std::invalid_argument("truncated_erm: L must be positive");
    if (!(radius > 0.0)) throw std::invalid_argument("truncated_erm: radius must be positive");
    const Eigen::Index n = features.rows(), r = features.cols();
    if (n != y.size()) throw std::invalid_argument("truncated_erm: shape mismatch");

    const Eigen::MatrixXd gram = features.transpose() * features / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    const double lip = std::max(eig.eigenvalues().maxCoeff(), 1e-12);
    const double step = 1.0 / (2.0 * lip);

    const ErmResult ols = ols_on_features(features, y);
    const Eigen::VectorXd ols_projected = project_ball(ols.beta, radius);

    ErmResult best;
    best.beta = ols_projected;
    best.objective = truncated_objective(features, y, ols_projected, truncation_level);
    best.converged = true;

    bool any_converged = false;
    for (int restart = 0; restart < std::max(1, config.restarts); ++restart) {
        Eigen::VectorXd beta;
        if (restart == 0) {
            beta = ols_projected;
        } else {
            Eigen::MatrixXd z(1, r);
            fill_standard_normal(z, rng);
            beta = project_ball(z.row(0).transpose() * (radius / std::sqrt(std::max<double>(1, r))),
                                radius);
        }
        bool converged = false;
        for (int it = 0; it < config.iterations; ++it) {
            // Capped residuals are flat: only points below the cap contribute.
            const Eigen::VectorXd residual = y - features * beta;
            Eigen::VectorXd weight = Eigen::VectorXd::Zero(n);
            for (Eigen::Index j = 0; j < n; ++j)
                if (residual[j] * residual[j] < truncation_level) weight[j] = residual[j];
            const Eigen::VectorXd grad = -2.0 / static_cast<double>(n) * (features.transpose() * weight);
            const Eigen::VectorXd next = project_ball(beta - step * grad, radius);
            const double move = (next - beta).norm();
            beta = next;
            const double obj = truncated_objective(features, y, beta, truncation_level);
            if (obj < best.objective) {
                best.objective = obj;
                best.beta = beta;
            }
            if (move < config.step_tol) {
                converged = true;
                break;
            }
        }
        any_converged = any_converged || converged;
    }
    best.converged = any_converged;
    best.used_pseudo_inverse = ols.used_pseudo_inverse;
    return best;
}

}  // namespace ptlab
