#pragma once

#include <Eigen/Dense>

#include "ptlab/rng.hpp"

namespace ptlab {

struct ErmConfig {
    int iterations = 500;
    int restarts = 5;
    double step_tol = 1e-10;
};

struct ErmResult {
    Eigen::VectorXd beta;
    double objective = 0.0;
    bool converged = true;
    bool used_pseudo_inverse = false;
};

// Exact least squares of y on feature rows U (pseudo-inverse when the normal
// equations are rank deficient, flagged).
ErmResult ols_on_features(const Eigen::MatrixXd& features, const Eigen::VectorXd& y);

// Mean truncated squared loss (1/n) sum min((y_j - beta'u_j)^2, L).
double truncated_objective(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& beta, double truncation_level);

// Approximate minimizer of the truncated objective over ||beta|| <= radius by
// projected gradient descent, restarted from the projected OLS solution and
// random points. The returned iterate never scores worse than projected OLS.
ErmResult truncated_erm(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                        double truncation_level, double radius, const ErmConfig& config,
                        RngStream rng);

}  // namespace ptlab
