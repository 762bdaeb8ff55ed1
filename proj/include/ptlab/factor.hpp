#pragma once

#include <Eigen/Dense>

#include "ptlab/divergence.hpp"
#include "ptlab/erm.hpp"
#include "ptlab/mvn.hpp"
#include "ptlab/rng.hpp"

namespace ptlab {

// Ground-truth loading matrix for x = B z + mu with z ~ N(0, I_r), mu ~ N(0, I_d).
struct FactorModel {
    Eigen::MatrixXd B;       // d x r
    double norm_bound = 0.0; // spectral bound D, ||B||_2 <= D

    int d() const { return static_cast<int>(B.rows()); }
    int r() const { return static_cast<int>(B.cols()); }
};
void validate_factor(const FactorModel& model);

// Downstream regression y = beta' z + nu with nu ~ N(0, noise_std^2).
struct RegressionBeta {
    Eigen::VectorXd beta;
    double norm_bound = 0.0;
    double noise_std = 1.0;
};
void validate_regression(const RegressionBeta& psi);

enum class FactorErm { truncated_projected, fast_rate_ols };

struct FactorFitReport {
    Eigen::MatrixXd B_hat;
    Eigen::VectorXd beta_hat;
    int clamped_eigencount = 0;
    FactorErm erm_method = FactorErm::fast_rate_ols;
    bool ols_pseudo_inverse = false;
    bool erm_converged = true;
};

Eigen::MatrixXd sample_factor_unlabeled(const FactorModel& model, Eigen::Index m, RngStream& rng);
// Rows (x, y) with a shared latent z per row; last column is y.
Eigen::MatrixXd sample_factor_labeled(const FactorModel& model, const RegressionBeta& psi,
                                      Eigen::Index n, RngStream& rng);

// Eigen-truncation MLE: B_hat = U_{1:r} diag(sqrt(max(lambda_j - 1, 0))).
// Column signs are fixed so the first nonzero entry is nonnegative.
Eigen::MatrixXd mle_factor(const Eigen::MatrixXd& unlabeled, int r, int* clamped_count = nullptr);
Eigen::MatrixXd mle_factor_from_covariance(const Eigen::MatrixXd& sigma_hat, int r,
                                           int* clamped_count = nullptr);

// Feature map C = B'(BB'+I)^{-1} computed as (I_r + B'B)^{-1} B' (r x d).
Eigen::MatrixXd factor_feature_map(const Eigen::MatrixXd& B);

// Bayes predictor beta' B' (BB'+I)^{-1} x under (B, beta).
double predictor_factor(const Eigen::MatrixXd& B, const Eigen::VectorXd& beta,
                        const Eigen::VectorXd& x);

// MLE objective log det(BB'+I) + tr(sigma_hat (BB'+I)^{-1}); minimized by mle_factor.
double factor_mle_objective(const Eigen::MatrixXd& sigma_hat, const Eigen::MatrixXd& B);

Eigen::VectorXd erm_beta_ols(const Eigen::MatrixXd& B_hat, const Eigen::MatrixXd& labeled,
                             bool* used_pseudo_inverse = nullptr);
Eigen::VectorXd erm_beta_truncated(const Eigen::MatrixXd& B_hat, const Eigen::MatrixXd& labeled,
                                   double truncation_level, double radius, const ErmConfig& config,
                                   RngStream rng, bool* converged = nullptr);

// Both phases on given samples: eigen-truncation MLE, then the requested ERM
// on the induced features. truncation_level <= 0 selects (D^2+1)^3 log n.
FactorFitReport fit_factor(const Eigen::MatrixXd& unlabeled, const Eigen::MatrixXd& labeled, int r,
                           FactorErm method, double truncation_level, double radius,
                           const ErmConfig& config, RngStream rng);

// Closed-form squared-loss excess risk of the linear-in-x predictor w'x
// against the Bayes predictor of (B*, beta*): v'(B*B*'+I)v with v = C*'beta* - w.
double factor_linear_excess(const Eigen::MatrixXd& B_star, const Eigen::VectorXd& beta_star,
                            const Eigen::VectorXd& w);
double excess_risk_factor_closed(const Eigen::MatrixXd& B_star, const Eigen::VectorXd& beta_star,
                                 const Eigen::MatrixXd& B_hat, const Eigen::VectorXd& beta_hat);

// Frobenius-optimal orthogonal alignment argmin_O ||B O - B*||_F from the SVD of B'B*.
Eigen::MatrixXd align_rotation_factor(const Eigen::MatrixXd& B, const Eigen::MatrixXd& B_star);

// Least squares of y on raw x; minimum-norm solution when n < d.
Eigen::VectorXd supervised_baseline_factor(const Eigen::MatrixXd& labeled,
                                           bool* used_pseudo_inverse = nullptr);

struct InformativeReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double kappa_used = 0.0;
    double lhs_std_error = 0.0;
    double rhs_std_error = 0.0;
    bool holds = false;
};

// Monte-Carlo check that joint (x,z) TV after optimal rotation is bounded by
// kappa times the marginal x TV, kappa = c1 (sigma*_max + 1)^4 / sigma*_min^3.
InformativeReport verify_informative_factor(const Eigen::MatrixXd& B, const Eigen::MatrixXd& B_star,
                                            Eigen::Index mc_count, RngStream rng, double c1 = 500.0,
                                            int jobs = 1);

// Log-density and sampler of the joint Gaussian law of (x, z) under B.
GaussianDensity factor_joint_density(const Eigen::MatrixXd& B);
GaussianDensity factor_marginal_density(const Eigen::MatrixXd& B);
SamplerFn factor_joint_sampler(const Eigen::MatrixXd& B);
SamplerFn factor_marginal_sampler(const Eigen::MatrixXd& B);

}  // namespace ptlab
