#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ptlab/divergence.hpp"
#include "ptlab/erm.hpp"
#include "ptlab/factor.hpp"
#include "ptlab/rng.hpp"

namespace ptlab {

// Linear representation f_theta(x) = theta x with ||theta||_2 <= 1; inputs are
// uniform on the unit sphere, which makes ||f_theta(x)|| <= 1 by construction.
struct ContrastiveModel {
    Eigen::MatrixXd theta;  // r x d
    double input_radius = 1.0;

    int r() const { return static_cast<int>(theta.rows()); }
    int d() const { return static_cast<int>(theta.cols()); }
};
void validate_contrastive(const ContrastiveModel& model);

struct PairData {
    Eigen::MatrixXd x;        // m x d
    Eigen::MatrixXd x_prime;  // m x d
    Eigen::VectorXd t;        // entries in {-1, +1}
};

struct ContrastiveLabeledData {
    Eigen::MatrixXd x;  // n x d
    Eigen::VectorXd y;
};

Eigen::MatrixXd sample_sphere(int d, Eigen::Index count, RngStream& rng);

// Pairs with t = +1 w.p. sigmoid(f(x)'f(x')).
PairData sample_pairs(const ContrastiveModel& model, Eigen::Index m, RngStream& rng);
// y = beta'(f(x) + mu) + nu with mu ~ N(0, I_r), nu ~ N(0, 1).
ContrastiveLabeledData sample_contrastive_labeled(const ContrastiveModel& model,
                                                  const RegressionBeta& psi, Eigen::Index n,
                                                  RngStream& rng);

// Mean pair log-likelihood (1/m) sum log sigmoid(t_i f(x_i)'f(x'_i)) and its gradient.
double pair_log_likelihood(const Eigen::MatrixXd& theta, const PairData& pairs);
Eigen::MatrixXd pair_log_likelihood_gradient(const Eigen::MatrixXd& theta, const PairData& pairs);

struct ContrastiveOptConfig {
    int iterations = 2000;
    int restarts = 5;
    double step = 0.5;
    double step_tol = 1e-10;
    int checkpoints = 0;                         // evenly spaced iterates kept for diagnostics
    std::vector<Eigen::MatrixXd> warm_starts;    // used before random restarts
};

struct ContrastiveMleResult {
    Eigen::MatrixXd theta;
    double log_likelihood = 0.0;
    bool converged = true;
    std::vector<Eigen::MatrixXd> checkpoint_thetas;  // from the best run
};

// Projected gradient ascent over ||theta||_2 <= 1 (radial scaling after each
// step). The analytic gradient is checked against central finite differences
// at the first initialization; a mismatch is a hard error.
ContrastiveMleResult mle_contrastive(const PairData& pairs, int r, int d,
                                     const ContrastiveOptConfig& config, RngStream rng);

double predictor_contrastive(const Eigen::MatrixXd& theta, const Eigen::VectorXd& beta,
                             const Eigen::VectorXd& x);

// Same contract as the factor truncated ERM, on features f_theta(x).
Eigen::VectorXd erm_beta_contrastive(const Eigen::MatrixXd& theta_hat,
                                     const ContrastiveLabeledData& labeled, double truncation_level,
                                     double radius, const ErmConfig& config, RngStream rng,
                                     bool* converged = nullptr);

// O = V1 U1' from the SVD of the Monte-Carlo estimate of E[f_theta(x) f_theta*(x)'].
Eigen::MatrixXd align_orthogonal_contrastive(const Eigen::MatrixXd& theta_hat,
                                             const Eigen::MatrixXd& theta_star,
                                             Eigen::Index mc_count, RngStream rng,
                                             bool* rank_deficient = nullptr);

// Hellinger distance between the pair models of theta and theta*; the (x,x')
// marginal is shared so only the conditional ratio enters.
DivergenceEstimate hellinger_pairs(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& theta_star,
                                   Eigen::Index mc_count, RngStream rng, int jobs = 1);

// Default constant (1/2) sqrt((2 + e + 1/e) / (2 sqrt(2) - 2)).
double contrastive_default_c3();

// E[f f'] for the linear map over the uniform sphere is theta theta' / d, exact.
Eigen::MatrixXd contrastive_second_moment(const Eigen::MatrixXd& theta);

// Weak informativeness: TV of the (x,y) joints with the witness psi = O'beta*
// against kappa times the pair Hellinger, kappa = c3 / sqrt(sigma_min(E[ff'])).
InformativeReport verify_weakly_informative_contrastive(const Eigen::MatrixXd& theta,
                                                        const Eigen::MatrixXd& theta_star,
                                                        const RegressionBeta& beta_star,
                                                        Eigen::Index mc_count, RngStream rng,
                                                        double c3 = -1.0, int jobs = 1);

}  // namespace ptlab
