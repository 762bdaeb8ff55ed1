#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ptlab/factor.hpp"
#include "ptlab/loss.hpp"
#include "ptlab/rng.hpp"

namespace ptlab {

// Equal-weight isotropic Gaussian mixture; row i of `centers` is u_i.
struct GmmModel {
    Eigen::MatrixXd centers;  // K x d
    double norm_scale = 0.0;  // D in ||u_i|| <= D sqrt(d log K); vacuous for K = 1

    int K() const { return static_cast<int>(centers.rows()); }
    int d() const { return static_cast<int>(centers.cols()); }
};
void validate_gmm(const GmmModel& model);

// Per-cluster noisy binary labeler: P(y = bits[i] | z = i) = 1 - eps.
struct LabelerPsi {
    std::vector<int> bits;
    double eps = 0.0;
};
void validate_labeler(const LabelerPsi& psi, int K);

struct GmmPosterior {
    Eigen::VectorXd weights;  // sums to 1
};

struct GmmLabeledData {
    Eigen::MatrixXd x;  // n x d
    Eigen::VectorXi y;  // entries in {0,1}
};

Eigen::MatrixXd sample_gmm_unlabeled(const GmmModel& model, Eigen::Index m, RngStream& rng);
GmmLabeledData sample_gmm_labeled(const GmmModel& model, const LabelerPsi& psi, Eigen::Index n,
                                  RngStream& rng);

// min_{i != j} ||u_i - u_j|| >= 100 sqrt(d log K), natural log; true for K = 1.
bool check_separation(const Eigen::MatrixXd& centers);
double separation_threshold(int d, int K);

struct EmResult {
    Eigen::MatrixXd centers;
    double log_likelihood = 0.0;
    int iterations = 0;
    int reseeds = 0;
    std::vector<double> loglik_trace;  // best run, one entry per iteration
};

// EM for the equal-weight identity-covariance mixture (means only), best of
// `restarts` runs by final log-likelihood, k-means++-style initialization.
// The per-iteration log-likelihood is checked to be non-decreasing.
EmResult mle_gmm(const Eigen::MatrixXd& unlabeled, int K, int restarts, RngStream rng);

GmmPosterior gmm_posterior(const Eigen::MatrixXd& centers, const Eigen::VectorXd& x);

// Posterior vote v = sum_i w_i(x) P_psi(y=1|z=i); predicts 1 iff v >= 1/2.
int bayes_predict_gmm(const Eigen::MatrixXd& centers, const LabelerPsi& psi,
                      const Eigen::VectorXd& x);

double empirical_zero_one_loss(const Eigen::MatrixXd& centers, const LabelerPsi& psi,
                               const GmmLabeledData& labeled);

// Exhaustive search over the 2^K bit patterns for K <= 12 (ties -> smallest
// lexicographic bits); per-cluster MAP majority vote otherwise.
LabelerPsi erm_psi(const Eigen::MatrixXd& centers, const GmmLabeledData& labeled, double eps,
                   bool* exhaustive = nullptr);
LabelerPsi erm_psi_heuristic(const Eigen::MatrixXd& centers, const GmmLabeledData& labeled,
                             double eps);

// Permutation pi minimizing sum_i ||u_pi(i) - u*_i||^2; exhaustive for K <= 8,
// greedy nearest-unmatched beyond that.
std::vector<int> match_permutation(const Eigen::MatrixXd& centers,
                                   const Eigen::MatrixXd& true_centers, bool* exhaustive = nullptr);

// Exact joint (x,z) TV after permutation matching: (1/K) sum_i TV(N(u_pi(i)), N(u*_i)).
double gmm_joint_tv_closed(const Eigen::MatrixXd& centers, const Eigen::MatrixXd& true_centers);

struct GmmInformativeReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double rhs_std_error = 0.0;
    double marginal_tv = 0.0;
    bool precondition_ok = true;
    bool holds = false;
};

// O(1)-informativeness check with constant 500: exact joint TV (after
// matching) against 500x the Monte-Carlo marginal TV. Requires the true
// centers to be separation-satisfying and the marginal TV <= 1/(4K).
GmmInformativeReport verify_informative_gmm(const Eigen::MatrixXd& centers,
                                            const Eigen::MatrixXd& true_centers,
                                            Eigen::Index mc_count, RngStream rng,
                                            double constant = 500.0, int jobs = 1);

LogDensityFn gmm_mixture_log_density(const Eigen::MatrixXd& centers);
SamplerFn gmm_mixture_sampler(const Eigen::MatrixXd& centers);

struct GmmPipelineResult {
    LabelerPsi psi_hat;
    Eigen::MatrixXd centers_hat;
    RiskEstimate excess_risk;
};

// Two-phase pipeline: EM on m unlabeled draws, labeler ERM on n labeled draws,
// 0-1 excess risk against the Bayes predictor of the true model by Monte-Carlo.
GmmPipelineResult pipeline_gmm(const GmmModel& model, const LabelerPsi& psi_star, Eigen::Index m,
                               Eigen::Index n, int restarts, RngStream rng,
                               Eigen::Index risk_count = 100000);

}  // namespace ptlab
