#pragma once

#include <Eigen/Dense>

#include "ptlab/rng.hpp"

namespace ptlab {

// Parameters of a multivariate normal. The covariance must be symmetric to
// 1e-12 and may be rank deficient; eigenvalues in [-1e-10, 0) are clamped to
// zero at factorization time, anything below -1e-10 is rejected.
struct MvnParams {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

void validate_mvn(const MvnParams& params);

// i.i.d. rows from N(mean, covariance), factored by symmetric eigendecomposition.
Eigen::MatrixXd sample_mvn(const MvnParams& params, Eigen::Index count, RngStream& rng);

// Log-density evaluator for a non-degenerate Gaussian (all eigenvalues > 0).
class GaussianDensity {
  public:
    GaussianDensity(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance);

    double log_density(const Eigen::VectorXd& x) const;
    const Eigen::VectorXd& mean() const { return mean_; }

  private:
    Eigen::VectorXd mean_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double log_norm_const_;
};

// Fills `out` (already sized) with i.i.d. standard normals, reading the stream
// by absolute pair index starting at the stream's current counter.
void fill_standard_normal(Eigen::Ref<Eigen::MatrixXd> out, RngStream& rng);

}  // namespace ptlab
