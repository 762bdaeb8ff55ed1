#include "ptlab/mvn.hpp"

#include <cmath>
#include <stdexcept>

namespace ptlab {

namespace {
constexpr double kSymTol = 1e-12;
constexpr double kEigFloor = -1e-10;
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}  // namespace

void validate_mvn(const MvnParams& params) {
    const auto& C = params.covariance;
    if (C.rows() != C.cols() || C.rows() != params.mean.size())
        throw std::invalid_argument("mvn: covariance/mean dimension mismatch");
    const double scale = std::max(1.0, C.cwiseAbs().maxCoeff());
    if ((C - C.transpose()).cwiseAbs().maxCoeff() > kSymTol * scale)
        throw std::invalid_argument("mvn: covariance not symmetric");
}

Eigen::MatrixXd sample_mvn(const MvnParams& params, Eigen::Index count, RngStream& rng) {
    validate_mvn(params);
    const Eigen::Index d = params.mean.size();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(params.covariance);
    Eigen::VectorXd lambda = eig.eigenvalues();
    for (Eigen::Index i = 0; i < d; ++i) {
        if (lambda[i] < kEigFloor)
            throw std::invalid_argument("mvn: covariance has eigenvalue below -1e-10");
        if (lambda[i] < 0.0) lambda[i] = 0.0;
    }
    const Eigen::MatrixXd transform = eig.eigenvectors() * lambda.cwiseSqrt().asDiagonal();

    Eigen::MatrixXd z(count, d);
    fill_standard_normal(z, rng);
    Eigen::MatrixXd x = z * transform.transpose();
    x.rowwise() += params.mean.transpose();
    return x;
}

GaussianDensity::GaussianDensity(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance)
    : mean_(std::move(mean)), llt_(covariance) {
    if (llt_.info() != Eigen::Success)
        throw std::invalid_argument("gaussian density: covariance not positive definite");
    const Eigen::MatrixXd& L = llt_.matrixLLT();
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < L.rows(); ++i) log_det += 2.0 * std::log(L(i, i));
    log_norm_const_ = -0.5 * (static_cast<double>(mean_.size()) * kLog2Pi + log_det);
}

double GaussianDensity::log_density(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd diff = x - mean_;
    const double quad = diff.dot(llt_.solve(diff));
    return log_norm_const_ - 0.5 * quad;
}

void fill_standard_normal(Eigen::Ref<Eigen::MatrixXd> out, RngStream& rng) {
    if (rng.counter & 1) ++rng.counter;
    const std::uint64_t base = rng.counter / 2;
    const Eigen::Index rows = out.rows(), cols = out.cols();
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            out(i, j) = rng.normal_at(base + static_cast<std::uint64_t>(i * cols + j));
    rng.counter += 2 * static_cast<std::uint64_t>(rows * cols);
}

}  // namespace ptlab
