#include "ptlab/factor.hpp"

#include <cmath>
#include <stdexcept>

#include "ptlab/mvn.hpp"

namespace ptlab {

namespace {

Eigen::MatrixXd joint_covariance(const Eigen::MatrixXd& B) {
    const Eigen::Index d = B.rows(), r = B.cols();
    Eigen::MatrixXd cov(d + r, d + r);
    cov.topLeftCorner(d, d) = B * B.transpose() + Eigen::MatrixXd::Identity(d, d);
    cov.topRightCorner(d, r) = B;
    cov.bottomLeftCorner(r, d) = B.transpose();
    cov.bottomRightCorner(r, r) = Eigen::MatrixXd::Identity(r, r);
    return cov;
}

}  // namespace

void validate_factor(const FactorModel& model) {
    if (model.B.rows() < 2 || model.B.cols() < 1 || model.B.cols() >= model.B.rows())
        throw std::invalid_argument("factor: need 1 <= r < d and d > 1");
    const double spectral = model.B.jacobiSvd().singularValues()(0);
    if (model.norm_bound > 0.0 && spectral > model.norm_bound * (1.0 + 1e-12))
        throw std::invalid_argument("factor: ||B||_2 exceeds the norm bound");
}

void validate_regression(const RegressionBeta& psi) {
    if (psi.norm_bound > 0.0 && psi.beta.norm() > psi.norm_bound * (1.0 + 1e-12))
        throw std::invalid_argument("regression: ||beta||_2 exceeds the norm bound");
    if (!(psi.noise_std > 0.0))
        throw std::invalid_argument("regression: noise_std must be positive");
}

Eigen::MatrixXd sample_factor_unlabeled(const FactorModel& model, Eigen::Index m, RngStream& rng) {
    if (m < 1) throw std::invalid_argument("sample_factor_unlabeled: m must be positive");
    const Eigen::Index d = model.B.rows(), r = model.B.cols();
    Eigen::MatrixXd z(m, r), mu(m, d);
    fill_standard_normal(z, rng);
    fill_standard_normal(mu, rng);
    return z * model.B.transpose() + mu;
}

Eigen::MatrixXd sample_factor_labeled(const FactorModel& model, const RegressionBeta& psi,
                                      Eigen::Index n, RngStream& rng) {
    if (n < 1) throw std::invalid_argument("sample_factor_labeled: n must be positive");
    const Eigen::Index d = model.B.rows(), r = model.B.cols();
    if (psi.beta.size() != r) throw std::invalid_argument("sample_factor_labeled: beta size != r");
    Eigen::MatrixXd z(n, r), mu(n, d), nu(n, 1);
    fill_standard_normal(z, rng);
    fill_standard_normal(mu, rng);
    fill_standard_normal(nu, rng);
    Eigen::MatrixXd out(n, d + 1);
    out.leftCols(d) = z * model.B.transpose() + mu;
    out.col(d) = z * psi.beta + psi.noise_std * nu.col(0);
    return out;
}

Eigen::MatrixXd mle_factor_from_covariance(const Eigen::MatrixXd& sigma_hat, int r,
                                           int* clamped_count) {
    const Eigen::Index d = sigma_hat.rows();
    if (sigma_hat.cols() != d) throw std::invalid_argument("mle_factor: covariance not square");
    if (r < 1 || r >= d) throw std::invalid_argument("mle_factor: need 1 <= r < d");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma_hat);
    if (eig.info() != Eigen::Success) throw std::runtime_error("mle_factor: eigendecomposition failed");
    // Eigen returns ascending order; take the top r from the back.
    Eigen::MatrixXd B(d, r);
    int clamped = 0;
    for (int j = 0; j < r; ++j) {
        const Eigen::Index src = d - 1 - j;
        const double lambda = eig.eigenvalues()(src);
        double scale2 = lambda - 1.0;
        if (scale2 <= 0.0) {
            scale2 = 0.0;
            ++clamped;
        }
        B.col(j) = eig.eigenvectors().col(src) * std::sqrt(scale2);
        for (Eigen::Index i = 0; i < d; ++i) {
            if (std::abs(B(i, j)) > 1e-12) {
                if (B(i, j) < 0.0) B.col(j) = -B.col(j);
                break;
            }
        }
    }
    if (clamped_count) *clamped_count = clamped;
    return B;
}

Eigen::MatrixXd mle_factor(const Eigen::MatrixXd& unlabeled, int r, int* clamped_count) {
    if (unlabeled.rows() < 1) throw std::invalid_argument("mle_factor: empty input");
    const Eigen::MatrixXd sigma_hat =
        unlabeled.transpose() * unlabeled / static_cast<double>(unlabeled.rows());
    return mle_factor_from_covariance(sigma_hat, r, clamped_count);
}

Eigen::MatrixXd factor_feature_map(const Eigen::MatrixXd& B) {
    const Eigen::Index r = B.cols();
    // Push-through identity: B'(BB'+I_d)^{-1} = (I_r + B'B)^{-1} B'.
    return (Eigen::MatrixXd::Identity(r, r) + B.transpose() * B).ldlt().solve(B.transpose());
}

double predictor_factor(const Eigen::MatrixXd& B, const Eigen::VectorXd& beta,
                        const Eigen::VectorXd& x) {
    return beta.dot(factor_feature_map(B) * x);
}

double factor_mle_objective(const Eigen::MatrixXd& sigma_hat, const Eigen::MatrixXd& B) {
    const Eigen::Index d = B.rows();
    const Eigen::MatrixXd M = B * B.transpose() + Eigen::MatrixXd::Identity(d, d);
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) log_det += 2.0 * std::log(llt.matrixLLT()(i, i));
    return log_det + llt.solve(sigma_hat).trace();
}

Eigen::VectorXd erm_beta_ols(const Eigen::MatrixXd& B_hat, const Eigen::MatrixXd& labeled,
                             bool* used_pseudo_inverse) {
    const Eigen::Index d = B_hat.rows();
    if (labeled.cols() != d + 1) throw std::invalid_argument("erm_beta_ols: labeled must be n x (d+1)");
    const Eigen::MatrixXd features = labeled.leftCols(d) * factor_feature_map(B_hat).transpose();
    const ErmResult result = ols_on_features(features, labeled.col(d));
    if (used_pseudo_inverse) *used_pseudo_inverse = result.used_pseudo_inverse;
    return result.beta;
}

Eigen::VectorXd erm_beta_truncated(const Eigen::MatrixXd& B_hat, const Eigen::MatrixXd& labeled,
                                   double truncation_level, double radius, const ErmConfig& config,
                                   RngStream rng, bool* converged) {
    const Eigen::Index d = B_hat.rows();
    if (labeled.cols() != d + 1)
        throw std::invalid_argument("erm_beta_truncated: labeled must be n x (d+1)");
    const Eigen::MatrixXd features = labeled.leftCols(d) * factor_feature_map(B_hat).transpose();
    const ErmResult result =
        truncated_erm(features, labeled.col(d), truncation_level, radius, config, rng);
    if (converged) *converged = result.converged;
    return result.beta;
}

FactorFitReport fit_factor(const Eigen::MatrixXd& unlabeled, const Eigen::MatrixXd& labeled, int r,
                           FactorErm method, double truncation_level, double radius,
                           const ErmConfig& config, RngStream rng) {
    FactorFitReport report;
    report.erm_method = method;
    report.B_hat = mle_factor(unlabeled, r, &report.clamped_eigencount);
    if (method == FactorErm::fast_rate_ols) {
        report.beta_hat = erm_beta_ols(report.B_hat, labeled, &report.ols_pseudo_inverse);
    } else {
        const double n = static_cast<double>(labeled.rows());
        const double L = truncation_level > 0.0
                             ? truncation_level
                             : std::pow(radius * radius + 1.0, 3) * std::log(std::max(2.0, n));
        report.beta_hat =
            erm_beta_truncated(report.B_hat, labeled, L, radius, config, rng, &report.erm_converged);
    }
    return report;
}

double factor_linear_excess(const Eigen::MatrixXd& B_star, const Eigen::VectorXd& beta_star,
                            const Eigen::VectorXd& w) {
    const Eigen::Index d = B_star.rows();
    const Eigen::VectorXd v = factor_feature_map(B_star).transpose() * beta_star - w;
    return v.dot((B_star * B_star.transpose() + Eigen::MatrixXd::Identity(d, d)) * v);
}

double excess_risk_factor_closed(const Eigen::MatrixXd& B_star, const Eigen::VectorXd& beta_star,
                                 const Eigen::MatrixXd& B_hat, const Eigen::VectorXd& beta_hat) {
    return factor_linear_excess(B_star, beta_star,
                                factor_feature_map(B_hat).transpose() * beta_hat);
}

Eigen::MatrixXd align_rotation_factor(const Eigen::MatrixXd& B, const Eigen::MatrixXd& B_star) {
    if (B.rows() != B_star.rows() || B.cols() != B_star.cols())
        throw std::invalid_argument("align_rotation_factor: shape mismatch");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(B.transpose() * B_star,
                                          Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().transpose();
}

Eigen::VectorXd supervised_baseline_factor(const Eigen::MatrixXd& labeled,
                                           bool* used_pseudo_inverse) {
    const Eigen::Index d = labeled.cols() - 1;
    if (d < 1 || labeled.rows() < 1)
        throw std::invalid_argument("supervised_baseline_factor: need n >= 1 labeled rows");
    const ErmResult result = ols_on_features(labeled.leftCols(d), labeled.col(d));
    if (used_pseudo_inverse) *used_pseudo_inverse = result.used_pseudo_inverse;
    return result.beta;
}

GaussianDensity factor_joint_density(const Eigen::MatrixXd& B) {
    return GaussianDensity(Eigen::VectorXd::Zero(B.rows() + B.cols()), joint_covariance(B));
}

GaussianDensity factor_marginal_density(const Eigen::MatrixXd& B) {
    const Eigen::Index d = B.rows();
    return GaussianDensity(Eigen::VectorXd::Zero(d),
                           B * B.transpose() + Eigen::MatrixXd::Identity(d, d));
}

SamplerFn factor_joint_sampler(const Eigen::MatrixXd& B) {
    return [B](Eigen::Index count, RngStream& rng) {
        const Eigen::Index d = B.rows(), r = B.cols();
        Eigen::MatrixXd z(count, r), mu(count, d);
        fill_standard_normal(z, rng);
        fill_standard_normal(mu, rng);
        Eigen::MatrixXd out(count, d + r);
        out.leftCols(d) = z * B.transpose() + mu;
        out.rightCols(r) = z;
        return out;
    };
}

SamplerFn factor_marginal_sampler(const Eigen::MatrixXd& B) {
    return [B](Eigen::Index count, RngStream& rng) {
        const Eigen::Index d = B.rows(), r = B.cols();
        Eigen::MatrixXd z(count, r), mu(count, d);
        fill_standard_normal(z, rng);
        fill_standard_normal(mu, rng);
        return Eigen::MatrixXd(z * B.transpose() + mu);
    };
}

InformativeReport verify_informative_factor(const Eigen::MatrixXd& B, const Eigen::MatrixXd& B_star,
                                            Eigen::Index mc_count, RngStream rng, double c1,
                                            int jobs) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(B_star);
    const double sigma_max = svd.singularValues()(0);
    const double sigma_min = svd.singularValues()(svd.singularValues().size() - 1);
    if (!(sigma_min > 0.0))
        throw std::invalid_argument("verify_informative_factor: sigma_min(B*) must be positive");

    const Eigen::MatrixXd B_aligned = B * align_rotation_factor(B, B_star);

    const GaussianDensity joint_star = factor_joint_density(B_star);
    const GaussianDensity joint_aligned = factor_joint_density(B_aligned);
    const DivergenceEstimate lhs = estimate_tv(
        [&](const Eigen::VectorXd& v) { return joint_star.log_density(v); },
        [&](const Eigen::VectorXd& v) { return joint_aligned.log_density(v); },
        factor_joint_sampler(B_star), mc_count, rng.substream(1), jobs);

    const GaussianDensity marg_star = factor_marginal_density(B_star);
    const GaussianDensity marg_b = factor_marginal_density(B);
    const DivergenceEstimate marg = estimate_tv(
        [&](const Eigen::VectorXd& v) { return marg_star.log_density(v); },
        [&](const Eigen::VectorXd& v) { return marg_b.log_density(v); },
        factor_marginal_sampler(B_star), mc_count, rng.substream(2), jobs);

    InformativeReport report;
    report.kappa_used = c1 * std::pow(sigma_max + 1.0, 4) / std::pow(sigma_min, 3);
    report.lhs = lhs.value;
    report.lhs_std_error = lhs.std_error;
    report.rhs = report.kappa_used * marg.value;
    report.rhs_std_error = report.kappa_used * marg.std_error;
    const double slack =
        4.0 * std::sqrt(report.lhs_std_error * report.lhs_std_error +
                        report.rhs_std_error * report.rhs_std_error);
    report.holds = report.lhs <= report.rhs + slack;
    return report;
}

}  // namespace ptlab
