#include "ptlab/contrastive.hpp"

#include <cmath>
#include <stdexcept>

#include "ptlab/mvn.hpp"

namespace ptlab {

namespace {

double log_sigmoid(double v) {
    if (v >= 0.0) return -std::log1p(std::exp(-v));
    return v - std::log1p(std::exp(v));
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

double spectral_norm(const Eigen::MatrixXd& theta) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(theta * theta.transpose());
    return std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
}

Eigen::MatrixXd project_spectral(Eigen::MatrixXd theta) {
    const double s = spectral_norm(theta);
    if (s > 1.0) theta /= s;
    return theta;
}

PairData head(const PairData& pairs, Eigen::Index count) {
    PairData out;
    out.x = pairs.x.topRows(count);
    out.x_prime = pairs.x_prime.topRows(count);
    out.t = pairs.t.head(count);
    return out;
}

}  // namespace

void validate_contrastive(const ContrastiveModel& model) {
    if (model.r() < 1 || model.d() < 1)
        throw std::invalid_argument("contrastive: need r >= 1 and d >= 1");
    if (spectral_norm(model.theta) > 1.0 + 1e-10)
        throw std::invalid_argument("contrastive: ||theta||_2 must be <= 1");
    if (model.input_radius != 1.0)
        throw std::invalid_argument("contrastive: only unit input radius is supported");
}

Eigen::MatrixXd sample_sphere(int d, Eigen::Index count, RngStream& rng) {
    Eigen::MatrixXd x(count, d);
    fill_standard_normal(x, rng);
    for (Eigen::Index i = 0; i < count; ++i) {
        double norm = x.row(i).norm();
        while (norm < 1e-300) {  // astronomically unlikely; redraw from fresh slots
            Eigen::MatrixXd row(1, d);
            fill_standard_normal(row, rng);
            x.row(i) = row;
            norm = x.row(i).norm();
        }
        x.row(i) /= norm;
    }
    return x;
}

PairData sample_pairs(const ContrastiveModel& model, Eigen::Index m, RngStream& rng) {
    if (m < 1) throw std::invalid_argument("sample_pairs: m must be positive");
    PairData pairs;
    pairs.x = sample_sphere(model.d(), m, rng);
    pairs.x_prime = sample_sphere(model.d(), m, rng);
    pairs.t.resize(m);
    const Eigen::MatrixXd fx = pairs.x * model.theta.transpose();
    const Eigen::MatrixXd fxp = pairs.x_prime * model.theta.transpose();
    for (Eigen::Index i = 0; i < m; ++i) {
        const double a = fx.row(i).dot(fxp.row(i));
        pairs.t[i] = rng.uniform() < sigmoid(a) ? 1.0 : -1.0;
    }
    return pairs;
}

ContrastiveLabeledData sample_contrastive_labeled(const ContrastiveModel& model,
                                                  const RegressionBeta& psi, Eigen::Index n,
                                                  RngStream& rng) {
    if (n < 1) throw std::invalid_argument("sample_contrastive_labeled: n must be positive");
    if (psi.beta.size() != model.r())
        throw std::invalid_argument("sample_contrastive_labeled: beta size != r");
    ContrastiveLabeledData data;
    data.x = sample_sphere(model.d(), n, rng);
    Eigen::MatrixXd mu(n, model.r()), nu(n, 1);
    fill_standard_normal(mu, rng);
    fill_standard_normal(nu, rng);
    data.y = (data.x * model.theta.transpose() + mu) * psi.beta + psi.noise_std * nu.col(0);
    return data;
}

double pair_log_likelihood(const Eigen::MatrixXd& theta, const PairData& pairs) {
    const Eigen::Index m = pairs.x.rows();
    const Eigen::MatrixXd fx = pairs.x * theta.transpose();
    const Eigen::MatrixXd fxp = pairs.x_prime * theta.transpose();
    double total = 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
        total += log_sigmoid(pairs.t[i] * fx.row(i).dot(fxp.row(i)));
    return total / static_cast<double>(m);
}

Eigen::MatrixXd pair_log_likelihood_gradient(const Eigen::MatrixXd& theta, const PairData& pairs) {
    const Eigen::Index m = pairs.x.rows();
    const Eigen::MatrixXd fx = pairs.x * theta.transpose();    // m x r
    const Eigen::MatrixXd fxp = pairs.x_prime * theta.transpose();
    Eigen::VectorXd w(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double a = fx.row(i).dot(fxp.row(i));
        w[i] = pairs.t[i] * sigmoid(-pairs.t[i] * a);  // d log sigmoid(t a) / d a
    }
    const Eigen::MatrixXd grad = (fx.transpose() * w.asDiagonal() * pairs.x_prime +
                                  fxp.transpose() * w.asDiagonal() * pairs.x) /
                                 static_cast<double>(m);
    return grad;
}

ContrastiveMleResult mle_contrastive(const PairData& pairs, int r, int d,
                                     const ContrastiveOptConfig& config, RngStream rng) {
    const Eigen::Index m = pairs.x.rows();
    if (m < 1) throw std::invalid_argument("mle_contrastive: need at least one pair");
    if (pairs.x.cols() != d || pairs.x_prime.cols() != d)
        throw std::invalid_argument("mle_contrastive: pair dimension != d");

    auto random_theta = [&](RngStream& r_rng) {
        Eigen::MatrixXd theta(r, d);
        fill_standard_normal(theta, r_rng);
        theta *= 0.5 / std::sqrt(static_cast<double>(d));
        return project_spectral(theta);
    };

    // Gradient sanity check against central finite differences on a slice.
    {
        RngStream check_rng = rng.substream(0xFD);
        const PairData slice = head(pairs, std::min<Eigen::Index>(m, 512));
        const Eigen::MatrixXd theta0 = random_theta(check_rng);
        const Eigen::MatrixXd analytic = pair_log_likelihood_gradient(theta0, slice);
        Eigen::MatrixXd numeric(r, d);
        const double h = 1e-6;
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < d; ++j) {
                Eigen::MatrixXd plus = theta0, minus = theta0;
                plus(i, j) += h;
                minus(i, j) -= h;
                numeric(i, j) =
                    (pair_log_likelihood(plus, slice) - pair_log_likelihood(minus, slice)) / (2 * h);
            }
        }
        const double rel = (analytic - numeric).norm() / std::max(1e-12, numeric.norm());
        if (rel > 1e-5)
            throw std::runtime_error("mle_contrastive: analytic gradient failed the finite-difference check");
    }

    ContrastiveMleResult best;
    best.log_likelihood = -std::numeric_limits<double>::infinity();
    const int warm = static_cast<int>(config.warm_starts.size());
    const int randoms = std::max(config.restarts, warm > 0 ? 0 : 1);
    const int restarts = warm + randoms;
    for (int run = 0; run < restarts; ++run) {
        RngStream run_rng = rng.substream(static_cast<std::uint64_t>(run) + 1);
        Eigen::MatrixXd theta = run < warm
                                    ? project_spectral(config.warm_starts[static_cast<std::size_t>(run)])
                                    : random_theta(run_rng);
        bool converged = false;
        std::vector<Eigen::MatrixXd> checkpoints;
        const int every = config.checkpoints > 0
                              ? std::max(1, config.iterations / config.checkpoints)
                              : 0;
        for (int it = 0; it < config.iterations; ++it) {
            const Eigen::MatrixXd grad = pair_log_likelihood_gradient(theta, pairs);
            const Eigen::MatrixXd next = project_spectral(theta + config.step * grad);
            const double move = (next - theta).norm();
            theta = next;
            if (every > 0 && (it + 1) % every == 0) checkpoints.push_back(theta);
            if (move < config.step_tol) {
                converged = true;
                break;
            }
        }
        const double ll = pair_log_likelihood(theta, pairs);
        if (ll > best.log_likelihood) {
            best.theta = theta;
            best.log_likelihood = ll;
            best.converged = converged;
            best.checkpoint_thetas = std::move(checkpoints);
        }
    }
    return best;
}

double predictor_contrastive(const Eigen::MatrixXd& theta, const Eigen::VectorXd& beta,
                             const Eigen::VectorXd& x) {
    return beta.dot(theta * x);
}

Eigen::VectorXd erm_beta_contrastive(const Eigen::MatrixXd& theta_hat,
                                     const ContrastiveLabeledData& labeled, double truncation_level,
                                     double radius, const ErmConfig& config, RngStream rng,
                                     bool* converged) {
    const Eigen::MatrixXd features = labeled.x * theta_hat.transpose();
    const ErmResult result =
        truncated_erm(features, labeled.y, truncation_level, radius, config, rng);
    if (converged) *converged = result.converged;
    return result.beta;
}

Eigen::MatrixXd align_orthogonal_contrastive(const Eigen::MatrixXd& theta_hat,
                                             const Eigen::MatrixXd& theta_star,
                                             Eigen::Index mc_count, RngStream rng,
                                             bool* rank_deficient) {
    if (theta_hat.rows() != theta_star.rows())
        throw std::invalid_argument("align_orthogonal_contrastive: rank mismatch");
    const int d = static_cast<int>(theta_hat.cols());
    const Eigen::MatrixXd x = sample_sphere(d, mc_count, rng);
    const Eigen::MatrixXd second_moment = x.transpose() * x / static_cast<double>(mc_count);
    const Eigen::MatrixXd cross = theta_hat * second_moment * theta_star.transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (rank_deficient) {
        const auto& s = svd.singularValues();
        *rank_deficient = s(s.size() - 1) < 1e-10 * std::max(1e-300, s(0));
    }
    return svd.matrixV() * svd.matrixU().transpose();
}

DivergenceEstimate hellinger_pairs(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& theta_star,
                                   Eigen::Index mc_count, RngStream rng, int jobs) {
    const int d = static_cast<int>(theta_star.cols());
    ContrastiveModel truth{theta_star, 1.0};
    // The (x, x') marginal is shared, so only the conditional t-probabilities
    // enter the ratio. Rows pack (x, x', t).
    auto conditional = [d](const Eigen::MatrixXd& th) {
        return [th, d](const Eigen::VectorXd& row) {
            const Eigen::VectorXd x = row.head(d), xp = row.segment(d, d);
            const double t = row(2 * d);
            return log_sigmoid(t * (th * x).dot(th * xp));
        };
    };
    SamplerFn sampler = [truth, d](Eigen::Index count, RngStream& r) {
        const PairData pairs = sample_pairs(truth, count, r);
        Eigen::MatrixXd rows(count, 2 * d + 1);
        rows.leftCols(d) = pairs.x;
        rows.middleCols(d, d) = pairs.x_prime;
        rows.col(2 * d) = pairs.t;
        return rows;
    };
    return estimate_hellinger(conditional(theta_star), conditional(theta), sampler, mc_count,
                              rng, jobs);
}

double contrastive_default_c3() {
    const double e = std::exp(1.0);
    return 0.5 * std::sqrt((2.0 + e + 1.0 / e) / (2.0 * std::sqrt(2.0) - 2.0));
}

Eigen::MatrixXd contrastive_second_moment(const Eigen::MatrixXd& theta) {
    return theta * theta.transpose() / static_cast<double>(theta.cols());
}

InformativeReport verify_weakly_informative_contrastive(const Eigen::MatrixXd& theta,
                                                        const Eigen::MatrixXd& theta_star,
                                                        const RegressionBeta& beta_star,
                                                        Eigen::Index mc_count, RngStream rng,
                                                        double c3, int jobs) {
    if (c3 <= 0.0) c3 = contrastive_default_c3();
    const int d = static_cast<int>(theta_star.cols());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(contrastive_second_moment(theta_star));
    const double sigma_min = eig.eigenvalues().minCoeff();
    if (!(sigma_min > 1e-14))
        throw std::invalid_argument("verify_weakly_informative_contrastive: singular second moment");

    const Eigen::MatrixXd O =
        align_orthogonal_contrastive(theta, theta_star, mc_count, rng.substream(1));
    const Eigen::VectorXd witness = O.transpose() * beta_star.beta;

    const double var = beta_star.beta.squaredNorm() + beta_star.noise_std * beta_star.noise_std;
    // Shared x-marginal: only the conditional y-densities enter the TV ratio.
    auto conditional = [d, var](const Eigen::MatrixXd& th, const Eigen::VectorXd& b) {
        return [th, b, d, var](const Eigen::VectorXd& row) {
            const Eigen::VectorXd x = row.head(d);
            const double y = row(d);
            const double mean = b.dot(th * x);
            return -0.5 * (y - mean) * (y - mean) / var;  // shared normalizer cancels
        };
    };
    ContrastiveModel truth{theta_star, 1.0};
    RegressionBeta psi_star = beta_star;
    SamplerFn sampler = [truth, psi_star, d](Eigen::Index count, RngStream& r) {
        const ContrastiveLabeledData data = sample_contrastive_labeled(truth, psi_star, count, r);
        Eigen::MatrixXd rows(count, d + 1);
        rows.leftCols(d) = data.x;
        rows.col(d) = data.y;
        return rows;
    };
    const DivergenceEstimate lhs =
        estimate_tv(conditional(theta_star, beta_star.beta), conditional(theta, witness), sampler,
                    mc_count, rng.substream(2), jobs);

    const DivergenceEstimate hell = hellinger_pairs(theta, theta_star, mc_count, rng.substream(3), jobs);

    InformativeReport report;
    report.kappa_used = c3 / std::sqrt(sigma_min);
    report.lhs = lhs.value;
    report.lhs_std_error = lhs.std_error;
    report.rhs = report.kappa_used * hell.value;
    report.rhs_std_error = report.kappa_used * hell.std_error;
    const double slack = 4.0 * std::sqrt(report.lhs_std_error * report.lhs_std_error +
                                         report.rhs_std_error * report.rhs_std_error);
    report.holds = report.lhs <= report.rhs + slack;
    return report;
}

}  // namespace ptlab
