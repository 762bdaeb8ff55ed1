#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "ptlab/contrastive.hpp"
#include "ptlab/mvn.hpp"

using namespace ptlab;

namespace {

Eigen::MatrixXd orthonormal_rows(int r, int d, RngStream& rng) {
    Eigen::MatrixXd g(d, r);
    fill_standard_normal(g, rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, r);
    return q.transpose();
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

TEST_CASE("pair sampling rates") {
    SUBCASE("theta = 0 gives a fair coin") {
        ContrastiveModel model{Eigen::MatrixXd::Zero(2, 3), 1.0};
        RngStream rng(1, 0);
        const Eigen::Index m = 40000;
        const PairData pairs = sample_pairs(model, m, rng);
        const double rate = (pairs.t.array() > 0).cast<double>().mean();
        CHECK(std::abs(rate - 0.5) <= 3.0 * std::sqrt(0.25 / static_cast<double>(m)));
    }
    SUBCASE("d = r = 1 atoms realize sigmoid(+-1)") {
        ContrastiveModel model{Eigen::MatrixXd::Ones(1, 1), 1.0};
        RngStream rng(2, 0);
        const PairData pairs = sample_pairs(model, 40000, rng);
        double pos_hits = 0, pos_total = 0, neg_hits = 0, neg_total = 0;
        for (Eigen::Index i = 0; i < pairs.t.size(); ++i) {
            const double a = pairs.x(i, 0) * pairs.x_prime(i, 0);
            if (a > 0) {
                pos_total += 1;
                pos_hits += pairs.t[i] > 0;
            } else {
                neg_total += 1;
                neg_hits += pairs.t[i] > 0;
            }
        }
        CHECK(std::abs(pos_hits / pos_total - sigmoid(1.0)) < 0.01);
        CHECK(std::abs(neg_hits / neg_total - sigmoid(-1.0)) < 0.01);
        CHECK(sigmoid(1.0) == doctest::Approx(0.73106).epsilon(1e-5));
    }
}

TEST_CASE("labeled sampling moments") {
    RngStream rng(3, 0);
    SUBCASE("beta = 0 gives unit-variance noise") {
        ContrastiveModel model{0.5 * orthonormal_rows(2, 4, rng), 1.0};
        RegressionBeta psi{Eigen::VectorXd::Zero(2), 1.0, 1.0};
        RngStream data_rng(4, 0);
        const ContrastiveLabeledData data = sample_contrastive_labeled(model, psi, 100000, data_rng);
        const double var = data.y.squaredNorm() / static_cast<double>(data.y.size());
        CHECK(std::abs(var - 1.0) < 0.03);
    }
    SUBCASE("conditional mean and variance match the model") {
        ContrastiveModel model{0.8 * orthonormal_rows(2, 4, rng), 1.0};
        Eigen::VectorXd beta(2);
        beta << 0.6, -0.5;
        RegressionBeta psi{beta, 1.0, 1.0};
        RngStream data_rng(5, 0);
        const Eigen::Index n = 100000;
        const ContrastiveLabeledData data = sample_contrastive_labeled(model, psi, n, data_rng);
        const Eigen::VectorXd residual = data.y - data.x * model.theta.transpose() * beta;
        const double mean = residual.mean();
        const double var = residual.squaredNorm() / static_cast<double>(n) - mean * mean;
        CHECK(std::abs(mean) < 0.02);
        CHECK(std::abs(var - (beta.squaredNorm() + 1.0)) < 0.03 * (beta.squaredNorm() + 1.0));
    }
}

TEST_CASE("pair likelihood: sign symmetry and the zero stationary point") {
    RngStream rng(6, 0);
    ContrastiveModel model{0.7 * orthonormal_rows(2, 3, rng), 1.0};
    RngStream data_rng(7, 0);
    const PairData pairs = sample_pairs(model, 2000, data_rng);
    Eigen::MatrixXd theta(2, 3);
    fill_standard_normal(theta, rng);
    theta *= 0.3;
    CHECK(pair_log_likelihood(theta, pairs) == pair_log_likelihood(-theta, pairs));
    const Eigen::MatrixXd g0 = pair_log_likelihood_gradient(Eigen::MatrixXd::Zero(2, 3), pairs);
    CHECK(g0.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("analytic gradient matches central finite differences at 20 random points") {
    RngStream rng(8, 0);
    ContrastiveModel model{0.6 * orthonormal_rows(2, 3, rng), 1.0};
    RngStream data_rng(9, 0);
    const PairData pairs = sample_pairs(model, 300, data_rng);
    const double h = 1e-6;
    for (int rep = 0; rep < 20; ++rep) {
        Eigen::MatrixXd theta(2, 3);
        fill_standard_normal(theta, rng);
        theta *= 0.4;
        const Eigen::MatrixXd analytic = pair_log_likelihood_gradient(theta, pairs);
        Eigen::MatrixXd numeric(2, 3);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 3; ++j) {
                Eigen::MatrixXd plus = theta, minus = theta;
                plus(i, j) += h;
                minus(i, j) -= h;
                numeric(i, j) =
                    (pair_log_likelihood(plus, pairs) - pair_log_likelihood(minus, pairs)) / (2 * h);
            }
        CHECK((analytic - numeric).norm() / numeric.norm() <= 1e-5);
    }
}

TEST_CASE("projected ascent stays in the spectral ball and recovers a 1-d coefficient") {
    SUBCASE("returned theta obeys the spectral bound") {
        RngStream rng(10, 0);
        ContrastiveModel model{0.9 * orthonormal_rows(2, 4, rng), 1.0};
        RngStream data_rng(11, 0);
        const PairData pairs = sample_pairs(model, 3000, data_rng);
        ContrastiveOptConfig opt;
        opt.iterations = 200;
        opt.restarts = 2;
        const ContrastiveMleResult fit = mle_contrastive(pairs, 2, 4, opt, RngStream(12, 0));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit.theta * fit.theta.transpose());
        CHECK(std::sqrt(eig.eigenvalues().maxCoeff()) <= 1.0 + 1e-12);
    }
    SUBCASE("warm start at the truth stays near it and never loses likelihood") {
        RngStream rng(37, 0);
        const Eigen::MatrixXd theta_star = 0.8 * orthonormal_rows(2, 4, rng);
        ContrastiveModel model{theta_star, 1.0};
        RngStream data_rng(38, 0);
        const PairData pairs = sample_pairs(model, 20000, data_rng);
        ContrastiveOptConfig opt;
        opt.iterations = 100;
        opt.restarts = 0;
        opt.warm_starts = {theta_star};
        const ContrastiveMleResult fit = mle_contrastive(pairs, 2, 4, opt, RngStream(39, 0));
        CHECK(fit.log_likelihood >= pair_log_likelihood(theta_star, pairs) - 1e-12);
        // ascent stays within the sampling-noise ball of the start
        CHECK((fit.theta - theta_star).norm() < 0.2);
    }
    SUBCASE("d = r = 1: fitted theta^2 matches a likelihood grid scan and the truth") {
        const double theta_star = 0.8;
        ContrastiveModel model{Eigen::MatrixXd::Constant(1, 1, theta_star), 1.0};
        RngStream data_rng(13, 0);
        const PairData pairs = sample_pairs(model, 30000, data_rng);
        ContrastiveOptConfig opt;
        opt.iterations = 500;
        opt.restarts = 3;
        const ContrastiveMleResult fit = mle_contrastive(pairs, 1, 1, opt, RngStream(14, 0));
        const double fitted_sq = fit.theta(0, 0) * fit.theta(0, 0);

        double grid_best = 0.0, grid_ll = -1e300;
        for (double t = 0.0; t <= 1.0; t += 0.005) {
            const double ll = pair_log_likelihood(Eigen::MatrixXd::Constant(1, 1, t), pairs);
            if (ll > grid_ll) {
                grid_ll = ll;
                grid_best = t;
            }
        }
        CHECK(std::abs(fitted_sq - grid_best * grid_best) < 0.02);
        CHECK(std::abs(fitted_sq - theta_star * theta_star) < 0.05);
    }
}

TEST_CASE("linear predictor") {
    CHECK(predictor_contrastive(Eigen::MatrixXd::Identity(2, 4), Eigen::VectorXd::Zero(2),
                                Eigen::Vector4d(1, 2, 3, 4)) == 0.0);
    Eigen::VectorXd e1(2);
    e1 << 1, 0;
    CHECK(predictor_contrastive(Eigen::MatrixXd::Identity(2, 4), e1,
                                Eigen::Vector4d(0.3, -1, 2, 0.5)) == doctest::Approx(0.3));
}

TEST_CASE("truncated ERM on contrastive features") {
    RngStream rng(15, 0);
    const Eigen::MatrixXd theta = 0.8 * orthonormal_rows(2, 5, rng);
    SUBCASE("truncation level formula value") {
        const double D = 1.0, n = std::exp(2.0);
        CHECK(36.0 * (D * D + 1.0) * std::log(n) == doctest::Approx(144.0).epsilon(1e-12));
    }
    SUBCASE("inactive truncation matches projected OLS") {
        ContrastiveModel model{theta, 1.0};
        Eigen::VectorXd beta(2);
        beta << 0.5, -0.3;
        RegressionBeta psi{beta, 1.0, 1.0};
        RngStream data_rng(16, 0);
        const ContrastiveLabeledData data = sample_contrastive_labeled(model, psi, 400, data_rng);
        const ErmResult ols = ols_on_features(data.x * theta.transpose(), data.y);
        ErmConfig config;
        const Eigen::VectorXd fit =
            erm_beta_contrastive(theta, data, 1e8, 50.0, config, RngStream(17, 0));
        CHECK((fit - ols.beta).norm() < 1e-6);
    }
    SUBCASE("r = 1 grid oracle agreement under truncation") {
        const Eigen::MatrixXd theta1 = 0.9 * orthonormal_rows(1, 3, rng);
        ContrastiveModel model{theta1, 1.0};
        RegressionBeta psi{Eigen::VectorXd::Constant(1, 0.8), 2.0, 1.0};
        RngStream data_rng(18, 0);
        ContrastiveLabeledData data = sample_contrastive_labeled(model, psi, 120, data_rng);
        data.y[7] += 50.0;  // outlier past sqrt(L)
        const double L = 4.0, D = 2.0;
        ErmConfig config;
        const Eigen::VectorXd fit = erm_beta_contrastive(theta1, data, L, D, config, RngStream(19, 0));
        const Eigen::MatrixXd features = data.x * theta1.transpose();
        const double fit_obj = truncated_objective(features, data.y, fit, L);
        double grid_best = 1e300;
        for (double b = -D; b <= D; b += 0.0005)
            grid_best = std::min(grid_best,
                                 truncated_objective(features, data.y, Eigen::VectorXd::Constant(1, b), L));
        CHECK(fit_obj <= grid_best + 1e-4);
    }
}

TEST_CASE("orthogonal alignment") {
    RngStream rng(20, 0);
    const Eigen::MatrixXd theta_star = 0.8 * orthonormal_rows(3, 6, rng);
    SUBCASE("identity at the truth") {
        const Eigen::MatrixXd O =
            align_orthogonal_contrastive(theta_star, theta_star, 20000, RngStream(21, 0));
        CHECK((O - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("recovers a planted orthogonal map on held-out points") {
        Eigen::MatrixXd g(3, 3);
        fill_standard_normal(g, rng);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
        const Eigen::MatrixXd R = qr.householderQ() * Eigen::MatrixXd::Identity(3, 3);
        const Eigen::MatrixXd theta_hat = R * theta_star;
        const Eigen::MatrixXd O =
            align_orthogonal_contrastive(theta_hat, theta_star, 20000, RngStream(22, 0));
        CHECK((O - R.transpose()).cwiseAbs().maxCoeff() < 1e-6);
        RngStream held_rng(23, 0);
        const Eigen::MatrixXd xs = sample_sphere(6, 200, held_rng);
        const double residual =
            ((xs * theta_hat.transpose()) * O.transpose() - xs * theta_star.transpose())
                .rowwise()
                .norm()
                .maxCoeff();
        CHECK(residual <= 1e-6);
    }
    SUBCASE("aligned cross-moment is symmetric PSD; alignment beats random orthogonals") {
        Eigen::MatrixXd noise(3, 6);
        fill_standard_normal(noise, rng);
        const Eigen::MatrixXd theta_hat_raw = theta_star + 0.1 * noise;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> norm_eig(theta_hat_raw *
                                                                theta_hat_raw.transpose());
        const Eigen::MatrixXd theta_hat =
            theta_hat_raw / std::max(1.0, std::sqrt(norm_eig.eigenvalues().maxCoeff()));
        const Eigen::MatrixXd O =
            align_orthogonal_contrastive(theta_hat, theta_star, 40000, RngStream(24, 0));

        RngStream mom_rng(25, 0);
        const Eigen::MatrixXd xs = sample_sphere(6, 40000, mom_rng);
        const Eigen::MatrixXd cross = (xs * (O * theta_hat).transpose()).transpose() *
                                      (xs * theta_star.transpose()) / 40000.0;
        CHECK((cross - cross.transpose()).cwiseAbs().maxCoeff() < 5e-3);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (cross + cross.transpose()));
        CHECK(eig.eigenvalues().minCoeff() > -5e-3);

        RngStream held_rng(26, 0);
        const Eigen::MatrixXd held = sample_sphere(6, 2000, held_rng);
        auto mean_residual = [&](const Eigen::MatrixXd& Q) {
            return ((held * theta_hat.transpose()) * Q.transpose() - held * theta_star.transpose())
                .rowwise()
                .norm()
                .mean();
        };
        const double aligned = mean_residual(O);
        for (int i = 0; i < 100; ++i) {
            Eigen::MatrixXd gg(3, 3);
            fill_standard_normal(gg, rng);
            Eigen::HouseholderQR<Eigen::MatrixXd> qq(gg);
            const Eigen::MatrixXd Q = qq.householderQ() * Eigen::MatrixXd::Identity(3, 3);
            CHECK(aligned <= mean_residual(Q) + 1e-9);
        }
    }
}

TEST_CASE("pair-model Hellinger distance") {
    RngStream rng(27, 0);
    const Eigen::MatrixXd theta_star = 0.8 * orthonormal_rows(2, 4, rng);
    SUBCASE("zero at the truth") {
        const DivergenceEstimate est =
            hellinger_pairs(theta_star, theta_star, 2000, RngStream(28, 0));
        CHECK(est.value == 0.0);
    }
    SUBCASE("d = r = 1 matches the exact four-atom sum") {
        const double t_star = 0.9, t_alt = 0.5;
        // x, x' uniform on {-1, +1}: exact Bhattacharyya sum over the 8 atoms.
        double affinity = 0.0;
        for (double x : {-1.0, 1.0})
            for (double xp : {-1.0, 1.0})
                for (double t : {-1.0, 1.0}) {
                    const double p = 0.25 * sigmoid(t * t_star * t_star * x * xp);
                    const double q = 0.25 * sigmoid(t * t_alt * t_alt * x * xp);
                    affinity += std::sqrt(p * q);
                }
        const double exact = std::sqrt(std::max(0.0, 1.0 - affinity));
        const DivergenceEstimate est =
            hellinger_pairs(Eigen::MatrixXd::Constant(1, 1, t_alt),
                            Eigen::MatrixXd::Constant(1, 1, t_star), 400000, RngStream(29, 0));
        CHECK(std::abs(est.value - exact) <= 4.0 * std::max(est.std_error, 1e-6));
    }
    SUBCASE("Hellinger shrinks along the ascent path within noise") {
        ContrastiveModel model{theta_star, 1.0};
        RngStream data_rng(30, 0);
        const PairData pairs = sample_pairs(model, 20000, data_rng);
        ContrastiveOptConfig opt;
        opt.iterations = 400;
        opt.restarts = 1;
        opt.checkpoints = 10;
        const ContrastiveMleResult fit = mle_contrastive(pairs, 2, 4, opt, RngStream(31, 0));
        REQUIRE(fit.checkpoint_thetas.size() >= 3);
        double prev = 2.0, prev_se = 0.0;
        for (std::size_t i = 0; i < fit.checkpoint_thetas.size(); ++i) {
            const DivergenceEstimate est =
                hellinger_pairs(fit.checkpoint_thetas[i], theta_star, 40000, RngStream(32, 0));
            CHECK(est.value <= prev + (est.std_error + prev_se) + 1e-9);
            prev = est.value;
            prev_se = est.std_error;
        }
    }
}

TEST_CASE("weak informativeness verification") {
    RngStream rng(33, 0);
    const Eigen::MatrixXd theta_star = 0.8 * orthonormal_rows(2, 4, rng);
    Eigen::VectorXd beta(2);
    beta << 0.7, -0.4;
    const RegressionBeta beta_star{beta, 1.0, 1.0};
    SUBCASE("default constant value") {
        // (1/2) sqrt((2 + e + 1/e) / (2 sqrt 2 - 2)) evaluated independently
        const double e = 2.718281828459045;
        const double expected = 0.5 * std::sqrt((2.0 + e + 1.0 / e) / (2.0 * 1.4142135623730951 - 2.0));
        CHECK(contrastive_default_c3() == doctest::Approx(expected).epsilon(1e-12));
        CHECK(contrastive_default_c3() == doctest::Approx(1.2389).epsilon(1e-4));
    }
    SUBCASE("holds at the truth and near it") {
        const InformativeReport at_truth = verify_weakly_informative_contrastive(
            theta_star, theta_star, beta_star, 20000, RngStream(34, 0));
        CHECK(at_truth.lhs == 0.0);
        CHECK(at_truth.holds);
        for (int rep = 0; rep < 5; ++rep) {
            Eigen::MatrixXd noise(2, 4);
            fill_standard_normal(noise, rng);
            Eigen::MatrixXd cand = theta_star + 0.05 * noise;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cand * cand.transpose());
            cand /= std::max(1.0, std::sqrt(eig.eigenvalues().maxCoeff()));
            const InformativeReport r = verify_weakly_informative_contrastive(
                cand, theta_star, beta_star, 40000, RngStream(35, rep));
            CHECK(r.holds);
        }
    }
    SUBCASE("singular second moment is rejected") {
        Eigen::MatrixXd singular = theta_star;
        singular.row(1).setZero();
        CHECK_THROWS_AS(verify_weakly_informative_contrastive(theta_star, singular, beta_star, 100,
                                                              RngStream(36, 0)),
                        std::invalid_argument);
    }
}
