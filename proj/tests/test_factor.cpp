#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "ptlab/factor.hpp"
#include "ptlab/loss.hpp"
#include "ptlab/mvn.hpp"

using namespace ptlab;

namespace {

Eigen::MatrixXd random_orthogonal(int n, RngStream& rng) {
    Eigen::MatrixXd g(n, n);
    fill_standard_normal(g, rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    return qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
}

Eigen::MatrixXd random_loading(int d, int r, double sigma_min, double sigma_max, RngStream& rng) {
    Eigen::MatrixXd g(d, r);
    fill_standard_normal(g, rng);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(g, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd s(r);
    for (int i = 0; i < r; ++i)
        s[i] = sigma_max - (sigma_max - sigma_min) * i / std::max(1, r - 1);
    return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

}  // namespace

TEST_CASE("unlabeled sample covariance matches B B' + I") {
    RngStream rng(1, 0);
    SUBCASE("zero loading gives the identity") {
        FactorModel model{Eigen::MatrixXd::Zero(3, 1), 1.0};
        const Eigen::MatrixXd x = sample_factor_unlabeled(model, 1000000, rng);
        const Eigen::MatrixXd cov = x.transpose() * x / 1e6;
        CHECK((cov - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 0.02);
    }
    SUBCASE("rank-one loading gives diag(5,1,1)") {
        Eigen::MatrixXd B(3, 1);
        B << 2, 0, 0;
        FactorModel model{B, 2.0};
        const Eigen::MatrixXd x = sample_factor_unlabeled(model, 1000000, rng);
        const Eigen::MatrixXd cov = x.transpose() * x / 1e6;
        Eigen::MatrixXd expected = Eigen::MatrixXd::Identity(3, 3);
        expected(0, 0) = 5.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                CHECK(std::abs(cov(i, j) - expected(i, j)) < 0.02 * std::max(1.0, expected(i, j)));
    }
}

TEST_CASE("empirical mean norm obeys the CLT envelope in >= 95% of repeats") {
    RngStream rng(2, 0);
    Eigen::MatrixXd B(4, 2);
    B << 1, 0, 0, 1, 0.5, 0.2, 0, 0.3;
    FactorModel model{B, 2.0};
    const double spectral = B.jacobiSvd().singularValues()(0);
    const int m = 2000, repeats = 40;
    int ok = 0;
    for (int rep = 0; rep < repeats; ++rep) {
        RngStream rep_rng = rng.substream(rep);
        const Eigen::MatrixXd x = sample_factor_unlabeled(model, m, rep_rng);
        const double mean_norm = (x.colwise().sum() / m).norm();
        if (mean_norm <= 4.0 * std::sqrt(4.0 / m) * std::sqrt(spectral * spectral + 1.0)) ++ok;
    }
    CHECK(ok >= 38);
}

TEST_CASE("labeled sampling: moments and determinism") {
    RngStream rng(3, 0);
    SUBCASE("beta = 0 makes y independent noise") {
        FactorModel model{Eigen::MatrixXd::Zero(3, 1), 1.0};
        RegressionBeta psi{Eigen::VectorXd::Zero(1), 1.0, 0.5};
        const Eigen::MatrixXd lab = sample_factor_labeled(model, psi, 200000, rng);
        const double var_y = lab.col(3).squaredNorm() / lab.rows();
        CHECK(std::abs(var_y - 0.25) < 0.01);
        const double cov_xy = (lab.col(0).array() * lab.col(3).array()).sum() / lab.rows();
        CHECK(std::abs(cov_xy) < 0.01);
    }
    SUBCASE("Cov(x1, y) = (B beta)_1") {
        Eigen::MatrixXd B(3, 1);
        B << 2, 0, 0;
        FactorModel model{B, 2.0};
        RegressionBeta psi{Eigen::VectorXd::Ones(1), 1.0, 1.0};
        const Eigen::MatrixXd lab = sample_factor_labeled(model, psi, 1000000, rng);
        const double cov = (lab.col(0).array() * lab.col(3).array()).sum() / lab.rows();
        CHECK(std::abs(cov - 2.0) < 0.04);  // 2%
    }
    SUBCASE("n = 1 determinism") {
        Eigen::MatrixXd B(3, 2);
        B << 1, 0, 0, 1, 0, 0;
        FactorModel model{B, 1.5};
        RegressionBeta psi{Eigen::VectorXd::Ones(2) * 0.5, 1.0, 1.0};
        RngStream a(9, 9), b(9, 9);
        CHECK(sample_factor_labeled(model, psi, 1, a) == sample_factor_labeled(model, psi, 1, b));
    }
}

TEST_CASE("eigen-truncation MLE") {
    SUBCASE("identity covariance clamps to zero") {
        int clamped = 0;
        const Eigen::MatrixXd B = mle_factor_from_covariance(Eigen::MatrixXd::Identity(4, 4), 2, &clamped);
        CHECK(B.cwiseAbs().maxCoeff() == 0.0);
        CHECK(clamped == 2);
    }
    SUBCASE("diagonal case by hand") {
        Eigen::VectorXd diag(3);
        diag << 5, 1, 1;
        const Eigen::MatrixXd B = mle_factor_from_covariance(diag.asDiagonal(), 1);
        Eigen::MatrixXd expected(3, 1);
        expected << 2, 0, 0;  // sign fixed nonnegative
        CHECK((B - expected).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((B * B.transpose() - Eigen::Vector3d(4, 0, 0).asDiagonal().toDenseMatrix())
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
    }
    SUBCASE("population covariance recovers B* B*' exactly") {
        RngStream rng(4, 0);
        for (int rep = 0; rep < 10; ++rep) {
            RngStream rep_rng = rng.substream(rep);
            const Eigen::MatrixXd B_star = random_loading(8, 3, 0.5, 2.0, rep_rng);
            const Eigen::MatrixXd sigma =
                B_star * B_star.transpose() + Eigen::MatrixXd::Identity(8, 8);
            const Eigen::MatrixXd B_hat = mle_factor_from_covariance(sigma, 3);
            CHECK((B_hat * B_hat.transpose() - B_star * B_star.transpose()).norm() <= 1e-10);
        }
    }
    SUBCASE("argument validation") {
        CHECK_THROWS_AS(mle_factor_from_covariance(Eigen::MatrixXd::Identity(3, 3), 3),
                        std::invalid_argument);
        CHECK_THROWS_AS(mle_factor(Eigen::MatrixXd(0, 3), 1), std::invalid_argument);
    }
}

TEST_CASE("MLE objective optimality against random feasible candidates") {
    RngStream rng(5, 0);
    const Eigen::MatrixXd B_star = random_loading(6, 2, 0.8, 1.8, rng);
    const FactorModel model{B_star, 2.0};
    RngStream data_rng = rng.substream(1);
    const Eigen::MatrixXd x = sample_factor_unlabeled(model, 4000, data_rng);
    const Eigen::MatrixXd sigma_hat = x.transpose() * x / 4000.0;
    const Eigen::MatrixXd B_hat = mle_factor_from_covariance(sigma_hat, 2);
    const double opt = factor_mle_objective(sigma_hat, B_hat);
    RngStream cand_rng = rng.substream(2);
    for (int i = 0; i < 200; ++i) {
        Eigen::MatrixXd cand(6, 2);
        fill_standard_normal(cand, cand_rng);
        cand *= 2.0 / std::max(1.0, cand.jacobiSvd().singularValues()(0));
        CHECK(opt <= factor_mle_objective(sigma_hat, cand) + 1e-10);
    }
}

TEST_CASE("eigen-truncation satisfies ||B^B^' - (S-I)|| <= ||S - Sigma||") {
    RngStream rng(6, 0);
    for (int rep = 0; rep < 20; ++rep) {
        RngStream rep_rng = rng.substream(rep);
        const Eigen::MatrixXd B_star = random_loading(5, 2, 0.5, 2.0, rep_rng);
        const FactorModel model{B_star, 2.0};
        const Eigen::Index m = 50 + 100 * rep;
        RngStream data_rng = rep_rng.substream(1);
        const Eigen::MatrixXd x = sample_factor_unlabeled(model, m, data_rng);
        const Eigen::MatrixXd sigma_hat = x.transpose() * x / static_cast<double>(m);
        const Eigen::MatrixXd sigma = B_star * B_star.transpose() + Eigen::MatrixXd::Identity(5, 5);
        const Eigen::MatrixXd B_hat = mle_factor_from_covariance(sigma_hat, 2);
        const auto spec_norm = [](const Eigen::MatrixXd& M) {
            return M.jacobiSvd().singularValues()(0);
        };
        CHECK(spec_norm(B_hat * B_hat.transpose() - (sigma_hat - Eigen::MatrixXd::Identity(5, 5))) <=
              spec_norm(sigma_hat - sigma) + 1e-12);
    }
}

TEST_CASE("predictor formula") {
    SUBCASE("zero loading predicts zero") {
        CHECK(predictor_factor(Eigen::MatrixXd::Zero(3, 1), Eigen::VectorXd::Ones(1),
                               Eigen::Vector3d(1, 2, 3)) == 0.0);
    }
    SUBCASE("hand example: (BB'+I)^{-1} = diag(1/5,1,1)") {
        Eigen::MatrixXd B(3, 1);
        B << 2, 0, 0;
        CHECK(predictor_factor(B, Eigen::VectorXd::Ones(1), Eigen::Vector3d(1, 0, 0)) ==
              doctest::Approx(0.4).epsilon(1e-12));
    }
    SUBCASE("rotation invariance of the predictor") {
        RngStream rng(7, 0);
        const Eigen::MatrixXd B = random_loading(5, 2, 0.5, 1.5, rng);
        Eigen::VectorXd beta(2);
        beta << 0.3, -0.8;
        for (int rep = 0; rep < 5; ++rep) {
            const Eigen::MatrixXd O = random_orthogonal(2, rng);
            Eigen::MatrixXd xs(1, 5);
            fill_standard_normal(xs, rng);
            const Eigen::VectorXd x = xs.row(0).transpose();
            CHECK(predictor_factor(B * O, O.transpose() * beta, x) ==
                  doctest::Approx(predictor_factor(B, beta, x)).epsilon(1e-12));
        }
    }
}

TEST_CASE("joint covariance of (x, y) is rotation invariant entrywise") {
    RngStream rng(8, 0);
    const Eigen::MatrixXd B = random_loading(4, 2, 0.5, 1.5, rng);
    Eigen::VectorXd beta(2);
    beta << 1.0, -0.4;
    const Eigen::MatrixXd O = random_orthogonal(2, rng);
    const Eigen::MatrixXd BO = B * O;
    const Eigen::VectorXd betaO = O.transpose() * beta;
    // cov blocks: [BB'+I, B beta; (B beta)', beta'beta + noise^2]
    const Eigen::MatrixXd top1 = B * B.transpose(), top2 = BO * BO.transpose();
    CHECK((top1 - top2).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(((B * beta) - (BO * betaO)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(beta.squaredNorm() - betaO.squaredNorm()) < 1e-12);
}

TEST_CASE("OLS on pretrained features") {
    RngStream rng(9, 0);
    const Eigen::MatrixXd B_hat = random_loading(5, 2, 0.6, 1.4, rng);
    const Eigen::MatrixXd C = factor_feature_map(B_hat);
    SUBCASE("noise-free recovery") {
        Eigen::VectorXd beta(2);
        beta << 0.7, -0.2;
        Eigen::MatrixXd X(50, 5);
        fill_standard_normal(X, rng);
        Eigen::MatrixXd labeled(50, 6);
        labeled.leftCols(5) = X;
        labeled.col(5) = X * C.transpose() * beta;
        const Eigen::VectorXd fit = erm_beta_ols(B_hat, labeled);
        CHECK((fit - beta).norm() < 1e-10);
    }
    SUBCASE("r = 1 closed form and permutation invariance") {
        Eigen::MatrixXd B1(4, 1);
        B1 << 1.2, -0.3, 0.4, 0.0;
        Eigen::MatrixXd X(30, 4);
        fill_standard_normal(X, rng);
        Eigen::MatrixXd noise(30, 1);
        fill_standard_normal(noise, rng);
        Eigen::MatrixXd labeled(30, 5);
        labeled.leftCols(4) = X;
        labeled.col(4) = 0.5 * X.col(0) + 0.1 * noise.col(0);
        const Eigen::VectorXd u = X * factor_feature_map(B1).transpose();
        const double closed = u.dot(labeled.col(4)) / u.squaredNorm();
        const Eigen::VectorXd fit = erm_beta_ols(B1, labeled);
        CHECK(fit[0] == doctest::Approx(closed).epsilon(1e-12));

        Eigen::MatrixXd permuted = labeled;
        permuted.row(0).swap(permuted.row(17));
        permuted.row(3).swap(permuted.row(29));
        const Eigen::VectorXd fit2 = erm_beta_ols(B1, permuted);
        CHECK(std::abs(fit2[0] - fit[0]) < 1e-12);
    }
}

TEST_CASE("truncated ERM") {
    RngStream rng(10, 0);
    const Eigen::MatrixXd B_hat = random_loading(4, 1, 0.8, 1.6, rng);
    ErmConfig config;
    SUBCASE("inactive truncation reduces to projected OLS") {
        Eigen::MatrixXd X(60, 4);
        fill_standard_normal(X, rng);
        Eigen::MatrixXd noise(60, 1);
        fill_standard_normal(noise, rng);
        Eigen::MatrixXd labeled(60, 5);
        labeled.leftCols(4) = X;
        const Eigen::VectorXd u = X * factor_feature_map(B_hat).transpose();
        labeled.col(4) = 0.4 * u + 0.05 * noise.col(0);
        const Eigen::VectorXd ols = erm_beta_ols(B_hat, labeled);
        const Eigen::VectorXd fit =
            erm_beta_truncated(B_hat, labeled, 1e6, 10.0, config, RngStream(11, 0));
        CHECK((fit - ols).norm() < 1e-6);
    }
    SUBCASE("single feasible point is fit exactly") {
        Eigen::MatrixXd labeled(1, 5);
        labeled << 1.0, 0.0, 0.0, 0.0, 0.2;
        const Eigen::VectorXd fit =
            erm_beta_truncated(B_hat, labeled, 10.0, 10.0, config, RngStream(12, 0));
        const Eigen::MatrixXd u = labeled.leftCols(4) * factor_feature_map(B_hat).transpose();
        const double resid = labeled(0, 4) - fit.dot(u.row(0).transpose());
        CHECK(std::abs(resid) < 1e-6);
    }
    SUBCASE("outlier beyond sqrt(L): truncated fit beats plain OLS and matches a grid oracle") {
        Eigen::MatrixXd X(41, 4);
        fill_standard_normal(X, rng);
        Eigen::MatrixXd labeled(41, 5);
        labeled.leftCols(4) = X;
        const Eigen::VectorXd u = X * factor_feature_map(B_hat).transpose();
        labeled.col(4) = 0.5 * u;
        labeled(40, 4) += 40.0;  // one gross outlier
        const double L = 1.0;
        const Eigen::VectorXd ols = erm_beta_ols(B_hat, labeled);
        const Eigen::VectorXd fit =
            erm_beta_truncated(B_hat, labeled, L, 10.0, config, RngStream(13, 0));
        const Eigen::MatrixXd features = u;
        const double obj_fit = truncated_objective(features, labeled.col(4), fit, L);
        const double obj_ols = truncated_objective(features, labeled.col(4), ols, L);
        CHECK(obj_fit <= obj_ols + 1e-8);
        double grid_best = 1e100;
        for (double b = -10.0; b <= 10.0; b += 0.001) {
            Eigen::VectorXd cand(1);
            cand << b;
            grid_best = std::min(grid_best, truncated_objective(features, labeled.col(4), cand, L));
        }
        CHECK(obj_fit <= grid_best + 1e-4);
    }
}

TEST_CASE("closed-form excess risk") {
    RngStream rng(14, 0);
    const Eigen::MatrixXd B_star = random_loading(5, 2, 0.7, 1.8, rng);
    Eigen::VectorXd beta_star(2);
    beta_star << 0.6, -0.3;
    SUBCASE("zero at the truth and under rotation") {
        CHECK(excess_risk_factor_closed(B_star, beta_star, B_star, beta_star) == 0.0);
        const Eigen::MatrixXd O = random_orthogonal(2, rng);
        CHECK(excess_risk_factor_closed(B_star, beta_star, B_star * O, O.transpose() * beta_star) <
              1e-12);
    }
    SUBCASE("nonnegative on random fits") {
        for (int i = 0; i < 20; ++i) {
            Eigen::MatrixXd Bh(5, 2);
            fill_standard_normal(Bh, rng);
            Eigen::MatrixXd bh(1, 2);
            fill_standard_normal(bh, rng);
            CHECK(excess_risk_factor_closed(B_star, beta_star, Bh, bh.row(0).transpose()) >= 0.0);
        }
    }
    SUBCASE("agrees with paired Monte-Carlo") {
        const FactorModel model{B_star, 2.0};
        const RegressionBeta psi{beta_star, 1.0, 1.0};
        Eigen::VectorXd beta_hat = beta_star;
        beta_hat[0] += 0.25;  // (B*, beta* + delta e1)
        const double closed = excess_risk_factor_closed(B_star, beta_star, B_star, beta_hat);
        LabeledSamplerFn sampler = [&](Eigen::Index count, RngStream& r, Eigen::MatrixXd& X,
                                       Eigen::VectorXd& y) {
            const Eigen::MatrixXd lab = sample_factor_labeled(model, psi, count, r);
            X = lab.leftCols(5);
            y = lab.col(5);
        };
        const Eigen::MatrixXd Bs = B_star;
        const RiskEstimate mc = excess_risk_mc(
            [&](const Eigen::VectorXd& x) { return predictor_factor(Bs, beta_hat, x); },
            [&](const Eigen::VectorXd& x) { return predictor_factor(Bs, beta_star, x); },
            LossSpec::squared(), sampler, 200000, RngStream(15, 0));
        CHECK(std::abs(mc.value - closed) < 3.0 * mc.std_error);
    }
}

TEST_CASE("rotation alignment") {
    RngStream rng(16, 0);
    const Eigen::MatrixXd B_star = random_loading(6, 3, 0.6, 1.7, rng);
    SUBCASE("identity at the truth") {
        const Eigen::MatrixXd O = align_rotation_factor(B_star, B_star);
        CHECK((O - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("recovers a planted rotation") {
        const Eigen::MatrixXd O0 = random_orthogonal(3, rng);
        const Eigen::MatrixXd O = align_rotation_factor(B_star * O0, B_star);
        CHECK((O - O0.transpose()).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(((B_star * O0) * O - B_star).norm() <= 1e-10);
        CHECK((O * O.transpose() - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("beats 100 random rotations") {
        Eigen::MatrixXd B(6, 3);
        fill_standard_normal(B, rng);
        const Eigen::MatrixXd O = align_rotation_factor(B, B_star);
        const double best = (B * O - B_star).norm();
        for (int i = 0; i < 100; ++i) {
            const Eigen::MatrixXd R = random_orthogonal(3, rng);
            CHECK(best <= (B * R - B_star).norm() + 1e-12);
        }
    }
}

TEST_CASE("supervised baseline") {
    RngStream rng(17, 0);
    SUBCASE("noise-free realizable recovery with n >= d") {
        Eigen::MatrixXd X(40, 6);
        fill_standard_normal(X, rng);
        Eigen::VectorXd w(6);
        w << 1, -2, 0.5, 0, 3, -1;
        Eigen::MatrixXd labeled(40, 7);
        labeled.leftCols(6) = X;
        labeled.col(6) = X * w;
        const Eigen::VectorXd fit = supervised_baseline_factor(labeled);
        CHECK((fit - w).norm() < 1e-8);
    }
    SUBCASE("n < d gives the minimum-norm interpolant") {
        Eigen::MatrixXd X(3, 6);
        fill_standard_normal(X, rng);
        Eigen::MatrixXd labeled(3, 7);
        labeled.leftCols(6) = X;
        labeled.col(6) = Eigen::Vector3d(1.0, -0.5, 2.0);
        bool pseudo = false;
        const Eigen::VectorXd fit = supervised_baseline_factor(labeled, &pseudo);
        CHECK(pseudo);
        CHECK((X * fit - labeled.col(6)).norm() < 1e-8);
    }
}

TEST_CASE("two-phase fit report") {
    RngStream rng(22, 0);
    const Eigen::MatrixXd B_star = random_loading(6, 2, 1.0, 1.8, rng);
    const FactorModel model{B_star, 2.0};
    const RegressionBeta psi{Eigen::Vector2d(0.5, -0.2), 2.0, 0.5};
    RngStream data_rng(23, 0);
    const Eigen::MatrixXd unlabeled = sample_factor_unlabeled(model, 5000, data_rng);
    const Eigen::MatrixXd labeled = sample_factor_labeled(model, psi, 400, data_rng);
    const FactorFitReport ols_fit = fit_factor(unlabeled, labeled, 2, FactorErm::fast_rate_ols,
                                               0.0, 2.0, ErmConfig{}, RngStream(24, 0));
    CHECK(ols_fit.clamped_eigencount == 0);
    CHECK_FALSE(ols_fit.ols_pseudo_inverse);
    CHECK(excess_risk_factor_closed(B_star, psi.beta, ols_fit.B_hat, ols_fit.beta_hat) < 0.05);
    const FactorFitReport trunc_fit =
        fit_factor(unlabeled, labeled, 2, FactorErm::truncated_projected, 0.0, 2.0, ErmConfig{},
                   RngStream(25, 0));
    CHECK(excess_risk_factor_closed(B_star, psi.beta, trunc_fit.B_hat, trunc_fit.beta_hat) < 0.05);
    // identical pretraining phase on identical data
    CHECK(trunc_fit.B_hat == ols_fit.B_hat);
}

TEST_CASE("informativeness verification") {
    RngStream rng(18, 0);
    SUBCASE("kappa plug-in value") {
        Eigen::MatrixXd B_star = Eigen::MatrixXd::Zero(4, 2);
        B_star(0, 0) = 2.0;
        B_star(1, 1) = 2.0;  // sigma_max = sigma_min = 2
        const InformativeReport report =
            verify_informative_factor(B_star, B_star, 1000, RngStream(19, 0));
        CHECK(report.kappa_used == doctest::Approx(5062.5).epsilon(1e-12));
        CHECK(report.lhs == 0.0);
        CHECK(report.holds);
    }
    SUBCASE("holds on perturbed instances") {
        const Eigen::MatrixXd B_star = random_loading(5, 2, 1.0, 2.0, rng);
        for (int i = 0; i < 5; ++i) {
            Eigen::MatrixXd noise(5, 2);
            fill_standard_normal(noise, rng);
            const Eigen::MatrixXd B = B_star + 0.05 * noise;
            const InformativeReport report =
                verify_informative_factor(B, B_star, 40000, RngStream(20, i));
            CHECK(report.holds);
        }
    }
    SUBCASE("rejects singular truth") {
        CHECK_THROWS_AS(
            verify_informative_factor(Eigen::MatrixXd::Zero(3, 1), Eigen::MatrixXd::Zero(3, 1), 100,
                                      RngStream(21, 0)),
            std::invalid_argument);
    }
}
