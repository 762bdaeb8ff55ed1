#include "ptlab/verify.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "ptlab/contrastive.hpp"
#include "ptlab/factor.hpp"
#include "ptlab/gmm.hpp"
#include "ptlab/mvn.hpp"
#include "ptlab/parallel.hpp"

namespace ptlab {

namespace {

Eigen::MatrixXd loading_with_spectrum(int d, int r, const Eigen::VectorXd& spectrum,
                                      RngStream& rng) {
    Eigen::MatrixXd g(d, r);
    fill_standard_normal(g, rng);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(g, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return svd.matrixU() * spectrum.asDiagonal() * svd.matrixV().transpose();
}

nlohmann::json items_to_json(const std::vector<VerifyItem>& items) {
    nlohmann::json arr = nlohmann::json::array();
    double worst_ratio = 0.0;
    int held = 0;
    for (const VerifyItem& item : items) {
        arr.push_back({{"lhs", item.lhs},
                       {"rhs", item.rhs},
                       {"ratio", item.ratio},
                       {"precondition_ok", item.precondition_ok},
                       {"holds", item.holds}});
        worst_ratio = std::max(worst_ratio, item.ratio);
        held += item.holds ? 1 : 0;
    }
    return {{"instances", arr}, {"held", held}, {"total", items.size()}, {"max_ratio", worst_ratio}};
}

}  // namespace

bool VerifySuiteReport::all_hold() const {
    for (const auto* items : {&factor, &gmm, &contrastive})
        for (const VerifyItem& item : *items)
            if (!item.holds || !item.precondition_ok) return false;
    return true;
}

nlohmann::json VerifySuiteReport::to_json() const {
    return {{"factor", items_to_json(factor)},
            {"gmm", items_to_json(gmm)},
            {"contrastive", items_to_json(contrastive)}};
}

VerifySuiteReport run_verification_suite(const VerifySuiteConfig& config) {
    VerifySuiteReport report;
    RngStream root(config.seed, 0);

    {  // factor: sigma*_min >= 1 per the instance family used throughout
        const int d = 8, r = 2;
        Eigen::VectorXd spectrum(r);
        spectrum << 2.0, 1.0;
        RngStream truth_rng = root.substream(1);
        const Eigen::MatrixXd B_star = loading_with_spectrum(d, r, spectrum, truth_rng);
        report.factor.resize(static_cast<std::size_t>(config.factor_instances));
        par::for_each_index(static_cast<std::size_t>(config.factor_instances), config.jobs,
                            [&](std::size_t i) {
                                RngStream inst = root.substream(1000 + i);
                                Eigen::MatrixXd noise(d, r);
                                fill_standard_normal(noise, inst);
                                const Eigen::MatrixXd B = B_star + 0.05 * noise;
                                const InformativeReport r2 = verify_informative_factor(
                                    B, B_star, config.mc_count, inst.substream(1), config.factor_c1);
                                VerifyItem item;
                                item.lhs = r2.lhs;
                                item.rhs = r2.rhs;
                                item.ratio = r2.rhs > 0 ? r2.lhs / r2.rhs : 0.0;
                                item.holds = r2.holds;
                                report.factor[i] = item;
                            });
    }

    {  // gmm: perturbations small enough to keep the marginal TV below 1/(4K)
        const int d = 8, K = 3;
        Eigen::MatrixXd centers;
        {
            RngStream truth_rng = root.substream(2);
            Eigen::MatrixXd g(d, K);
            fill_standard_normal(g, truth_rng);
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
            const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, K);
            const double scale = separation_threshold(d, K) * 1.01 / std::sqrt(2.0);
            centers = scale * q.transpose();
        }
        report.gmm.resize(static_cast<std::size_t>(config.gmm_instances));
        par::for_each_index(static_cast<std::size_t>(config.gmm_instances), config.jobs,
                            [&](std::size_t i) {
                                RngStream inst = root.substream(2000 + i);
                                Eigen::MatrixXd noise(K, d);
                                fill_standard_normal(noise, inst);
                                // fixed-norm shifts keep the marginal TV safely
                                // below the 1/(4K) precondition
                                noise.rowwise().normalize();
                                const Eigen::MatrixXd cand = centers + 0.12 * noise;
                                const GmmInformativeReport r2 = verify_informative_gmm(
                                    cand, centers, config.mc_count, inst.substream(1),
                                    config.gmm_constant);
                                VerifyItem item;
                                item.lhs = r2.lhs;
                                item.rhs = r2.rhs;
                                item.ratio = r2.rhs > 0 ? r2.lhs / r2.rhs : 0.0;
                                item.precondition_ok = r2.precondition_ok;
                                item.holds = r2.holds;
                                report.gmm[i] = item;
                            });
    }

    {  // contrastive
        const int d = 6, r = 2;
        Eigen::MatrixXd theta_star;
        RegressionBeta beta_star;
        {
            RngStream truth_rng = root.substream(3);
            Eigen::MatrixXd g(d, r);
            fill_standard_normal(g, truth_rng);
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
            const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, r);
            Eigen::VectorXd spectrum(r);
            spectrum << 0.8, 0.6;
            theta_star = spectrum.asDiagonal() * q.transpose();
            Eigen::MatrixXd bg(1, r);
            fill_standard_normal(bg, truth_rng);
            beta_star.beta = bg.row(0).transpose().normalized();
            beta_star.norm_bound = 1.0;
            beta_star.noise_std = 1.0;
        }
        report.contrastive.resize(static_cast<std::size_t>(config.contrastive_instances));
        par::for_each_index(
            static_cast<std::size_t>(config.contrastive_instances), config.jobs, [&](std::size_t i) {
                RngStream inst = root.substream(3000 + i);
                Eigen::MatrixXd noise(r, d);
                fill_standard_normal(noise, inst);
                Eigen::MatrixXd cand = theta_star + 0.05 * noise;
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cand * cand.transpose());
                cand /= std::max(1.0, std::sqrt(eig.eigenvalues().maxCoeff()));
                const InformativeReport r2 = verify_weakly_informative_contrastive(
                    cand, theta_star, beta_star, config.mc_count, inst.substream(1),
                    config.contrastive_c3);
                VerifyItem item;
                item.lhs = r2.lhs;
                item.rhs = r2.rhs;
                item.ratio = r2.rhs > 0 ? r2.lhs / r2.rhs : 0.0;
                item.holds = r2.holds;
                report.contrastive[i] = item;
            });
    }
    return report;
}

}  // namespace ptlab
