#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptlab/contrastive.hpp"
#include "ptlab/factor.hpp"
#include "ptlab/gmm.hpp"
#include "ptlab/rates.hpp"

namespace ptlab {

enum class Instantiation { factor, gmm, contrastive, counterexample };
std::string to_string(Instantiation inst);

struct RateCheck {
    std::string axis;  // "m" or "n"
    double slope_target = 0.0;
    double slope_tolerance = 0.0;
};

struct FactorConfig {
    int d = 50;
    int r = 3;
    double norm_bound = 2.0;
    std::vector<double> singular_values{2.0, 1.8, 1.6};
    double beta_norm = 0.25;
    double beta_ball_radius = 2.0;
    double noise_std = 0.3;
    std::uint64_t truth_seed = 7;
    FactorErm erm_method = FactorErm::fast_rate_ols;
    double truncation_level = 0.0;  // 0 -> (D^2+1)^3 log n
    bool risk_mc = false;           // closed form by default
};

struct GmmConfig {
    int d = 30;
    int K = 4;
    double norm_scale = 80.0;
    double eps = 0.1;
    double separation_margin = 1.01;  // times the separation threshold
    std::vector<int> bits;            // defaults to alternating
    std::uint64_t truth_seed = 7;
    int em_restarts = 8;
};

struct ContrastiveConfig {
    int d = 20;
    int r = 4;
    std::vector<double> singular_values{0.9, 0.8, 0.7, 0.6};
    double beta_norm = 1.0;
    double beta_ball_radius = 2.0;
    double noise_std = 1.0;
    std::uint64_t truth_seed = 7;
    int mle_iterations = 300;
    int mle_restarts = 3;
    double mle_step = 0.5;
    double truncation_level = 0.0;  // 0 -> 36 (D^2+1) log n
};

struct CounterConfig {
    int L_exponent = 10;
};

struct ExperimentConfig {
    std::string experiment_id = "experiment";
    Instantiation instantiation = Instantiation::factor;
    std::vector<std::int64_t> m_values;
    std::vector<std::int64_t> n_values;
    std::int64_t trials = 1;
    std::uint64_t master_seed = 0;
    std::int64_t mc_count = 100000;
    int jobs = 0;  // 0 -> all hardware threads
    std::string out_dir = "out";
    bool baseline = true;
    std::vector<RateCheck> rate_checks;
    ErmConfig erm;
    FactorConfig factor;
    GmmConfig gmm;
    ContrastiveConfig contrastive;
    CounterConfig counterexample;
};

// Parses and validates a config document; errors cite the JSON pointer path.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config_file(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& config);

struct SweepRow {
    std::string experiment_id;
    std::string instantiation;
    std::string method;  // pipeline | baseline
    std::int64_t m = 0;
    std::int64_t n = 0;
    std::int64_t d = 0;
    std::int64_t r_or_k = 0;
    std::int64_t trial = 0;
    std::uint64_t seed = 0;
    double excess_risk = 0.0;
    double excess_risk_se = 0.0;
    double aux_tv = 0.0;
    double aux_align_residual = 0.0;
    int failed = 0;
};

struct SweepOutput {
    std::vector<SweepRow> rows;
    nlohmann::json extra;  // instantiation-specific summary facts
};

// Deterministic sweep over the (m, n) grid: per (m, trial) the pretraining
// phase runs once and is reused across the n cells; pipeline and baseline see
// identical labeled data; row order and contents are independent of `jobs`.
SweepOutput run_sweep(const ExperimentConfig& config);

struct RateReport {
    std::string axis;
    double slope = 0.0;
    double slope_std_error = 0.0;
    int points_used = 0;
    double target = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string error;  // nonempty when the fit could not be computed
};

// Median per cell along `axis`, restricted to cells where the other axis sits
// at its maximum configured value; log-log slope of the medians.
RateReport fit_rate(const std::vector<SweepRow>& rows, const ExperimentConfig& config,
                    const RateCheck& check);

// Deterministic ground-truth builders (pure functions of the truth seed).
FactorModel build_factor_truth(const FactorConfig& config, RegressionBeta* beta_star);
GmmModel build_gmm_truth(const GmmConfig& config, LabelerPsi* psi_star);
ContrastiveModel build_contrastive_truth(const ContrastiveConfig& config,
                                         RegressionBeta* beta_star);

// Monte-Carlo squared-loss excess over the sphere input law:
// mean of (pred(x) - bayes(x))^2 with its standard error.
RiskEstimate contrastive_excess_mc(const Eigen::MatrixXd& theta_hat,
                                   const Eigen::VectorXd& beta_hat,
                                   const Eigen::MatrixXd& theta_star,
                                   const Eigen::VectorXd& beta_star, Eigen::Index count,
                                   RngStream rng);

}  // namespace ptlab
