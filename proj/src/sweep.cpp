#include "ptlab/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "ptlab/counterexample.hpp"
#include "ptlab/mvn.hpp"
#include "ptlab/parallel.hpp"

namespace ptlab {

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& path, const std::string& message) {
    throw std::runtime_error("config error at " + path + ": " + message);
}

const json* find(const json& doc, const std::string& key) {
    auto it = doc.find(key);
    return it == doc.end() ? nullptr : &*it;
}

template <typename T>
T get_or(const json& doc, const std::string& path, const std::string& key, T fallback) {
    const json* v = find(doc, key);
    if (!v) return fallback;
    try {
        return v->get<T>();
    } catch (const json::exception& e) {
        config_error(path + "/" + key, e.what());
    }
}

std::vector<std::int64_t> get_int_list(const json& doc, const std::string& path,
                                       const std::string& key, bool required) {
    const json* v = find(doc, key);
    if (!v) {
        if (required) config_error(path + "/" + key, "missing required array");
        return {};
    }
    if (!v->is_array() || v->empty()) config_error(path + "/" + key, "must be a nonempty array");
    std::vector<std::int64_t> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
        const json& e = (*v)[i];
        if (!e.is_number_integer() || e.get<std::int64_t>() < 1)
            config_error(path + "/" + key + "/" + std::to_string(i), "must be a positive integer");
        out.push_back(e.get<std::int64_t>());
    }
    return out;
}

Eigen::MatrixXd orthonormal_columns(int rows, int cols, RngStream& rng) {
    Eigen::MatrixXd g(rows, cols);
    fill_standard_normal(g, rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
    return q;
}

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

struct SlotLayout {
    std::int64_t n_count = 0;
    std::int64_t trials = 0;
    std::int64_t methods = 1;

    std::size_t slot(std::int64_t m_idx, std::int64_t n_idx, std::int64_t trial,
                     std::int64_t method) const {
        const std::int64_t cell = m_idx * n_count + n_idx;
        return static_cast<std::size_t>((cell * trials + trial) * methods + method);
    }
};

}  // namespace

std::string to_string(Instantiation inst) {
    switch (inst) {
        case Instantiation::factor: return "factor";
        case Instantiation::gmm: return "gmm";
        case Instantiation::contrastive: return "contrastive";
        case Instantiation::counterexample: return "counterexample";
    }
    return "unknown";
}

ExperimentConfig parse_config(const json& doc) {
    if (!doc.is_object()) config_error("/", "document must be an object");
    ExperimentConfig c;
    c.experiment_id = get_or<std::string>(doc, "", "experiment_id", c.experiment_id);

    const json* inst = find(doc, "instantiation");
    if (!inst || !inst->is_string()) config_error("/instantiation", "must be a string");
    const std::string name = inst->get<std::string>();
    if (name == "factor") c.instantiation = Instantiation::factor;
    else if (name == "gmm") c.instantiation = Instantiation::gmm;
    else if (name == "contrastive") c.instantiation = Instantiation::contrastive;
    else if (name == "counterexample") c.instantiation = Instantiation::counterexample;
    else config_error("/instantiation", "expected factor|gmm|contrastive|counterexample");

    const bool is_counter = c.instantiation == Instantiation::counterexample;
    if (!is_counter) {
        c.m_values = get_int_list(doc, "", "m_values", true);
        c.n_values = get_int_list(doc, "", "n_values", true);
    } else {
        c.m_values = get_int_list(doc, "", "m_values", false);
        c.n_values = get_int_list(doc, "", "n_values", false);
    }
    c.trials = get_or<std::int64_t>(doc, "", "trials", c.trials);
    if (c.trials < 1) config_error("/trials", "must be >= 1");
    c.master_seed = get_or<std::uint64_t>(doc, "", "master_seed", c.master_seed);
    c.mc_count = get_or<std::int64_t>(doc, "", "mc_count", c.mc_count);
    if (c.mc_count < 1) config_error("/mc_count", "must be >= 1");
    c.jobs = get_or<int>(doc, "", "jobs", c.jobs);
    c.out_dir = get_or<std::string>(doc, "", "out_dir", c.out_dir);
    c.baseline = get_or<bool>(doc, "", "baseline", c.baseline);

    if (const json* checks = find(doc, "rate_checks")) {
        if (!checks->is_array()) config_error("/rate_checks", "must be an array");
        for (std::size_t i = 0; i < checks->size(); ++i) {
            const std::string path = "/rate_checks/" + std::to_string(i);
            const json& e = (*checks)[i];
            RateCheck rc;
            rc.axis = get_or<std::string>(e, path, "axis", std::string());
            if (rc.axis != "m" && rc.axis != "n") config_error(path + "/axis", "must be m or n");
            rc.slope_target = get_or<double>(e, path, "slope_target", 0.0);
            rc.slope_tolerance = get_or<double>(e, path, "slope_tolerance", 0.0);
            if (rc.slope_tolerance <= 0.0) config_error(path + "/slope_tolerance", "must be > 0");
            c.rate_checks.push_back(rc);
        }
    }

    if (const json* opt = find(doc, "optimizer")) {
        c.erm.iterations = get_or<int>(*opt, "/optimizer", "iterations", c.erm.iterations);
        c.erm.restarts = get_or<int>(*opt, "/optimizer", "restarts", c.erm.restarts);
    }

    if (const json* f = find(doc, "factor")) {
        const std::string p = "/factor";
        c.factor.d = get_or<int>(*f, p, "d", c.factor.d);
        c.factor.r = get_or<int>(*f, p, "r", c.factor.r);
        if (c.factor.r < 1 || c.factor.r >= c.factor.d) config_error(p, "need 1 <= r < d");
        c.factor.norm_bound = get_or<double>(*f, p, "norm_bound", c.factor.norm_bound);
        if (const json* sv = find(*f, "singular_values")) {
            c.factor.singular_values = sv->get<std::vector<double>>();
            if (static_cast<int>(c.factor.singular_values.size()) != c.factor.r)
                config_error(p + "/singular_values", "need exactly r entries");
        }
        c.factor.beta_norm = get_or<double>(*f, p, "beta_norm", c.factor.beta_norm);
        c.factor.beta_ball_radius = get_or<double>(*f, p, "beta_ball_radius", c.factor.beta_ball_radius);
        c.factor.noise_std = get_or<double>(*f, p, "noise_std", c.factor.noise_std);
        c.factor.truth_seed = get_or<std::uint64_t>(*f, p, "truth_seed", c.factor.truth_seed);
        const std::string erm = get_or<std::string>(*f, p, "erm_method", std::string("fast_rate_ols"));
        if (erm == "fast_rate_ols") c.factor.erm_method = FactorErm::fast_rate_ols;
        else if (erm == "truncated_projected") c.factor.erm_method = FactorErm::truncated_projected;
        else config_error(p + "/erm_method", "expected fast_rate_ols|truncated_projected");
        c.factor.truncation_level = get_or<double>(*f, p, "truncation_level", c.factor.truncation_level);
        c.factor.risk_mc = get_or<bool>(*f, p, "risk_mc", c.factor.risk_mc);
    }

    if (const json* g = find(doc, "gmm")) {
        const std::string p = "/gmm";
        c.gmm.d = get_or<int>(*g, p, "d", c.gmm.d);
        c.gmm.K = get_or<int>(*g, p, "K", c.gmm.K);
        if (c.gmm.K < 1 || c.gmm.K > c.gmm.d) config_error(p, "need 1 <= K <= d");
        c.gmm.norm_scale = get_or<double>(*g, p, "norm_scale", c.gmm.norm_scale);
        c.gmm.eps = get_or<double>(*g, p, "eps", c.gmm.eps);
        if (c.gmm.eps < 0.0 || c.gmm.eps >= 0.5) config_error(p + "/eps", "must lie in [0, 1/2)");
        c.gmm.separation_margin = get_or<double>(*g, p, "separation_margin", c.gmm.separation_margin);
        if (const json* bits = find(*g, "bits")) {
            c.gmm.bits = bits->get<std::vector<int>>();
            if (static_cast<int>(c.gmm.bits.size()) != c.gmm.K)
                config_error(p + "/bits", "need exactly K entries");
        }
        c.gmm.truth_seed = get_or<std::uint64_t>(*g, p, "truth_seed", c.gmm.truth_seed);
        c.gmm.em_restarts = get_or<int>(*g, p, "em_restarts", c.gmm.em_restarts);
    }

    if (const json* ct = find(doc, "contrastive")) {
        const std::string p = "/contrastive";
        c.contrastive.d = get_or<int>(*ct, p, "d", c.contrastive.d);
        c.contrastive.r = get_or<int>(*ct, p, "r", c.contrastive.r);
        if (c.contrastive.r < 1 || c.contrastive.r > c.contrastive.d)
            config_error(p, "need 1 <= r <= d");
        if (const json* sv = find(*ct, "singular_values")) {
            c.contrastive.singular_values = sv->get<std::vector<double>>();
            if (static_cast<int>(c.contrastive.singular_values.size()) != c.contrastive.r)
                config_error(p + "/singular_values", "need exactly r entries");
        }
        c.contrastive.beta_norm = get_or<double>(*ct, p, "beta_norm", c.contrastive.beta_norm);
        c.contrastive.beta_ball_radius =
            get_or<double>(*ct, p, "beta_ball_radius", c.contrastive.beta_ball_radius);
        c.contrastive.noise_std = get_or<double>(*ct, p, "noise_std", c.contrastive.noise_std);
        c.contrastive.truth_seed = get_or<std::uint64_t>(*ct, p, "truth_seed", c.contrastive.truth_seed);
        c.contrastive.mle_iterations = get_or<int>(*ct, p, "mle_iterations", c.contrastive.mle_iterations);
        c.contrastive.mle_restarts = get_or<int>(*ct, p, "mle_restarts", c.contrastive.mle_restarts);
        c.contrastive.mle_step = get_or<double>(*ct, p, "mle_step", c.contrastive.mle_step);
        c.contrastive.truncation_level =
            get_or<double>(*ct, p, "truncation_level", c.contrastive.truncation_level);
    }

    if (const json* ce = find(doc, "counterexample")) {
        c.counterexample.L_exponent = get_or<int>(*ce, "/counterexample", "L_exponent",
                                                  c.counterexample.L_exponent);
        if (c.counterexample.L_exponent < 1 || c.counterexample.L_exponent > 40)
            config_error("/counterexample/L_exponent", "must lie in [1, 40]");
    }
    return c;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config parse failure in " + path + ": " + e.what());
    }
    return parse_config(doc);
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
    json doc;
    doc["experiment_id"] = c.experiment_id;
    doc["instantiation"] = to_string(c.instantiation);
    doc["m_values"] = c.m_values;
    doc["n_values"] = c.n_values;
    doc["trials"] = c.trials;
    doc["master_seed"] = c.master_seed;
    doc["mc_count"] = c.mc_count;
    doc["jobs"] = c.jobs;
    doc["out_dir"] = c.out_dir;
    doc["baseline"] = c.baseline;
    json checks = json::array();
    for (const RateCheck& rc : c.rate_checks)
        checks.push_back({{"axis", rc.axis},
                          {"slope_target", rc.slope_target},
                          {"slope_tolerance", rc.slope_tolerance}});
    doc["rate_checks"] = checks;
    doc["optimizer"] = {{"iterations", c.erm.iterations}, {"restarts", c.erm.restarts}};
    switch (c.instantiation) {
        case Instantiation::factor:
            doc["factor"] = {{"d", c.factor.d},
                             {"r", c.factor.r},
                             {"norm_bound", c.factor.norm_bound},
                             {"singular_values", c.factor.singular_values},
                             {"beta_norm", c.factor.beta_norm},
                             {"beta_ball_radius", c.factor.beta_ball_radius},
                             {"noise_std", c.factor.noise_std},
                             {"truth_seed", c.factor.truth_seed},
                             {"erm_method", c.factor.erm_method == FactorErm::fast_rate_ols
                                                ? "fast_rate_ols"
                                                : "truncated_projected"},
                             {"truncation_level", c.factor.truncation_level},
                             {"risk_mc", c.factor.risk_mc}};
            break;
        case Instantiation::gmm:
            doc["gmm"] = {{"d", c.gmm.d},
                          {"K", c.gmm.K},
                          {"norm_scale", c.gmm.norm_scale},
                          {"eps", c.gmm.eps},
                          {"separation_margin", c.gmm.separation_margin},
                          {"bits", c.gmm.bits},
                          {"truth_seed", c.gmm.truth_seed},
                          {"em_restarts", c.gmm.em_restarts}};
            break;
        case Instantiation::contrastive:
            doc["contrastive"] = {{"d", c.contrastive.d},
                                  {"r", c.contrastive.r},
                                  {"singular_values", c.contrastive.singular_values},
                                  {"beta_norm", c.contrastive.beta_norm},
                                  {"beta_ball_radius", c.contrastive.beta_ball_radius},
                                  {"noise_std", c.contrastive.noise_std},
                                  {"truth_seed", c.contrastive.truth_seed},
                                  {"mle_iterations", c.contrastive.mle_iterations},
                                  {"mle_restarts", c.contrastive.mle_restarts},
                                  {"mle_step", c.contrastive.mle_step},
                                  {"truncation_level", c.contrastive.truncation_level}};
            break;
        case Instantiation::counterexample:
            doc["counterexample"] = {{"L_exponent", c.counterexample.L_exponent}};
            break;
    }
    return doc;
}

FactorModel build_factor_truth(const FactorConfig& config, RegressionBeta* beta_star) {
    RngStream rng(config.truth_seed, 0);
    Eigen::MatrixXd left = orthonormal_columns(config.d, config.r, rng);
    Eigen::MatrixXd right = orthonormal_columns(config.r, config.r, rng);
    Eigen::VectorXd s(config.r);
    for (int i = 0; i < config.r; ++i) s[i] = config.singular_values[static_cast<std::size_t>(i)];
    FactorModel model;
    model.B = left * s.asDiagonal() * right.transpose();
    model.norm_bound = config.norm_bound;
    validate_factor(model);
    if (beta_star) {
        Eigen::MatrixXd g(1, config.r);
        fill_standard_normal(g, rng);
        beta_star->beta = g.row(0).transpose().normalized() * config.beta_norm;
        beta_star->norm_bound = config.beta_ball_radius;
        beta_star->noise_std = config.noise_std;
        validate_regression(*beta_star);
    }
    return model;
}

GmmModel build_gmm_truth(const GmmConfig& config, LabelerPsi* psi_star) {
    RngStream rng(config.truth_seed, 0);
    GmmModel model;
    model.norm_scale = config.norm_scale;
    if (config.K == 1) {
        model.centers = Eigen::MatrixXd::Zero(1, config.d);
    } else {
        const Eigen::MatrixXd q = orthonormal_columns(config.d, config.K, rng);
        const double scale = separation_threshold(config.d, config.K) * config.separation_margin /
                             std::sqrt(2.0);
        model.centers = scale * q.transpose();
    }
    validate_gmm(model);
    if (psi_star) {
        psi_star->eps = config.eps;
        if (!config.bits.empty()) {
            psi_star->bits = config.bits;
        } else {
            psi_star->bits.resize(static_cast<std::size_t>(config.K));
            for (int i = 0; i < config.K; ++i) psi_star->bits[static_cast<std::size_t>(i)] = i % 2 == 0;
        }
        validate_labeler(*psi_star, config.K);
    }
    return model;
}

ContrastiveModel build_contrastive_truth(const ContrastiveConfig& config,
                                         RegressionBeta* beta_star) {
    RngStream rng(config.truth_seed, 0);
    const Eigen::MatrixXd q = orthonormal_columns(config.d, config.r, rng);
    Eigen::VectorXd s(config.r);
    for (int i = 0; i < config.r; ++i) s[i] = config.singular_values[static_cast<std::size_t>(i)];
    ContrastiveModel model;
    model.theta = s.asDiagonal() * q.transpose();
    validate_contrastive(model);
    if (beta_star) {
        Eigen::MatrixXd g(1, config.r);
        fill_standard_normal(g, rng);
        beta_star->beta = g.row(0).transpose().normalized() * config.beta_norm;
        beta_star->norm_bound = config.beta_ball_radius;
        beta_star->noise_std = config.noise_std;
        validate_regression(*beta_star);
    }
    return model;
}

RiskEstimate contrastive_excess_mc(const Eigen::MatrixXd& theta_hat,
                                   const Eigen::VectorXd& beta_hat,
                                   const Eigen::MatrixXd& theta_star,
                                   const Eigen::VectorXd& beta_star, Eigen::Index count,
                                   RngStream rng) {
    const int d = static_cast<int>(theta_star.cols());
    const Eigen::VectorXd v = theta_hat.transpose() * beta_hat - theta_star.transpose() * beta_star;
    constexpr Eigen::Index kBlock = 1 << 16;
    par::SumPair total;
    for (Eigen::Index done = 0; done < count; done += kBlock) {
        const Eigen::Index b = std::min<Eigen::Index>(kBlock, count - done);
        const Eigen::VectorXd proj = sample_sphere(d, b, rng) * v;
        for (Eigen::Index i = 0; i < b; ++i) {
            const double t = proj[i] * proj[i];
            total.sum += t;
            total.sum_sq += t * t;
        }
    }
    RiskEstimate est;
    est.value = total.sum / static_cast<double>(count);
    if (count > 1) {
        double var = (total.sum_sq - static_cast<double>(count) * est.value * est.value) /
                     static_cast<double>(count - 1);
        est.std_error = std::sqrt(std::max(0.0, var) / static_cast<double>(count));
    }
    est.sample_count = count;
    return est;
}

namespace {

SweepRow base_row(const ExperimentConfig& c, std::int64_t m, std::int64_t n, std::int64_t d,
                  std::int64_t r_or_k, std::int64_t trial, std::uint64_t seed) {
    SweepRow row;
    row.experiment_id = c.experiment_id;
    row.instantiation = to_string(c.instantiation);
    row.m = m;
    row.n = n;
    row.d = d;
    row.r_or_k = r_or_k;
    row.trial = trial;
    row.seed = seed;
    return row;
}

void mark_failed(SweepRow& row) {
    row.failed = 1;
    row.excess_risk = 0.0;
    row.excess_risk_se = 0.0;
}

void run_factor_sweep(const ExperimentConfig& c, std::vector<SweepRow>& rows,
                      const SlotLayout& layout) {
    RegressionBeta beta_star;
    const FactorModel model = build_factor_truth(c.factor, &beta_star);
    const Eigen::MatrixXd& B_star = model.B;
    const std::int64_t n_count = static_cast<std::int64_t>(c.n_values.size());
    const std::size_t job_count =
        static_cast<std::size_t>(c.m_values.size()) * static_cast<std::size_t>(c.trials);

    par::for_each_index(job_count, c.jobs, [&](std::size_t job) {
        const std::int64_t m_idx = static_cast<std::int64_t>(job) / c.trials;
        const std::int64_t trial = static_cast<std::int64_t>(job) % c.trials;
        const std::int64_t m = c.m_values[static_cast<std::size_t>(m_idx)];
        const std::uint64_t seed = static_cast<std::uint64_t>(job);
        RngStream job_rng(c.master_seed, seed);

        Eigen::MatrixXd B_hat;
        double align_residual = 0.0;
        double aux_tv = 0.0;
        bool pretrain_ok = true;
        try {
            RngStream unlabeled_rng = job_rng.substream(1);
            const Eigen::MatrixXd unlabeled = sample_factor_unlabeled(model, m, unlabeled_rng);
            B_hat = mle_factor(unlabeled, c.factor.r);
            const Eigen::MatrixXd O = align_rotation_factor(B_hat, B_star);
            align_residual = (B_hat * O - B_star).norm();
            const GaussianDensity p = factor_marginal_density(B_star);
            const GaussianDensity q = factor_marginal_density(B_hat);
            aux_tv = estimate_tv([&](const Eigen::VectorXd& x) { return p.log_density(x); },
                                 [&](const Eigen::VectorXd& x) { return q.log_density(x); },
                                 factor_marginal_sampler(B_star), 2048, job_rng.substream(2))
                         .value;
        } catch (const std::exception&) {
            pretrain_ok = false;
        }

        for (std::int64_t n_idx = 0; n_idx < n_count; ++n_idx) {
            const std::int64_t n = c.n_values[static_cast<std::size_t>(n_idx)];
            SweepRow pipeline = base_row(c, m, n, c.factor.d, c.factor.r, trial, seed);
            pipeline.method = "pipeline";
            SweepRow baseline = pipeline;
            baseline.method = "baseline";
            try {
                if (!pretrain_ok) throw std::runtime_error("pretraining failed");
                RngStream labeled_rng = job_rng.substream(100 + static_cast<std::uint64_t>(n_idx));
                const Eigen::MatrixXd labeled = sample_factor_labeled(model, beta_star, n, labeled_rng);

                Eigen::VectorXd beta_hat;
                if (c.factor.erm_method == FactorErm::fast_rate_ols) {
                    beta_hat = erm_beta_ols(B_hat, labeled);
                } else {
                    const double D = c.factor.beta_ball_radius;
                    const double L = c.factor.truncation_level > 0.0
                                         ? c.factor.truncation_level
                                         : std::pow(D * D + 1.0, 3) * std::log(std::max<double>(2, n));
                    beta_hat = erm_beta_truncated(B_hat, labeled, L, D, c.erm,
                                                  job_rng.substream(300 + static_cast<std::uint64_t>(n_idx)));
                }
                pipeline.aux_tv = aux_tv;
                pipeline.aux_align_residual = align_residual;
                if (c.factor.risk_mc) {
                    const FactorModel truth = model;
                    const RegressionBeta psi = beta_star;
                    LabeledSamplerFn sampler = [truth, psi](Eigen::Index cnt, RngStream& r,
                                                            Eigen::MatrixXd& X, Eigen::VectorXd& y) {
                        const Eigen::MatrixXd lab = sample_factor_labeled(truth, psi, cnt, r);
                        X = lab.leftCols(lab.cols() - 1);
                        y = lab.col(lab.cols() - 1);
                    };
                    const Eigen::MatrixXd Bh = B_hat;
                    const Eigen::VectorXd bh = beta_hat;
                    const Eigen::MatrixXd Bs = B_star;
                    const Eigen::VectorXd bs = beta_star.beta;
                    const RiskEstimate est = excess_risk_mc(
                        [Bh, bh](const Eigen::VectorXd& x) { return predictor_factor(Bh, bh, x); },
                        [Bs, bs](const Eigen::VectorXd& x) { return predictor_factor(Bs, bs, x); },
                        LossSpec::squared(), sampler, c.mc_count,
                        job_rng.substream(400 + static_cast<std::uint64_t>(n_idx)));
                    pipeline.excess_risk = est.value;
                    pipeline.excess_risk_se = est.std_error;
                } else {
                    pipeline.excess_risk = excess_risk_factor_closed(B_star, beta_star.beta, B_hat, beta_hat);
                }

                if (c.baseline) {
                    const Eigen::VectorXd w = supervised_baseline_factor(labeled);
                    baseline.excess_risk = factor_linear_excess(B_star, beta_star.beta, w);
                }
            } catch (const std::exception&) {
                mark_failed(pipeline);
                mark_failed(baseline);
            }
            rows[layout.slot(m_idx, n_idx, trial, 0)] = pipeline;
            if (c.baseline) rows[layout.slot(m_idx, n_idx, trial, 1)] = baseline;
        }
    });
}

void run_gmm_sweep(const ExperimentConfig& c, std::vector<SweepRow>& rows,
                   const SlotLayout& layout) {
    LabelerPsi psi_star;
    const GmmModel model = build_gmm_truth(c.gmm, &psi_star);
    const std::int64_t n_count = static_cast<std::int64_t>(c.n_values.size());
    const std::size_t job_count =
        static_cast<std::size_t>(c.m_values.size()) * static_cast<std::size_t>(c.trials);

    par::for_each_index(job_count, c.jobs, [&](std::size_t job) {
        const std::int64_t m_idx = static_cast<std::int64_t>(job) / c.trials;
        const std::int64_t trial = static_cast<std::int64_t>(job) % c.trials;
        const std::int64_t m = c.m_values[static_cast<std::size_t>(m_idx)];
        const std::uint64_t seed = static_cast<std::uint64_t>(job);
        RngStream job_rng(c.master_seed, seed);

        Eigen::MatrixXd centers_hat;
        double aux_tv = 0.0, align_residual = 0.0;
        bool pretrain_ok = true;
        try {
            RngStream unlabeled_rng = job_rng.substream(1);
            const Eigen::MatrixXd unlabeled = sample_gmm_unlabeled(model, m, unlabeled_rng);
            centers_hat = mle_gmm(unlabeled, c.gmm.K, c.gmm.em_restarts, job_rng.substream(2)).centers;
            aux_tv = gmm_joint_tv_closed(centers_hat, model.centers);
            const std::vector<int> perm = match_permutation(centers_hat, model.centers);
            double sq = 0.0;
            for (int i = 0; i < c.gmm.K; ++i)
                sq += (centers_hat.row(perm[static_cast<std::size_t>(i)]) - model.centers.row(i))
                          .squaredNorm();
            align_residual = std::sqrt(sq);
        } catch (const std::exception&) {
            pretrain_ok = false;
        }

        for (std::int64_t n_idx = 0; n_idx < n_count; ++n_idx) {
            const std::int64_t n = c.n_values[static_cast<std::size_t>(n_idx)];
            SweepRow pipeline = base_row(c, m, n, c.gmm.d, c.gmm.K, trial, seed);
            pipeline.method = "pipeline";
            SweepRow baseline = pipeline;
            baseline.method = "baseline";
            try {
                if (!pretrain_ok) throw std::runtime_error("pretraining failed");
                RngStream labeled_rng = job_rng.substream(100 + static_cast<std::uint64_t>(n_idx));
                const GmmLabeledData labeled = sample_gmm_labeled(model, psi_star, n, labeled_rng);
                const LabelerPsi psi_hat = erm_psi(centers_hat, labeled, psi_star.eps);

                const GmmModel truth = model;
                const LabelerPsi psi_true = psi_star;
                LabeledSamplerFn sampler = [truth, psi_true](Eigen::Index cnt, RngStream& r,
                                                             Eigen::MatrixXd& X, Eigen::VectorXd& y) {
                    const GmmLabeledData fresh = sample_gmm_labeled(truth, psi_true, cnt, r);
                    X = fresh.x;
                    y = fresh.y.cast<double>();
                };
                const Eigen::MatrixXd ch = centers_hat;
                const RiskEstimate est = excess_risk_mc(
                    [ch, psi_hat](const Eigen::VectorXd& x) {
                        return static_cast<double>(bayes_predict_gmm(ch, psi_hat, x));
                    },
                    [&truth, psi_true](const Eigen::VectorXd& x) {
                        return static_cast<double>(bayes_predict_gmm(truth.centers, psi_true, x));
                    },
                    LossSpec::zero_one(), sampler, c.mc_count,
                    job_rng.substream(400 + static_cast<std::uint64_t>(n_idx)));
                pipeline.excess_risk = est.value;
                pipeline.excess_risk_se = est.std_error;
                pipeline.aux_tv = aux_tv;
                pipeline.aux_align_residual = align_residual;

                if (c.baseline) {
                    // Supervised-only: the mixture and labeler are fit on the
                    // labeled sample alone.
                    const Eigen::MatrixXd centers_sup =
                        mle_gmm(labeled.x, c.gmm.K, c.gmm.em_restarts,
                                job_rng.substream(500 + static_cast<std::uint64_t>(n_idx)))
                            .centers;
                    const LabelerPsi psi_sup = erm_psi(centers_sup, labeled, psi_star.eps);
                    const RiskEstimate best = excess_risk_mc(
                        [centers_sup, psi_sup](const Eigen::VectorXd& x) {
                            return static_cast<double>(bayes_predict_gmm(centers_sup, psi_sup, x));
                        },
                        [&truth, psi_true](const Eigen::VectorXd& x) {
                            return static_cast<double>(bayes_predict_gmm(truth.centers, psi_true, x));
                        },
                        LossSpec::zero_one(), sampler, c.mc_count,
                        job_rng.substream(600 + static_cast<std::uint64_t>(n_idx)));
                    baseline.excess_risk = best.value;
                    baseline.excess_risk_se = best.std_error;
                }
            } catch (const std::exception&) {
                mark_failed(pipeline);
                mark_failed(baseline);
            }
            rows[layout.slot(m_idx, n_idx, trial, 0)] = pipeline;
            if (c.baseline) rows[layout.slot(m_idx, n_idx, trial, 1)] = baseline;
        }
    });
}

void run_contrastive_sweep(const ExperimentConfig& c, std::vector<SweepRow>& rows,
                           const SlotLayout& layout) {
    RegressionBeta beta_star;
    const ContrastiveModel model = build_contrastive_truth(c.contrastive, &beta_star);
    const std::int64_t n_count = static_cast<std::int64_t>(c.n_values.size());
    const std::size_t job_count =
        static_cast<std::size_t>(c.m_values.size()) * static_cast<std::size_t>(c.trials);

    par::for_each_index(job_count, c.jobs, [&](std::size_t job) {
        const std::int64_t m_idx = static_cast<std::int64_t>(job) / c.trials;
        const std::int64_t trial = static_cast<std::int64_t>(job) % c.trials;
        const std::int64_t m = c.m_values[static_cast<std::size_t>(m_idx)];
        const std::uint64_t seed = static_cast<std::uint64_t>(job);
        RngStream job_rng(c.master_seed, seed);

        Eigen::MatrixXd theta_hat;
        double aux_hellinger = 0.0, align_residual = 0.0;
        bool pretrain_ok = true;
        try {
            RngStream pair_rng = job_rng.substream(1);
            const PairData pairs = sample_pairs(model, m, pair_rng);
            ContrastiveOptConfig opt;
            opt.iterations = c.contrastive.mle_iterations;
            opt.restarts = c.contrastive.mle_restarts;
            opt.step = c.contrastive.mle_step;
            theta_hat = mle_contrastive(pairs, c.contrastive.r, c.contrastive.d, opt,
                                        job_rng.substream(2))
                            .theta;
            aux_hellinger =
                hellinger_pairs(theta_hat, model.theta, 20000, job_rng.substream(3)).value;
            RngStream align_rng = job_rng.substream(4);
            const Eigen::MatrixXd O =
                align_orthogonal_contrastive(theta_hat, model.theta, 20000, align_rng);
            RngStream res_rng = job_rng.substream(5);
            const Eigen::MatrixXd xs = sample_sphere(c.contrastive.d, 2000, res_rng);
            align_residual = ((xs * theta_hat.transpose()) * O.transpose() -
                              xs * model.theta.transpose())
                                 .rowwise()
                                 .norm()
                                 .mean();
        } catch (const std::exception&) {
            pretrain_ok = false;
        }

        for (std::int64_t n_idx = 0; n_idx < n_count; ++n_idx) {
            const std::int64_t n = c.n_values[static_cast<std::size_t>(n_idx)];
            SweepRow pipeline = base_row(c, m, n, c.contrastive.d, c.contrastive.r, trial, seed);
            pipeline.method = "pipeline";
            SweepRow baseline = pipeline;
            baseline.method = "baseline";
            try {
                if (!pretrain_ok) throw std::runtime_error("pretraining failed");
                RngStream labeled_rng = job_rng.substream(100 + static_cast<std::uint64_t>(n_idx));
                const ContrastiveLabeledData labeled =
                    sample_contrastive_labeled(model, beta_star, n, labeled_rng);
                const double D = c.contrastive.beta_ball_radius;
                const double L = c.contrastive.truncation_level > 0.0
                                     ? c.contrastive.truncation_level
                                     : 36.0 * (D * D + 1.0) * std::log(std::max<double>(2, n));
                const Eigen::VectorXd beta_hat =
                    erm_beta_contrastive(theta_hat, labeled, L, D, c.erm,
                                         job_rng.substream(300 + static_cast<std::uint64_t>(n_idx)));
                const RiskEstimate est = contrastive_excess_mc(
                    theta_hat, beta_hat, model.theta, beta_star.beta, c.mc_count,
                    job_rng.substream(400 + static_cast<std::uint64_t>(n_idx)));
                pipeline.excess_risk = est.value;
                pipeline.excess_risk_se = est.std_error;
                pipeline.aux_tv = aux_hellinger;  // Hellinger of the pretrained pair model
                pipeline.aux_align_residual = align_residual;

                if (c.baseline) {
                    const ErmResult ols = ols_on_features(labeled.x, labeled.y);
                    const RiskEstimate best = contrastive_excess_mc(
                        Eigen::MatrixXd::Identity(c.contrastive.d, c.contrastive.d), ols.beta,
                        model.theta, beta_star.beta, c.mc_count,
                        job_rng.substream(600 + static_cast<std::uint64_t>(n_idx)));
                    baseline.excess_risk = best.value;
                    baseline.excess_risk_se = best.std_error;
                }
            } catch (const std::exception&) {
                mark_failed(pipeline);
                mark_failed(baseline);
            }
            rows[layout.slot(m_idx, n_idx, trial, 0)] = pipeline;
            if (c.baseline) rows[layout.slot(m_idx, n_idx, trial, 1)] = baseline;
        }
    });
}

}  // namespace

SweepOutput run_sweep(const ExperimentConfig& c) {
    SweepOutput out;
    if (c.instantiation == Instantiation::counterexample) {
        const std::int64_t mn = std::int64_t(1) << c.counterexample.L_exponent;
        out.rows.resize(static_cast<std::size_t>(c.trials));
        RngStream root(c.master_seed, 0);
        par::for_each_index(static_cast<std::size_t>(c.trials), c.jobs, [&](std::size_t trial) {
            RngStream trial_rng = root.substream(trial);
            const counter::CounterSample sample = counter::sample_counter(mn, mn, trial_rng);
            const counter::TwoPhaseFit fit = counter::two_phase_mle(sample.unlabeled, sample.labeled);
            SweepRow row = base_row(c, mn, mn, 1, 1, static_cast<std::int64_t>(trial),
                                    static_cast<std::uint64_t>(trial));
            row.method = "pipeline";
            const double tv = counter::tv_counter(fit.phi_index, fit.psi_variant);
            row.excess_risk = tv;
            row.aux_tv = tv;
            out.rows[trial] = row;
        });
        std::int64_t hits = 0;
        for (const SweepRow& row : out.rows)
            if (row.excess_risk >= 0.125) ++hits;
        const double freq = static_cast<double>(hits) / static_cast<double>(c.trials);
        const double se = std::sqrt(freq * (1.0 - freq) / static_cast<double>(c.trials));
        out.extra["failure_frequency"] = freq;
        out.extra["failure_std_error"] = se;
        out.extra["failure_constant"] = counter::failure_constant();
        out.extra["threshold_met"] = freq >= counter::failure_constant() - 3.0 * se;
        return out;
    }

    if (c.m_values.empty() || c.n_values.empty())
        throw std::invalid_argument("run_sweep: sweep axes must be nonempty");
    SlotLayout layout;
    layout.n_count = static_cast<std::int64_t>(c.n_values.size());
    layout.trials = c.trials;
    layout.methods = c.baseline ? 2 : 1;
    const std::size_t total = static_cast<std::size_t>(c.m_values.size()) *
                              static_cast<std::size_t>(layout.n_count) *
                              static_cast<std::size_t>(c.trials) *
                              static_cast<std::size_t>(layout.methods);
    std::vector<SweepRow> rows(total);
    switch (c.instantiation) {
        case Instantiation::factor:
            run_factor_sweep(c, rows, layout);
            break;
        case Instantiation::gmm:
            run_gmm_sweep(c, rows, layout);
            break;
        case Instantiation::contrastive:
            run_contrastive_sweep(c, rows, layout);
            break;
        case Instantiation::counterexample:
            break;
    }
    out.rows = std::move(rows);
    return out;
}

RateReport fit_rate(const std::vector<SweepRow>& rows, const ExperimentConfig& config,
                    const RateCheck& check) {
    RateReport report;
    report.axis = check.axis;
    report.target = check.slope_target;
    report.tolerance = check.slope_tolerance;

    const bool axis_is_m = check.axis == "m";
    const auto& other_values = axis_is_m ? config.n_values : config.m_values;
    if (other_values.empty()) {
        report.error = "no cells configured";
        return report;
    }
    const std::int64_t other_max = *std::max_element(other_values.begin(), other_values.end());

    std::map<std::int64_t, std::vector<double>> cells;
    for (const SweepRow& row : rows) {
        if (row.method != "pipeline" || row.failed) continue;
        const std::int64_t axis_value = axis_is_m ? row.m : row.n;
        const std::int64_t other_value = axis_is_m ? row.n : row.m;
        if (other_value != other_max) continue;
        cells[axis_value].push_back(row.excess_risk);
    }
    if (cells.size() < 3) {
        report.error = "insufficient cells: need >= 3 distinct axis values";
        return report;
    }
    std::vector<std::pair<double, double>> points;
    for (auto& [value, risks] : cells) {
        const double med = median_of(risks);
        if (!(med > 0.0)) {
            report.error = "non-positive median excess risk at " + check.axis + "=" +
                           std::to_string(value) + "; no measurable rate";
            return report;
        }
        points.emplace_back(static_cast<double>(value), med);
    }
    const SlopeFit fit = fit_loglog_slope(points);
    report.slope = fit.slope;
    report.slope_std_error = fit.std_error;
    report.points_used = static_cast<int>(points.size());
    report.pass = std::abs(fit.slope - check.slope_target) <= check.slope_tolerance;
    return report;
}

}  // namespace ptlab
