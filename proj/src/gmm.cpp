#include "ptlab/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ptlab/mvn.hpp"

namespace ptlab {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// log((1/K) sum_j exp(-||x-u_j||^2/2)) - (d/2) log(2pi), stable via max shift.
double mixture_log_density_at(const Eigen::MatrixXd& centers, const Eigen::VectorXd& x) {
    const Eigen::Index K = centers.rows(), d = centers.cols();
    Eigen::VectorXd neg_half_sq(K);
    for (Eigen::Index j = 0; j < K; ++j)
        neg_half_sq[j] = -0.5 * (x - centers.row(j).transpose()).squaredNorm();
    const double m = neg_half_sq.maxCoeff();
    double acc = 0.0;
    for (Eigen::Index j = 0; j < K; ++j) acc += std::exp(neg_half_sq[j] - m);
    return m + std::log(acc / static_cast<double>(K)) - 0.5 * static_cast<double>(d) * kLog2Pi;
}

double em_log_likelihood(const Eigen::MatrixXd& X, const Eigen::MatrixXd& centers) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        total += mixture_log_density_at(centers, X.row(i).transpose());
    return total;
}

Eigen::MatrixXd kmeanspp_init(const Eigen::MatrixXd& X, int K, RngStream& rng) {
    const Eigen::Index m = X.rows();
    Eigen::MatrixXd centers(K, X.cols());
    const Eigen::Index first = static_cast<Eigen::Index>(rng.next_raw() % static_cast<std::uint64_t>(m));
    centers.row(0) = X.row(first);
    Eigen::VectorXd dist2 = (X.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int k = 1; k < K; ++k) {
        const double total = dist2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            const double u = rng.uniform() * total;
            double acc = 0.0;
            for (Eigen::Index i = 0; i < m; ++i) {
                acc += dist2[i];
                if (acc >= u) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.next_raw() % static_cast<std::uint64_t>(m));
        }
        centers.row(k) = X.row(pick);
        dist2 = dist2.cwiseMin((X.rowwise() - centers.row(k)).rowwise().squaredNorm());
    }
    return centers;
}

}  // namespace

void validate_gmm(const GmmModel& model) {
    const int K = model.K(), d = model.d();
    if (K < 1 || d < 1) throw std::invalid_argument("gmm: need K >= 1 and d >= 1");
    if (K >= 2 && model.norm_scale > 0.0) {
        const double bound = model.norm_scale * std::sqrt(static_cast<double>(d) * std::log(K));
        for (int i = 0; i < K; ++i)
            if (model.centers.row(i).norm() > bound * (1.0 + 1e-12))
                throw std::invalid_argument("gmm: center norm exceeds D sqrt(d log K)");
    }
}

void validate_labeler(const LabelerPsi& psi, int K) {
    if (static_cast<int>(psi.bits.size()) != K)
        throw std::invalid_argument("labeler: need one bit per cluster");
    for (int b : psi.bits)
        if (b != 0 && b != 1) throw std::invalid_argument("labeler: bits must be 0/1");
    if (psi.eps < 0.0 || psi.eps >= 0.5)
        throw std::invalid_argument("labeler: eps must lie in [0, 1/2)");
}

Eigen::MatrixXd sample_gmm_unlabeled(const GmmModel& model, Eigen::Index m, RngStream& rng) {
    if (m < 1) throw std::invalid_argument("sample_gmm_unlabeled: m must be positive");
    const int K = model.K(), d = model.d();
    Eigen::MatrixXd x(m, d);
    fill_standard_normal(x, rng);
    for (Eigen::Index i = 0; i < m; ++i) {
        const int z = static_cast<int>(rng.next_raw() % static_cast<std::uint64_t>(K));
        x.row(i) += model.centers.row(z);
    }
    return x;
}

GmmLabeledData sample_gmm_labeled(const GmmModel& model, const LabelerPsi& psi, Eigen::Index n,
                                  RngStream& rng) {
    if (n < 1) throw std::invalid_argument("sample_gmm_labeled: n must be positive");
    validate_labeler(psi, model.K());
    const int K = model.K(), d = model.d();
    GmmLabeledData data;
    data.x.resize(n, d);
    data.y.resize(n);
    fill_standard_normal(data.x, rng);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int z = static_cast<int>(rng.next_raw() % static_cast<std::uint64_t>(K));
        data.x.row(i) += model.centers.row(z);
        const bool flip = rng.uniform() < psi.eps;
        data.y[i] = flip ? 1 - psi.bits[z] : psi.bits[z];
    }
    return data;
}

double separation_threshold(int d, int K) {
    if (K < 2) return 0.0;
    return 100.0 * std::sqrt(static_cast<double>(d) * std::log(static_cast<double>(K)));
}

bool check_separation(const Eigen::MatrixXd& centers) {
    const Eigen::Index K = centers.rows();
    if (K < 2) return true;
    const double threshold = separation_threshold(static_cast<int>(centers.cols()), static_cast<int>(K));
    for (Eigen::Index i = 0; i < K; ++i)
        for (Eigen::Index j = i + 1; j < K; ++j)
            if ((centers.row(i) - centers.row(j)).norm() < threshold) return false;
    return true;
}

EmResult mle_gmm(const Eigen::MatrixXd& X, int K, int restarts, RngStream rng) {
    const Eigen::Index m = X.rows();
    if (m < K || K < 1) throw std::invalid_argument("mle_gmm: need m >= K >= 1");
    if (restarts < 1) restarts = 1;
    constexpr int kMaxIterations = 500;
    constexpr double kGainTol = 1e-8;
    constexpr double kMonotoneTol = 1e-10;
    constexpr double kEmptyMass = 1e-12;

    EmResult best;
    best.log_likelihood = -std::numeric_limits<double>::infinity();
    int total_reseeds = 0;

    for (int run = 0; run < restarts; ++run) {
        RngStream run_rng = rng.substream(static_cast<std::uint64_t>(run));
        Eigen::MatrixXd centers = kmeanspp_init(X, K, run_rng);
        EmResult current;
        current.reseeds = 0;
        double prev = -std::numeric_limits<double>::infinity();
        bool monotone_reset = true;  // first iteration has no predecessor
        Eigen::MatrixXd resp(m, K);
        for (int it = 0; it < kMaxIterations; ++it) {
            // E-step: posterior responsibilities, log-sum-exp stabilized.
            for (Eigen::Index i = 0; i < m; ++i) {
                Eigen::VectorXd logw(K);
                for (int j = 0; j < K; ++j)
                    logw[j] = -0.5 * (X.row(i) - centers.row(j)).squaredNorm();
                const double mx = logw.maxCoeff();
                double acc = 0.0;
                for (int j = 0; j < K; ++j) {
                    resp(i, j) = std::exp(logw[j] - mx);
                    acc += resp(i, j);
                }
                resp.row(i) /= acc;
            }
            const double ll = em_log_likelihood(X, centers);
            if (!monotone_reset && ll < prev - kMonotoneTol)
                throw std::logic_error("mle_gmm: log-likelihood decreased");
            current.loglik_trace.push_back(ll);
            const bool converged = !monotone_reset && (ll - prev) < kGainTol;
            prev = ll;
            monotone_reset = false;
            current.iterations = it + 1;
            if (converged) break;

            // M-step: responsibility-weighted means; reseed a starved cluster
            // at the point the mixture explains worst.
            const Eigen::VectorXd mass = resp.colwise().sum();
            for (int j = 0; j < K; ++j) {
                if (mass[j] < kEmptyMass) {
                    Eigen::Index worst = 0;
                    double worst_ll = std::numeric_limits<double>::infinity();
                    for (Eigen::Index i = 0; i < m; ++i) {
                        const double li = mixture_log_density_at(centers, X.row(i).transpose());
                        if (li < worst_ll) {
                            worst_ll = li;
                            worst = i;
                        }
                    }
                    centers.row(j) = X.row(worst);
                    ++current.reseeds;
                    monotone_reset = true;
                } else {
                    centers.row(j) = (resp.col(j).transpose() * X) / mass[j];
                }
            }
        }
        current.centers = centers;
        current.log_likelihood = prev;
        total_reseeds += current.reseeds;
        if (current.log_likelihood > best.log_likelihood) best = std::move(current);
    }
    best.reseeds = total_reseeds;
    return best;
}

GmmPosterior gmm_posterior(const Eigen::MatrixXd& centers, const Eigen::VectorXd& x) {
    const Eigen::Index K = centers.rows();
    Eigen::VectorXd logw(K);
    for (Eigen::Index j = 0; j < K; ++j)
        logw[j] = -0.5 * (x - centers.row(j).transpose()).squaredNorm();
    const double mx = logw.maxCoeff();
    GmmPosterior post;
    post.weights = (logw.array() - mx).exp();
    post.weights /= post.weights.sum();
    return post;
}

int bayes_predict_gmm(const Eigen::MatrixXd& centers, const LabelerPsi& psi,
                      const Eigen::VectorXd& x) {
    const GmmPosterior post = gmm_posterior(centers, x);
    double vote = 0.0;
    for (Eigen::Index i = 0; i < centers.rows(); ++i) {
        const double p1 = psi.bits[static_cast<std::size_t>(i)] == 1 ? 1.0 - psi.eps : psi.eps;
        vote += post.weights[i] * p1;
    }
    return vote >= 0.5 ? 1 : 0;
}

double empirical_zero_one_loss(const Eigen::MatrixXd& centers, const LabelerPsi& psi,
                               const GmmLabeledData& labeled) {
    Eigen::Index errors = 0;
    for (Eigen::Index i = 0; i < labeled.x.rows(); ++i)
        if (bayes_predict_gmm(centers, psi, labeled.x.row(i).transpose()) != labeled.y[i]) ++errors;
    return static_cast<double>(errors) / static_cast<double>(labeled.x.rows());
}

LabelerPsi erm_psi_heuristic(const Eigen::MatrixXd& centers, const GmmLabeledData& labeled,
                             double eps) {
    const int K = static_cast<int>(centers.rows());
    std::vector<int> ones(K, 0), counts(K, 0);
    for (Eigen::Index i = 0; i < labeled.x.rows(); ++i) {
        const GmmPosterior post = gmm_posterior(centers, labeled.x.row(i).transpose());
        Eigen::Index map_cluster;
        post.weights.maxCoeff(&map_cluster);
        counts[map_cluster] += 1;
        ones[map_cluster] += labeled.y[i];
    }
    LabelerPsi psi;
    psi.eps = eps;
    psi.bits.resize(K);
    for (int j = 0; j < K; ++j) psi.bits[j] = 2 * ones[j] >= counts[j] ? 1 : 0;
    return psi;
}

LabelerPsi erm_psi(const Eigen::MatrixXd& centers, const GmmLabeledData& labeled, double eps,
                   bool* exhaustive) {
    const int K = static_cast<int>(centers.rows());
    if (K > 12) {
        if (exhaustive) *exhaustive = false;
        return erm_psi_heuristic(centers, labeled, eps);
    }
    if (exhaustive) *exhaustive = true;
    LabelerPsi best;
    best.eps = eps;
    double best_loss = std::numeric_limits<double>::infinity();
    // Masks are walked with bits[0] as the most significant digit so that the
    // first minimizer found is the lexicographically smallest bit vector.
    for (std::uint32_t mask = 0; mask < (1u << K); ++mask) {
        LabelerPsi candidate;
        candidate.eps = eps;
        candidate.bits.resize(K);
        for (int j = 0; j < K; ++j) candidate.bits[j] = (mask >> (K - 1 - j)) & 1u;
        const double loss = empirical_zero_one_loss(centers, candidate, labeled);
        if (loss < best_loss) {
            best_loss = loss;
            best = candidate;
        }
    }
    return best;
}

std::vector<int> match_permutation(const Eigen::MatrixXd& centers,
                                   const Eigen::MatrixXd& true_centers, bool* exhaustive) {
    const int K = static_cast<int>(centers.rows());
    if (true_centers.rows() != K || true_centers.cols() != centers.cols())
        throw std::invalid_argument("match_permutation: shape mismatch");
    auto cost = [&](const std::vector<int>& perm) {
        double total = 0.0;
        for (int i = 0; i < K; ++i)
            total += (centers.row(perm[i]) - true_centers.row(i)).squaredNorm();
        return total;
    };
    std::vector<int> perm(K);
    std::iota(perm.begin(), perm.end(), 0);
    if (K > 8) {
        if (exhaustive) *exhaustive = false;
        std::vector<bool> used(K, false);
        for (int i = 0; i < K; ++i) {
            double best_d = std::numeric_limits<double>::infinity();
            int best_j = -1;
            for (int j = 0; j < K; ++j) {
                if (used[j]) continue;
                const double dij = (centers.row(j) - true_centers.row(i)).squaredNorm();
                if (dij < best_d) {
                    best_d = dij;
                    best_j = j;
                }
            }
            perm[i] = best_j;
            used[best_j] = true;
        }
        return perm;
    }
    if (exhaustive) *exhaustive = true;
    std::vector<int> best = perm;
    double best_cost = cost(perm);
    // next_permutation walks lexicographically, so ties keep the smallest.
    while (std::next_permutation(perm.begin(), perm.end())) {
        const double c = cost(perm);
        if (c < best_cost) {
            best_cost = c;
            best = perm;
        }
    }
    return best;
}

double gmm_joint_tv_closed(const Eigen::MatrixXd& centers, const Eigen::MatrixXd& true_centers) {
    const std::vector<int> perm = match_permutation(centers, true_centers);
    const int K = static_cast<int>(centers.rows());
    double total = 0.0;
    for (int i = 0; i < K; ++i)
        total += gaussian_tv_closed(centers.row(perm[i]).transpose(),
                                    true_centers.row(i).transpose());
    return total / static_cast<double>(K);
}

LogDensityFn gmm_mixture_log_density(const Eigen::MatrixXd& centers) {
    return [centers](const Eigen::VectorXd& x) { return mixture_log_density_at(centers, x); };
}

SamplerFn gmm_mixture_sampler(const Eigen::MatrixXd& centers) {
    return [centers](Eigen::Index count, RngStream& rng) {
        const Eigen::Index K = centers.rows(), d = centers.cols();
        Eigen::MatrixXd x(count, d);
        fill_standard_normal(x, rng);
        for (Eigen::Index i = 0; i < count; ++i) {
            const int z = static_cast<int>(rng.next_raw() % static_cast<std::uint64_t>(K));
            x.row(i) += centers.row(z);
        }
        return x;
    };
}

GmmInformativeReport verify_informative_gmm(const Eigen::MatrixXd& centers,
                                            const Eigen::MatrixXd& true_centers,
                                            Eigen::Index mc_count, RngStream rng, double constant,
                                            int jobs) {
    GmmInformativeReport report;
    const int K = static_cast<int>(true_centers.rows());
    if (!check_separation(true_centers)) {
        report.precondition_ok = false;
        return report;
    }
    const DivergenceEstimate marg = estimate_tv(
        gmm_mixture_log_density(true_centers), gmm_mixture_log_density(centers),
        gmm_mixture_sampler(true_centers), mc_count, rng.substream(1), jobs);
    report.marginal_tv = marg.value;
    if (marg.value > 1.0 / (4.0 * static_cast<double>(K)) + 4.0 * marg.std_error) {
        report.precondition_ok = false;
        return report;
    }
    report.lhs = gmm_joint_tv_closed(centers, true_centers);
    report.rhs = constant * marg.value;
    report.rhs_std_error = constant * marg.std_error;
    report.holds = report.lhs <= report.rhs + 4.0 * report.rhs_std_error;
    return report;
}

GmmPipelineResult pipeline_gmm(const GmmModel& model, const LabelerPsi& psi_star, Eigen::Index m,
                               Eigen::Index n, int restarts, RngStream rng,
                               Eigen::Index risk_count) {
    if (m < 1) throw std::invalid_argument("pipeline_gmm: m must be positive");
    if (n < 1) throw std::invalid_argument("pipeline_gmm: n must be positive");
    validate_gmm(model);
    validate_labeler(psi_star, model.K());

    RngStream unlabeled_rng = rng.substream(1);
    RngStream labeled_rng = rng.substream(2);
    const Eigen::MatrixXd unlabeled = sample_gmm_unlabeled(model, m, unlabeled_rng);
    const GmmLabeledData labeled = sample_gmm_labeled(model, psi_star, n, labeled_rng);

    GmmPipelineResult result;
    result.centers_hat = mle_gmm(unlabeled, model.K(), restarts, rng.substream(3)).centers;
    result.psi_hat = erm_psi(result.centers_hat, labeled, psi_star.eps);

    const Eigen::MatrixXd centers_hat = result.centers_hat;
    const LabelerPsi psi_hat = result.psi_hat;
    const Eigen::MatrixXd true_centers = model.centers;
    const LabelerPsi psi_true = psi_star;
    const GmmModel model_copy = model;
    LabeledSamplerFn sampler = [model_copy, psi_true](Eigen::Index count, RngStream& r,
                                                      Eigen::MatrixXd& X, Eigen::VectorXd& y) {
        const GmmLabeledData fresh = sample_gmm_labeled(model_copy, psi_true, count, r);
        X = fresh.x;
        y = fresh.y.cast<double>();
    };
    result.excess_risk = excess_risk_mc(
        [centers_hat, psi_hat](const Eigen::VectorXd& x) {
            return static_cast<double>(bayes_predict_gmm(centers_hat, psi_hat, x));
        },
        [true_centers, psi_true](const Eigen::VectorXd& x) {
            return static_cast<double>(bayes_predict_gmm(true_centers, psi_true, x));
        },
        LossSpec::zero_one(), sampler, risk_count, rng.substream(4));
    return result;
}

}  // namespace ptlab
