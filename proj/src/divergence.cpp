#include "ptlab/divergence.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ptlab/parallel.hpp"

namespace ptlab {

namespace {

constexpr Eigen::Index kBlock = 1 << 16;

// Streams `count` draws from p in fixed blocks and accumulates term(ratio)
// where ratio = q(x)/p(x). The block structure and chunked partial sums make
// the result independent of the worker count.
par::SumPair accumulate_ratio_terms(const LogDensityFn& log_p, const LogDensityFn& log_q,
                                    const SamplerFn& sample_p, Eigen::Index count, RngStream& rng,
                                    int jobs, const std::function<double(double)>& term) {
    par::SumPair total;
    for (Eigen::Index done = 0; done < count; done += kBlock) {
        const Eigen::Index b = std::min<Eigen::Index>(kBlock, count - done);
        const Eigen::MatrixXd x = sample_p(b, rng);
        par::SumPair block = par::sum2_indexed(static_cast<std::size_t>(b), jobs, [&](std::size_t i) {
            const Eigen::VectorXd xi = x.row(static_cast<Eigen::Index>(i)).transpose();
            const double ratio = std::exp(log_q(xi) - log_p(xi));
            if (!std::isfinite(ratio)) {
                std::ostringstream msg;
                msg << "divergence estimate: non-finite density ratio at sample [";
                for (Eigen::Index j = 0; j < xi.size(); ++j)
                    msg << (j ? ", " : "") << xi[j];
                msg << "]";
                throw std::runtime_error(msg.str());
            }
            return term(ratio);
        });
        total.sum += block.sum;
        total.sum_sq += block.sum_sq;
    }
    return total;
}

double std_error_of_mean(const par::SumPair& s, Eigen::Index n) {
    if (n < 2) return 0.0;
    const double mean = s.sum / static_cast<double>(n);
    double var = (s.sum_sq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1);
    if (var < 0.0) var = 0.0;
    return std::sqrt(var / static_cast<double>(n));
}

}  // namespace

DivergenceEstimate estimate_tv(const LogDensityFn& log_p, const LogDensityFn& log_q,
                               const SamplerFn& sample_p, Eigen::Index count, RngStream rng,
                               int jobs) {
    if (count < 1) throw std::invalid_argument("estimate_tv: count must be positive");
    const par::SumPair s = accumulate_ratio_terms(log_p, log_q, sample_p, count, rng, jobs,
                                                  [](double r) { return std::max(0.0, 1.0 - r); });
    DivergenceEstimate est;
    est.value = s.sum / static_cast<double>(count);
    est.std_error = std_error_of_mean(s, count);
    est.sample_count = count;
    return est;
}

DivergenceEstimate estimate_hellinger(const LogDensityFn& log_p, const LogDensityFn& log_q,
                                      const SamplerFn& sample_p, Eigen::Index count, RngStream rng,
                                      int jobs) {
    if (count < 1) throw std::invalid_argument("estimate_hellinger: count must be positive");
    const par::SumPair s = accumulate_ratio_terms(log_p, log_q, sample_p, count, rng, jobs,
                                                  [](double r) { return std::sqrt(r); });
    const double affinity = s.sum / static_cast<double>(count);  // estimates E_p[sqrt(q/p)]
    const double se_affinity = std_error_of_mean(s, count);
    const double h_sq = std::max(0.0, 1.0 - affinity);
    DivergenceEstimate est;
    est.value = std::sqrt(h_sq);
    // Delta method: dH/dA = -1/(2H); keep the error finite as H -> 0.
    const double denom = 2.0 * std::max(est.value, std::sqrt(se_affinity));
    est.std_error = denom > 0.0 ? se_affinity / denom : 0.0;
    est.sample_count = count;
    return est;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double gaussian_tv_closed(const Eigen::VectorXd& mu1, const Eigen::VectorXd& mu2) {
    if (mu1.size() != mu2.size())
        throw std::invalid_argument("gaussian_tv_closed: dimension mismatch");
    const double delta = (mu1 - mu2).norm();
    return 2.0 * normal_cdf(delta / 2.0) - 1.0;
}

}  // namespace ptlab
