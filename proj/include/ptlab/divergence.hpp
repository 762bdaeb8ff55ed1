#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>

#include "ptlab/rng.hpp"

namespace ptlab {

// Point -> log-density under a named model.
using LogDensityFn = std::function<double(const Eigen::VectorXd&)>;
// count -> matrix of i.i.d. sample rows, drawn from the stream.
using SamplerFn = std::function<Eigen::MatrixXd(Eigen::Index count, RngStream&)>;

struct DivergenceEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::int64_t sample_count = 0;
};

// Monte-Carlo total variation distance E_p[(1 - q/p)_+] with standard error
// of the mean. Requires exact densities for p and q and a sampler for p.
DivergenceEstimate estimate_tv(const LogDensityFn& log_p, const LogDensityFn& log_q,
                               const SamplerFn& sample_p, Eigen::Index count, RngStream rng,
                               int jobs = 1);

// Monte-Carlo Hellinger distance sqrt(max(0, 1 - E_p[sqrt(q/p)])) with a
// delta-method standard error.
DivergenceEstimate estimate_hellinger(const LogDensityFn& log_p, const LogDensityFn& log_q,
                                      const SamplerFn& sample_p, Eigen::Index count, RngStream rng,
                                      int jobs = 1);

// Exact TV between N(mu1, I) and N(mu2, I): 2 Phi(||mu1-mu2||/2) - 1.
double gaussian_tv_closed(const Eigen::VectorXd& mu1, const Eigen::VectorXd& mu2);

// Standard normal CDF.
double normal_cdf(double x);

}  // namespace ptlab
