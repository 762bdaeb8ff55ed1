#include "ptlab/loss.hpp"

#include <cmath>
#include <stdexcept>

#include "ptlab/parallel.hpp"

namespace ptlab {

LossSpec LossSpec::truncated(double level) {
    if (!(level > 0.0)) throw std::invalid_argument("loss: truncation level must be positive");
    return {LossKind::truncated_squared, level};
}

double loss_eval(const LossSpec& spec, double prediction, double label) {
    switch (spec.kind) {
        case LossKind::squared: {
            const double r = label - prediction;
            return r * r;
        }
        case LossKind::truncated_squared: {
            const double r = label - prediction;
            return std::min(r * r, spec.truncation_level);
        }
        case LossKind::zero_one: {
            const bool pred_ok = prediction == 0.0 || prediction == 1.0;
            const bool label_ok = label == 0.0 || label == 1.0;
            if (!pred_ok || !label_ok)
                throw std::invalid_argument("loss: zero_one needs arguments in {0,1}");
            return prediction != label ? 1.0 : 0.0;
        }
    }
    throw std::logic_error("loss: unknown kind");
}

RiskEstimate excess_risk_mc(const PredictorFn& pred, const PredictorFn& bayes, const LossSpec& spec,
                            const LabeledSamplerFn& sampler, Eigen::Index count, RngStream rng,
                            int jobs) {
    if (count < 1) throw std::invalid_argument("excess_risk_mc: count must be positive");
    constexpr Eigen::Index kBlock = 1 << 16;
    par::SumPair total;
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    for (Eigen::Index done = 0; done < count; done += kBlock) {
        const Eigen::Index b = std::min<Eigen::Index>(kBlock, count - done);
        sampler(b, rng, x, y);
        par::SumPair block = par::sum2_indexed(static_cast<std::size_t>(b), jobs, [&](std::size_t i) {
            const Eigen::VectorXd xi = x.row(static_cast<Eigen::Index>(i)).transpose();
            const double yi = y[static_cast<Eigen::Index>(i)];
            return loss_eval(spec, pred(xi), yi) - loss_eval(spec, bayes(xi), yi);
        });
        total.sum += block.sum;
        total.sum_sq += block.sum_sq;
    }
    RiskEstimate est;
    est.value = total.sum / static_cast<double>(count);
    if (count > 1) {
        double var = (total.sum_sq - static_cast<double>(count) * est.value * est.value) /
                     static_cast<double>(count - 1);
        if (var < 0.0) var = 0.0;
        est.std_error = std::sqrt(var / static_cast<double>(count));
    }
    est.sample_count = count;
    return est;
}

}  // namespace ptlab
