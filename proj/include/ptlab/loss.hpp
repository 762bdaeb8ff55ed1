#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>

#include "ptlab/rng.hpp"

namespace ptlab {

enum class LossKind { squared, truncated_squared, zero_one };

struct LossSpec {
    LossKind kind = LossKind::squared;
    double truncation_level = 0.0;  // present iff truncated_squared

    static LossSpec squared() { return {LossKind::squared, 0.0}; }
    static LossSpec truncated(double level);
    static LossSpec zero_one() { return {LossKind::zero_one, 0.0}; }
};

double loss_eval(const LossSpec& spec, double prediction, double label);

struct RiskEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::int64_t sample_count = 0;
};

using PredictorFn = std::function<double(const Eigen::VectorXd&)>;
// Draws count labeled pairs into (X rows, y entries).
using LabeledSamplerFn =
    std::function<void(Eigen::Index count, RngStream&, Eigen::MatrixXd&, Eigen::VectorXd&)>;

// Monte-Carlo excess risk with paired differencing: the same fresh test draws
// feed both the fitted predictor and the Bayes predictor.
RiskEstimate excess_risk_mc(const PredictorFn& pred, const PredictorFn& bayes, const LossSpec& spec,
                            const LabeledSamplerFn& sampler, Eigen::Index count, RngStream rng,
                            int jobs = 1);

}  // namespace ptlab
