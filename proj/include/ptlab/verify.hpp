#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptlab/rng.hpp"

namespace ptlab {

struct VerifySuiteConfig {
    int factor_instances = 100;
    int gmm_instances = 50;
    int contrastive_instances = 50;
    std::int64_t mc_count = 40000;
    std::uint64_t seed = 2024;
    int jobs = 0;
    double factor_c1 = 500.0;
    double gmm_constant = 500.0;
    double contrastive_c3 = -1.0;  // <= 0 selects contrastive_default_c3()
};

struct VerifyItem {
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;  // lhs / rhs, the empirically observed tightness
    bool precondition_ok = true;
    bool holds = false;
};

struct VerifySuiteReport {
    std::vector<VerifyItem> factor;
    std::vector<VerifyItem> gmm;
    std::vector<VerifyItem> contrastive;

    bool all_hold() const;
    nlohmann::json to_json() const;
};

// Informativeness checks on perturbed instances of each family: joint-vs-
// marginal TV for the factor model and the mixture, joint TV vs pair
// Hellinger for the contrastive model. Every instance must hold within
// 4 standard errors of Monte-Carlo slack.
VerifySuiteReport run_verification_suite(const VerifySuiteConfig& config);

}  // namespace ptlab
