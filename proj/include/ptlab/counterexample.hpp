#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ptlab/rng.hpp"

namespace ptlab::counter {

// Discrete latent family on positive integers. Index 1 is the diagonal
// geometric truth; index i >= 2 moves the mass of the diagonal atom (i, i)
// onto (1, 1).
double phi_mass(int index, int x, int z);
double phi_marginal(int index, int x);

// Labelers: variant 1 copies z; variant 2 ignores z with masses (1/4, 1/2, 2^-j).
double psi_conditional(int variant, int y, int z);

double joint_mass(int phi_index, int psi_variant, int x, int y);

struct CounterSample {
    std::vector<int> unlabeled;
    std::vector<std::pair<int, int>> labeled;  // (x, y), y = x under the truth
    int support_cutoff_events = 0;             // draws beyond the tail cutoff
};

CounterSample sample_counter(std::int64_t m, std::int64_t n, RngStream& rng);

struct TwoPhaseFit {
    int phi_index = 1;
    int psi_variant = 1;
    bool psi_likelihood_vacuous = false;  // both labelers scored zero likelihood
};

// Exact two-phase maximum likelihood: phase 1 compares the unlabeled
// log-likelihood over {phi_i : 1 <= i <= max(sample)+1} with ties to the
// smallest index; phase 2 compares the labeled joint log-likelihood over the
// two labelers. When the fitted phi gives the labeled sample zero probability
// under both labelers the argmax is vacuous and variant 2 is returned.
TwoPhaseFit two_phase_mle(const std::vector<int>& unlabeled,
                          const std::vector<std::pair<int, int>>& labeled);

// Closed-form equivalent of the phase-1 argmax: min{k >= 2 : k not in
// sample} when 1 is present, otherwise 1.
int phase1_rule(const std::vector<int>& unlabeled);

// Exact TV between the (x,y) joints of (phi_index, psi_variant) and the truth
// (phi_1, psi_1); finite sums to a cutoff plus analytic geometric tails.
double tv_counter(int phi_index, int psi_variant);

// 0.11627... = (1/2)(1 - 1/e)(1/e).
double failure_constant();

struct FailureReport {
    double frequency = 0.0;
    double std_error = 0.0;
    bool threshold_met = false;
    std::int64_t trials = 0;
};

// m = n = 2^L_exponent per trial; frequency of {TV >= 1/8} over the trials.
FailureReport failure_probability_mc(int L_exponent, std::int64_t trials, RngStream rng,
                                     int jobs = 1);

}  // namespace ptlab::counter
