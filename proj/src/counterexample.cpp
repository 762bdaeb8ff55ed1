#include "ptlab/counterexample.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "ptlab/parallel.hpp"

namespace ptlab::counter {

namespace {

constexpr int kCutoff = 60;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double pow2neg(int k) { return std::ldexp(1.0, -k); }  // exact 2^-k

}  // namespace

double phi_mass(int index, int x, int z) {
    if (x < 1 || z < 1 || index < 1) throw std::invalid_argument("phi_mass: arguments must be >= 1");
    if (x != z) return 0.0;
    if (index == 1) return pow2neg(x);
    if (x == 1) return 0.5 + pow2neg(index);
    if (x == index) return 0.0;
    return pow2neg(x);
}

double phi_marginal(int index, int x) { return phi_mass(index, x, x); }

double psi_conditional(int variant, int y, int z) {
    if (y < 1 || z < 1) throw std::invalid_argument("psi_conditional: arguments must be >= 1");
    if (variant == 1) return y == z ? 1.0 : 0.0;
    if (variant == 2) {
        if (y == 1) return 0.25;
        if (y == 2) return 0.5;
        return pow2neg(y);
    }
    throw std::invalid_argument("psi_conditional: variant must be 1 or 2");
}

double joint_mass(int phi_index, int psi_variant, int x, int y) {
    // The latent families are diagonal, so only z = x contributes.
    return phi_mass(phi_index, x, x) * psi_conditional(psi_variant, y, x);
}

CounterSample sample_counter(std::int64_t m, std::int64_t n, RngStream& rng) {
    if (m < 1 || n < 0) throw std::invalid_argument("sample_counter: need m >= 1, n >= 0");
    CounterSample sample;
    auto draw_geometric = [&]() {
        const double u = 1.0 - rng.uniform();  // (0,1]
        int x = 1 + static_cast<int>(std::floor(-std::log2(u)));
        if (x > kCutoff) {
            ++sample.support_cutoff_events;
            x = kCutoff;
        }
        return x;
    };
    sample.unlabeled.reserve(static_cast<std::size_t>(m));
    for (std::int64_t i = 0; i < m; ++i) sample.unlabeled.push_back(draw_geometric());
    sample.labeled.reserve(static_cast<std::size_t>(n));
    for (std::int64_t j = 0; j < n; ++j) {
        const int x = draw_geometric();
        sample.labeled.emplace_back(x, x);  // psi_1 is deterministic: y = x
    }
    return sample;
}

int phase1_rule(const std::vector<int>& unlabeled) {
    if (std::find(unlabeled.begin(), unlabeled.end(), 1) == unlabeled.end()) return 1;
    std::vector<int> sorted(unlabeled);
    std::sort(sorted.begin(), sorted.end());
    int candidate = 2;
    for (int x : sorted) {
        if (x < candidate) continue;
        if (x == candidate) ++candidate;
        if (x > candidate) break;
    }
    return candidate;
}

TwoPhaseFit two_phase_mle(const std::vector<int>& unlabeled,
                          const std::vector<std::pair<int, int>>& labeled) {
    if (unlabeled.empty() || labeled.empty())
        throw std::invalid_argument("two_phase_mle: samples must be nonempty");

    std::map<int, int> counts;
    int max_x = 0;
    for (int x : unlabeled) {
        ++counts[x];
        max_x = std::max(max_x, x);
    }

    // Phase 1: exact log-likelihood over candidates {1, ..., max(sample)+1};
    // every phi_i with i > max(sample) scores identically, ties to smallest.
    auto phase1_loglik = [&](int index) {
        double total = 0.0;
        for (const auto& [x, c] : counts) {
            const double mass = phi_marginal(index, x);
            if (mass <= 0.0) return kNegInf;
            total += c * std::log(mass);
        }
        return total;
    };
    TwoPhaseFit fit;
    double best = phase1_loglik(1);
    fit.phi_index = 1;
    for (int i = 2; i <= max_x + 1; ++i) {
        const double ll = phase1_loglik(i);
        if (ll > best) {
            best = ll;
            fit.phi_index = i;
        }
    }

    // Phase 2: joint log-likelihood of the labeled pairs under each labeler.
    auto phase2_loglik = [&](int variant) {
        double total = 0.0;
        for (const auto& [x, y] : labeled) {
            const double mass = joint_mass(fit.phi_index, variant, x, y);
            if (mass <= 0.0) return kNegInf;
            total += std::log(mass);
        }
        return total;
    };
    const double l1 = phase2_loglik(1);
    const double l2 = phase2_loglik(2);
    if (l1 == kNegInf && l2 == kNegInf) {
        // Every labeler gives the data zero probability, so any element of the
        // class maximizes the likelihood; variant 2 is the returned maximizer.
        fit.psi_variant = 2;
        fit.psi_likelihood_vacuous = true;
    } else {
        fit.psi_variant = l2 > l1 ? 2 : 1;
    }
    return fit;
}

double tv_counter(int phi_index, int psi_variant) {
    if (phi_index < 1) throw std::invalid_argument("tv_counter: phi index must be >= 1");
    if (psi_variant != 1 && psi_variant != 2)
        throw std::invalid_argument("tv_counter: psi variant must be 1 or 2");

    if (psi_variant == 1) {
        // Both joints are diagonal; they differ only on the atoms (1,1) and (i,i).
        return phi_index == 1 ? 0.0 : pow2neg(phi_index);
    }

    // psi_2 spreads every x-mass over y with weights psi2(y). For each k:
    //   sum_j |p(k,j) - q(k,j)| = |2^-k - M_k psi2(k)| + M_k (1 - psi2(k)),
    // where M_k is the fitted x-marginal. Beyond the cutoff both masses are
    // geometric and the remainder sums in closed form.
    const int limit = std::max(kCutoff, phi_index + 1);
    double abs_sum = 0.0;
    for (int k = 1; k <= limit; ++k) {
        const double truth = pow2neg(k);
        const double fitted = phi_marginal(phi_index, k);
        const double at_k = psi_conditional(2, k, k);
        abs_sum += std::abs(truth - fitted * at_k) + fitted * (1.0 - at_k);
    }
    // Tail k > limit >= 3: masses agree (M_k = 2^-k) and psi2(k) = 2^-k, so the
    // row contributes 2 (2^-k - 4^-k).
    const double tail = 2.0 * (pow2neg(limit) - std::pow(4.0, -limit) / 3.0);
    return 0.5 * (abs_sum + tail);
}

double failure_constant() {
    const double inv_e = std::exp(-1.0);
    return 0.5 * (1.0 - inv_e) * inv_e;
}

FailureReport failure_probability_mc(int L_exponent, std::int64_t trials, RngStream rng, int jobs) {
    if (trials < 100) throw std::invalid_argument("failure_probability_mc: need trials >= 100");
    if (L_exponent < 1 || L_exponent > 40)
        throw std::invalid_argument("failure_probability_mc: L_exponent out of range");
    const std::int64_t m = std::int64_t(1) << L_exponent;

    std::vector<unsigned char> hit(static_cast<std::size_t>(trials), 0);
    par::for_each_index(static_cast<std::size_t>(trials), jobs, [&](std::size_t trial) {
        RngStream trial_rng = rng.substream(trial);
        const CounterSample sample = sample_counter(m, m, trial_rng);
        const TwoPhaseFit fit = two_phase_mle(sample.unlabeled, sample.labeled);
        hit[trial] = tv_counter(fit.phi_index, fit.psi_variant) >= 0.125 ? 1 : 0;
    });

    FailureReport report;
    report.trials = trials;
    std::int64_t hits = 0;
    for (unsigned char h : hit) hits += h;
    report.frequency = static_cast<double>(hits) / static_cast<double>(trials);
    report.std_error =
        std::sqrt(report.frequency * (1.0 - report.frequency) / static_cast<double>(trials));
    report.threshold_met = report.frequency >= failure_constant() - 3.0 * report.std_error;
    return report;
}

}  // namespace ptlab::counter
