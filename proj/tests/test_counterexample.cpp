#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ptlab/counterexample.hpp"

using namespace ptlab;
using namespace ptlab::counter;

TEST_CASE("defined masses sum to one analytically") {
    for (int index : {1, 2, 3, 7, 20}) {
        double total = 0.0;
        for (int k = 1; k <= 60; ++k) total += phi_marginal(index, k);
        total += std::ldexp(1.0, -60);  // geometric tail beyond the cutoff
        if (index >= 2) {
            // the tail contains no mass at k = index when index > 60 (not here)
        }
        CHECK(std::abs(total - 1.0) <= 1e-14);
    }
    double psi2 = 0.0;
    for (int j = 1; j <= 60; ++j) psi2 += psi_conditional(2, j, 5);
    psi2 += std::ldexp(1.0, -60);
    CHECK(std::abs(psi2 - 1.0) <= 1e-14);
}

TEST_CASE("sampling the truth: labels copy x, P(x=1) is a half, tail events are logged") {
    RngStream rng(1, 0);
    const std::int64_t m = 20000;
    const CounterSample sample = sample_counter(m, m, rng);
    double ones = 0;
    for (const auto& [x, y] : sample.labeled) {
        CHECK(y == x);
    }
    for (int x : sample.unlabeled) ones += x == 1;
    const double rate = ones / static_cast<double>(m);
    CHECK(std::abs(rate - 0.5) <= 3.0 * std::sqrt(0.25 / static_cast<double>(m)));
    CHECK(sample.support_cutoff_events == 0);  // P(x > 60) ~ 1e-18 at this m
}

TEST_CASE("phase-1 likelihood comparison follows the closed-form rule") {
    SUBCASE("spec examples") {
        CHECK(two_phase_mle({1, 2}, {{1, 1}}).phi_index == 3);
        CHECK(two_phase_mle({2, 3}, {{2, 2}}).phi_index == 1);
    }
    SUBCASE("equivalence on 10^4 random samples") {
        RngStream rng(2, 0);
        for (int rep = 0; rep < 10000; ++rep) {
            RngStream rep_rng = rng.substream(rep);
            const std::int64_t m = 1 + static_cast<std::int64_t>(rep_rng.next_raw() % 64);
            const CounterSample sample = sample_counter(m, 1, rep_rng);
            const TwoPhaseFit fit = two_phase_mle(sample.unlabeled, sample.labeled);
            CHECK(fit.phi_index == phase1_rule(sample.unlabeled));
        }
    }
}

TEST_CASE("phase-2 picks psi_2 exactly when the fitted support excludes a labeled value") {
    // unlabeled {1,2} -> phi_3; labeled containing y = 3 kills psi_1 and psi_2 alike,
    // and the vacuous argmax resolves to psi_2.
    const TwoPhaseFit fit = two_phase_mle({1, 2}, {{3, 3}, {1, 1}});
    CHECK(fit.phi_index == 3);
    CHECK(fit.psi_variant == 2);
    CHECK(fit.psi_likelihood_vacuous);

    // without the impossible value, psi_1 wins on likelihood
    const TwoPhaseFit fine = two_phase_mle({1, 2}, {{1, 1}, {2, 2}});
    CHECK(fine.phi_index == 3);
    CHECK(fine.psi_variant == 1);
    CHECK_FALSE(fine.psi_likelihood_vacuous);
}

TEST_CASE("exact TV against a brute-force double sum") {
    auto brute = [](int index, int variant) {
        double total = 0.0;
        for (int k = 1; k <= 220; ++k)
            for (int j = 1; j <= 220; ++j)
                total += std::abs(joint_mass(index, variant, k, j) - joint_mass(1, 1, k, j));
        return 0.5 * total;
    };
    CHECK(tv_counter(1, 1) == 0.0);
    for (int index : {1, 2, 3, 5, 9}) {
        CHECK(tv_counter(index, 2) == doctest::Approx(brute(index, 2)).epsilon(1e-12));
        CHECK(tv_counter(index, 1) == doctest::Approx(brute(index, 1)).epsilon(1e-12));
    }
    SUBCASE("zero iff identical parameters") {
        CHECK(tv_counter(1, 2) > 0.0);
        for (int index : {2, 3, 8}) {
            CHECK(tv_counter(index, 1) > 0.0);
            CHECK(tv_counter(index, 2) > 0.0);
        }
    }
}

TEST_CASE("y-marginals and the 1/8 floor") {
    // P_{phi_i, psi_2}(y = 2) = 1/2 while the truth gives 1/4.
    for (int index : {2, 4, 11}) {
        double fitted_y2 = 0.0, truth_y2 = 0.0;
        for (int k = 1; k <= 60; ++k) {
            fitted_y2 += joint_mass(index, 2, k, 2);
            truth_y2 += joint_mass(1, 1, k, 2);
        }
        fitted_y2 += 0.5 * std::ldexp(1.0, -60);  // tail x-mass times psi2(2)
        CHECK(fitted_y2 == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(truth_y2 == doctest::Approx(0.25).epsilon(1e-14));
        CHECK(tv_counter(index, 2) >= 0.125);
    }
}

TEST_CASE("failure probability harness") {
    CHECK(failure_constant() == doctest::Approx(0.11627).epsilon(5e-5));
    CHECK_THROWS_AS(failure_probability_mc(8, 0, RngStream(3, 0)), std::invalid_argument);

    const FailureReport a = failure_probability_mc(8, 300, RngStream(4, 0), 1);
    const FailureReport b = failure_probability_mc(8, 300, RngStream(4, 0), 4);
    CHECK(a.frequency == b.frequency);  // jobs do not change the result
    CHECK(a.threshold_met);
}
