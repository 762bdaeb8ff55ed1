#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ptlab::par {

inline int max_jobs() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// Runs fn(i) for i in [0, count). Each index owns its output slot, so the
// result is identical for any worker count. Exceptions are captured in the
// workers and the first one is rethrown on the calling thread.
inline void for_each_index(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 0) jobs = max_jobs();
    std::exception_ptr first_error = nullptr;
#ifdef _OPENMP
    if (jobs > 1) {
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs)
        for (long long i = 0; i < static_cast<long long>(count); ++i) {
            try {
                fn(static_cast<std::size_t>(i));
            } catch (...) {
#pragma omp critical
                if (!first_error) first_error = std::current_exception();
            }
        }
        if (first_error) std::rethrow_exception(first_error);
        return;
    }
#endif
    (void)jobs;
    for (std::size_t i = 0; i < count; ++i) fn(i);
}

constexpr std::size_t kChunk = 4096;

struct SumPair {
    double sum = 0.0;
    double sum_sq = 0.0;
};

// Deterministic chunked reduction: partial sums are computed per fixed-size
// chunk and folded in chunk order, so the floating-point result does not
// depend on the number of threads. term(i) is evaluated exactly once.
inline SumPair sum2_indexed(std::size_t count, int jobs, const std::function<double(std::size_t)>& term) {
    const std::size_t nchunks = (count + kChunk - 1) / kChunk;
    std::vector<SumPair> partial(nchunks);
    for_each_index(nchunks, jobs, [&](std::size_t c) {
        const std::size_t lo = c * kChunk;
        const std::size_t hi = std::min(lo + kChunk, count);
        SumPair acc;
        for (std::size_t i = lo; i < hi; ++i) {
            const double v = term(i);
            acc.sum += v;
            acc.sum_sq += v * v;
        }
        partial[c] = acc;
    });
    SumPair total;
    for (const SumPair& p : partial) {
        total.sum += p.sum;
        total.sum_sq += p.sum_sq;
    }
    return total;
}

// Serial reference for sum2_indexed: same chunked association, no OpenMP.
inline SumPair sum2_indexed_serial(std::size_t count, const std::function<double(std::size_t)>& term) {
    const std::size_t nchunks = (count + kChunk - 1) / kChunk;
    SumPair total;
    for (std::size_t c = 0; c < nchunks; ++c) {
        const std::size_t lo = c * kChunk;
        const std::size_t hi = std::min(lo + kChunk, count);
        SumPair acc;
        for (std::size_t i = lo; i < hi; ++i) {
            const double v = term(i);
            acc.sum += v;
            acc.sum_sq += v * v;
        }
        total.sum += acc.sum;
        total.sum_sq += acc.sum_sq;
    }
    return total;
}

inline double sum_indexed(std::size_t count, int jobs, const std::function<double(std::size_t)>& term) {
    return sum2_indexed(count, jobs, term).sum;
}

}  // namespace ptlab::par
