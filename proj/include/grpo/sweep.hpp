#pragma once

#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace grpo {

inline int resolve_jobs(int jobs) {
#ifdef _OPENMP
    if (jobs <= 0) return omp_get_max_threads();
    return jobs;
#else
    (void)jobs;
    return 1;
#endif
}

// Serial reference kernel: out[i] = fn(i).
template <typename Fn>
auto serial_map(std::size_t n, Fn&& fn) {
    using R = decltype(fn(std::size_t{0}));
    std::vector<R> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
}

// OpenMP kernel over independent cells. Each slot i always receives fn(i),
// so the gathered result is in grid order and byte-identical to the serial
// reference no matter how many jobs run or how the schedule lands.
template <typename Fn>
auto parallel_map(std::size_t n, int jobs, Fn&& fn) {
    using R = decltype(fn(std::size_t{0}));
    std::vector<R> out(n);
#ifdef _OPENMP
    const int threads = resolve_jobs(jobs);
    #pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        out[static_cast<std::size_t>(i)] = fn(static_cast<std::size_t>(i));
    }
#else
    (void)jobs;
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
#endif
    return out;
}

}  // namespace grpo
