#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grpo/world.hpp"

namespace grpo {

// Deterministic fixture generators backed by the counter-based rng: the same
// seed always produces the same world on every platform.

// Each prompt gets between min_outcomes and max_outcomes outcomes with at
// least one success and one failure among them; prompt weights are a random
// point on the simplex.
FiniteWorld random_world(std::uint64_t seed, std::size_t num_prompts = 1,
                         std::size_t min_outcomes = 2, std::size_t max_outcomes = 8);

// Strictly positive random rows (floor keeps every PoS away from {0,1}).
ConditionalPolicy random_policy(const FiniteWorld& world, std::uint64_t seed,
                                double floor = 1e-3);

struct SuiteResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct VerifyOptions {
    std::uint64_t seed = 42;
    int worlds = 50;  // fixture count for the randomized suites
    int jobs = 0;
};

// End-to-end verification: closed forms against the numerical maximizer,
// fixed-point amplification, mirror monotonicity, Renyi corrections, and the
// training drift bounds. Pure given (seed, worlds), so output is reproducible.
std::vector<SuiteResult> run_verify_suites(const VerifyOptions& opts);

// One fixed-width "pass|FAIL name detail" line per suite plus a summary line.
std::string verify_table(const std::vector<SuiteResult>& results);

}  // namespace grpo
