#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "grpo/dynamics.hpp"
#include "grpo/world.hpp"

namespace grpo {

// A frozen regularized objective: the calibration weights are fixed at
// pos(pi_prev) under the variant's scheme, so candidates can be compared on
// exactly the problem the closed forms solve.
struct ObjectiveSpec {
    VariantSpec variant;
    ConditionalPolicy pi_ref;
    ConditionalPolicy pi_prev;
    std::vector<double> weight_plus;   // per prompt
    std::vector<double> weight_minus;  // per prompt
    std::optional<double> clip_epsilon;

    static ObjectiveSpec make(const FiniteWorld& world, const VariantSpec& variant,
                              ConditionalPolicy pi_ref, ConditionalPolicy pi_prev,
                              std::optional<double> clip_epsilon = std::nullopt);
};

// Exact finite-sum value of the unclipped objective at `candidate`:
// weighted success/failure masses minus beta times the KL term(s). A support
// violation (candidate mass where the anchor has none) returns -infinity and
// reports the offending outcome through `diag` when given.
double objective_value(const FiniteWorld& world, const ObjectiveSpec& spec,
                       const ConditionalPolicy& candidate, std::size_t qi,
                       std::string* diag = nullptr);

// Exact enumeration of the clipped importance-sampled reward term
//   E_{o~pi_prev} f_eps(pi(o)/pi_prev(o), A(o)),
// f_eps(x,y) = min(x y, clip(x, 1-eps, 1+eps) y). No KL term. Throws
// std::domain_error when pi_prev has zero mass under candidate support.
double clipped_surrogate(const FiniteWorld& world, const ObjectiveSpec& spec,
                         const ConditionalPolicy& candidate, std::size_t qi);

struct MaximizeOptions {
    int max_iters = 300'000;
    double residual_tol = 1e-10;
};

struct MaximizeResult {
    std::vector<double> row;
    double objective = 0.0;
    double residual = 0.0;  // spread of the simplex-projected gradient over the support
    int iters = 0;
    bool converged = false;
};

// Thrown when the mirror ascent fails to reach the residual tolerance;
// carries the best iterate found.
class MaximizeError : public std::runtime_error {
public:
    MaximizeError(std::string what, MaximizeResult best)
        : std::runtime_error(std::move(what)), best_(std::move(best)) {}
    const MaximizeResult& best() const { return best_; }

private:
    MaximizeResult best_;
};

// Entropic mirror ascent (multiplicative weights) on the outcome simplex.
// Iterates stay strictly inside the anchor's support. The step starts at
// 1/(2L) with L estimated from the weight magnitudes and halves whenever the
// objective decreases. Used as the independent check of the closed forms.
MaximizeResult maximize_numerically(const FiniteWorld& world, const ObjectiveSpec& spec,
                                    std::size_t qi, MaximizeOptions opts = {});

struct GroupEstimate {
    int group_size = 0;
    double p_hat = 0.0;  // in {0, 1/G, ..., 1}
    std::uint64_t seed = 0;
};

// Draws G outcomes from policy(.|qi) with the counter-based generator
// (grpo/rng.hpp) and returns the fraction of successes. Same seed, same
// estimate, on every platform.
GroupEstimate estimate_pos(const FiniteWorld& world, const ConditionalPolicy& policy,
                           std::size_t qi, int group_size, std::uint64_t seed);

}  // namespace grpo
