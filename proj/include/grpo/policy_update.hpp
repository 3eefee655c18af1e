#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "grpo/dynamics.hpp"
#include "grpo/world.hpp"

namespace grpo {

// Inputs of one exponential-tilt update against a fixed anchor row.
struct GibbsUpdateInputs {
    ConditionalPolicy anchor;
    double weight_plus = 0.0;
    double weight_minus = 0.0;
    double beta = 1.0;
};

struct GibbsResult {
    std::vector<double> row;  // normalized to 1 within 1e-12
    double z = 1.0;           // two-term partition value; may overflow to inf
    double log_z = 0.0;       // always finite for a feasible anchor
};

// pi(o) = anchor(o) exp((w_plus 1{r=1} - w_minus 1{r=0}) / beta) / Z with
//   Z = p_anchor e^{w_plus/beta} + (1-p_anchor) e^{-w_minus/beta}.
// Everything runs in log space with the max-shift trick since w/beta can be
// large. The closed two-term Z is cross-checked against full-outcome
// summation; a mismatch beyond 1e-10 aborts.
GibbsResult gibbs_update(const FiniteWorld& world, const GibbsUpdateInputs& inputs,
                         std::size_t qi);

// One reference-anchored step: weights from the scheme at pos(pi_prev),
// exponential tilt of pi_ref. The PoS of the result equals
// success_map(reference)(pos(pi_prev)) within 1e-12.
GibbsResult reference_step(const FiniteWorld& world, const ConditionalPolicy& pi_ref,
                           const ConditionalPolicy& pi_prev, const VariantSpec& variant,
                           std::size_t qi);

// One mirror step: same weights, anchored at pi_prev itself.
GibbsResult mirror_step(const FiniteWorld& world, const ConditionalPolicy& pi_prev,
                        const VariantSpec& variant, std::size_t qi);

// Normalized pointwise geometric mean ref^alpha * prev^(1-alpha), computed in
// log space. Throws std::domain_error when every outcome has zero mass in one
// of the rows' supports' intersection.
std::vector<double> geometric_mean(const std::vector<double>& ref_row,
                                   const std::vector<double>& prev_row, double alpha);

// Order-alpha Renyi divergences between the success conditionals and between
// the failure conditionals of two policies, and the induced correction
//   delta_r = (1-alpha) (d_failure - d_success).
struct RenyiReport {
    double alpha = 0.0;
    double d_success = 0.0;
    double d_failure = 0.0;
    double delta_r = 0.0;
};

// Requires both policies to have PoS strictly inside (0,1) at qi so all four
// conditionals exist; otherwise throws std::domain_error naming the side.
RenyiReport renyi_correction(const FiniteWorld& world, const ConditionalPolicy& pi_ref,
                             const ConditionalPolicy& pi_prev, double alpha, std::size_t qi);

struct TwoKlResult {
    std::vector<double> row;
    double z = 1.0;
    double log_z = 0.0;
    // Absent when a conditional is undefined (a PoS at 0 or 1); the update
    // itself is still exact via the geometric-mean anchor.
    std::optional<RenyiReport> renyi;
};

// One two-KL step: geometric-mean anchor, then the exponential tilt with
// weights from pos(pi_prev). The PoS of the result satisfies
//   logit p_n = alpha logit p_ref + (1-alpha) logit p_prev + delta_r + total_weight/beta.
TwoKlResult two_kl_step(const FiniteWorld& world, const ConditionalPolicy& pi_ref,
                        const ConditionalPolicy& pi_prev, const VariantSpec& variant,
                        std::size_t qi);

// One (step, prompt) record of a policy-level evolution.
struct EvolutionStep {
    int step = 0;
    double pos = 0.0;
    double logit_pos = 0.0;
    std::optional<double> delta_r;  // TwoKl only; absent when undefined
    double omega_over_beta = 0.0;
    double z = 1.0;
    double log_z = 0.0;
};

struct EvolutionResult {
    ConditionalPolicy final_policy;
    std::vector<std::vector<EvolutionStep>> per_prompt;  // [prompt][step]
    std::vector<ConditionalPolicy> snapshots;            // filled when requested; [0] = pi_ref
};

// Iterates the variant's policy-level update on every prompt for n_steps,
// starting from pi_0 = pi_ref (or pi_init when given, which lets two-kl runs
// start from drifted conditionals with a live renyi correction). Stops a
// prompt early once its PoS moves less than tol.
EvolutionResult evolve(const FiniteWorld& world, const ConditionalPolicy& pi_ref,
                       const VariantSpec& variant, int n_steps, double tol = 0.0,
                       bool keep_snapshots = false,
                       const ConditionalPolicy* pi_init = nullptr);

// Per-step audit of the two-KL affine log-odds recursion
//   L_n - L_ref = (1-alpha)(L_{n-1} - L_ref) + delta_r_n + omega_n/beta.
struct ContractionCheck {
    struct StepCheck {
        int step = 0;
        bool skipped = false;  // boundary logit or undefined delta_r
        double residual = 0.0;
    };
    double contraction_factor = 0.0;  // (1-alpha) on the homogeneous part
    std::vector<StepCheck> steps;

    bool all_ok(double tol = 1e-10) const {
        for (const auto& s : steps) {
            if (!s.skipped && !(std::abs(s.residual) <= tol)) return false;
        }
        return true;
    }
};

// logit_p_init is the chain's starting log-odds; defaults to logit_p_ref
// (the standard chain seeded at the reference).
ContractionCheck check_logodds_contraction(const std::vector<EvolutionStep>& prompt_steps,
                                           double logit_p_ref, double alpha,
                                           std::optional<double> logit_p_init = std::nullopt);

}  // namespace grpo
