#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "grpo/oracle.hpp"
#include "grpo/policy_update.hpp"

namespace grpo {

// Tabular policy parameterized by one logit per (prompt, outcome); rows are
// softmax at temperature 1.
struct TabularSoftmaxPolicy {
    std::vector<std::vector<double>> logits;

    static TabularSoftmaxPolicy from_policy(const FiniteWorld& world,
                                            const ConditionalPolicy& policy);
    ConditionalPolicy to_policy(const FiniteWorld& world) const;
    std::vector<double> row_probs(std::size_t qi) const;
};

struct TrainConfig {
    VariantSpec variant;
    int outer_iters = 20;   // M
    int inner_steps = 200;  // mu gradient-ascent steps per outer iteration
    int group_size = 16;    // G rollouts when estimating the success probability
    double learning_rate = 0.0;  // <= 0 picks a stable default from the weights
    std::uint64_t seed = 0;
    bool use_exact_pos = true;  // false: group Monte-Carlo estimate
};

// Exact full-enumeration gradient of the unclipped surrogate with respect to
// the logits of prompt qi. No sampling enters the gradient itself; only the
// advantage weights may carry estimation noise.
std::vector<double> surrogate_gradient(const FiniteWorld& world,
                                       const TabularSoftmaxPolicy& policy,
                                       const ConditionalPolicy& pi_ref,
                                       const ConditionalPolicy& pi_old, double w_plus,
                                       double w_minus, const VariantSpec& variant,
                                       std::size_t qi);

struct DriftStep {
    double tv = 0.0;         // TV(parametric_n, exact_n) at this prompt
    double delta = 0.0;      // max(0, tv_n - tv_{n-1}): measured drift increment
    double pos_exact = 0.0;  // p_n of the closed-form chain
    double pos_param = 0.0;  // p~_n of the trained chain
    double objective = 0.0;  // surrogate value at the end of the inner loop
};

struct DriftReport {
    std::vector<std::vector<DriftStep>> per_prompt;  // [prompt][outer iteration]

    double cumulative_delta(std::size_t qi) const {
        double s = 0.0;
        for (const DriftStep& d : per_prompt[qi]) s += d.delta;
        return s;
    }
};

struct TrainResult {
    ConditionalPolicy final_policy;
    TabularSoftmaxPolicy final_logits;
    DriftReport drift;
    std::vector<SuccessTrajectory> trajectories;  // parametric PoS series per prompt
};

// Runs the desk-scale training loop: M outer iterations, each freezing the
// old policy, fixing the calibration weights from exact or group-estimated
// PoS, then taking mu inner gradient-ascent steps. The exact closed-form
// chain runs in lockstep and the per-iteration TV drift against it is logged.
// Aborts with std::runtime_error if the surrogate decreases for 10
// consecutive inner steps.
TrainResult train(const FiniteWorld& world, const ConditionalPolicy& pi_ref,
                  const TrainConfig& config);

struct BoundCheck {
    bool ok = true;
    std::vector<std::string> violations;
};

// Audits a drift report against the TV bounds: per step |p~_n - p_n| <= 2 tv_n
// and tv_n <= tv_{n-1} + delta_n, then the final gap |p~_N - p*| <= 2 sum(delta) + tol.
BoundCheck drift_bound_check(const DriftReport& report, std::span<const double> p_star,
                             double tol = 1e-9);

}  // namespace grpo
