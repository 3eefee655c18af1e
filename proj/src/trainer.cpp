#include "grpo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "grpo/math_util.hpp"
#include "grpo/rng.hpp"

namespace grpo {

TabularSoftmaxPolicy TabularSoftmaxPolicy::from_policy(const FiniteWorld& world,
                                                       const ConditionalPolicy& policy) {
    TabularSoftmaxPolicy out;
    out.logits.resize(world.num_prompts());
    for (std::size_t qi = 0; qi < world.num_prompts(); ++qi) {
        const std::vector<double>& row = policy.row(qi);
        out.logits[qi].resize(row.size());
        for (std::size_t oi = 0; oi < row.size(); ++oi) {
            out.logits[qi][oi] = std::log(row[oi]);  // -inf keeps zero support
        }
    }
    return out;
}

std::vector<double> TabularSoftmaxPolicy::row_probs(std::size_t qi) const {
    const std::vector<double>& l = logits[qi];
    std::vector<double> probs(l.size());
    const double z = log_sum_exp(std::span<const double>(l.data(), l.size()));
    double mass = 0.0;
    for (std::size_t oi = 0; oi < l.size(); ++oi) {
        probs[oi] = std::exp(l[oi] - z);
        mass += probs[oi];
    }
    for (double& v : probs) v /= mass;
    return probs;
}

ConditionalPolicy TabularSoftmaxPolicy::to_policy(const FiniteWorld& world) const {
    std::vector<std::vector<double>> rows(world.num_prompts());
    for (std::size_t qi = 0; qi < world.num_prompts(); ++qi) rows[qi] = row_probs(qi);
    return ConditionalPolicy(world, std::move(rows));
}

namespace {

// d/dlogit_k of [ sum_o pi(o) w(o) - beta * KL terms ] through the softmax:
//   pi_k * (g_k - <pi, g>),  g(o) = w(o) - beta (log pi(o) - log anchor_eff(o) + 1).
std::vector<double> gradient_impl(const FiniteWorld& world, const std::vector<double>& probs,
                                  const std::vector<double>& log_ref_row,
                                  const std::vector<double>& log_old_row, double w_plus,
                                  double w_minus, const VariantSpec& variant, std::size_t qi) {
    const std::size_t n = probs.size();
    const double a = variant.anchor == AnchorKind::Reference
                         ? 1.0
                         : (variant.anchor == AnchorKind::Mirror ? 0.0 : variant.alpha);
    std::vector<double> g(n, 0.0);
    double mean_g = 0.0;
    for (std::size_t oi = 0; oi < n; ++oi) {
        if (probs[oi] == 0.0) continue;
        const double log_anchor =
            a == 1.0 ? log_ref_row[oi]
                     : (a == 0.0 ? log_old_row[oi]
                                 : a * log_ref_row[oi] + (1.0 - a) * log_old_row[oi]);
        const double w = world.is_success(qi, oi) ? w_plus : -w_minus;
        g[oi] = w - variant.beta * (std::log(probs[oi]) - log_anchor + 1.0);
        mean_g += probs[oi] * g[oi];
    }
    std::vector<double> grad(n, 0.0);
    for (std::size_t oi = 0; oi < n; ++oi) {
        if (probs[oi] == 0.0) continue;
        grad[oi] = probs[oi] * (g[oi] - mean_g);
    }
    return grad;
}

std::vector<double> log_row(const ConditionalPolicy& policy, std::size_t qi) {
    const std::vector<double>& row = policy.row(qi);
    std::vector<double> out(row.size());
    for (std::size_t oi = 0; oi < row.size(); ++oi) out[oi] = std::log(row[oi]);
    return out;
}

double surrogate_value(const FiniteWorld& world, const std::vector<double>& probs,
                       const std::vector<double>& log_ref_row,
                       const std::vector<double>& log_old_row, double w_plus, double w_minus,
                       const VariantSpec& variant, std::size_t qi) {
    const double a = variant.anchor == AnchorKind::Reference
                         ? 1.0
                         : (variant.anchor == AnchorKind::Mirror ? 0.0 : variant.alpha);
    double value = 0.0;
    for (std::size_t oi = 0; oi < probs.size(); ++oi) {
        if (probs[oi] == 0.0) continue;
        const double log_anchor =
            a == 1.0 ? log_ref_row[oi]
                     : (a == 0.0 ? log_old_row[oi]
                                 : a * log_ref_row[oi] + (1.0 - a) * log_old_row[oi]);
        const double w = world.is_success(qi, oi) ? w_plus : -w_minus;
        value += probs[oi] * (w - variant.beta * (std::log(probs[oi]) - log_anchor));
    }
    return value;
}

}  // namespace

std::vector<double> surrogate_gradient(const FiniteWorld& world,
                                       const TabularSoftmaxPolicy& policy,
                                       const ConditionalPolicy& pi_ref,
                                       const ConditionalPolicy& pi_old, double w_plus,
                                       double w_minus, const VariantSpec& variant,
                                       std::size_t qi) {
    return gradient_impl(world, policy.row_probs(qi), log_row(pi_ref, qi), log_row(pi_old, qi),
                         w_plus, w_minus, variant, qi);
}

namespace {

double default_learning_rate(const VariantSpec& variant, double max_weight) {
    // Gradient through the softmax is Lipschitz on the order of the weight
    // magnitude plus the KL curvature. Group-estimated weights can spike at a
    // boundary p_hat, so the auto rate rescales from the frozen weights of
    // the current outer iteration; a user-provided rate stays fixed.
    return 1.5 / (1.0 + max_weight + variant.beta);
}

std::vector<double> exact_chain_step(const FiniteWorld& world, const ConditionalPolicy& pi_ref,
                                     const ConditionalPolicy& current, const VariantSpec& variant,
                                     std::size_t qi) {
    switch (variant.anchor) {
        case AnchorKind::Reference:
            return reference_step(world, pi_ref, current, variant, qi).row;
        case AnchorKind::Mirror:
            return mirror_step(world, current, variant, qi).row;
        case AnchorKind::TwoKl:
            return two_kl_step(world, pi_ref, current, variant, qi).row;
    }
    throw std::logic_error("exact_chain_step: unreachable");
}

}  // namespace

TrainResult train(const FiniteWorld& world, const ConditionalPolicy& pi_ref,
                  const TrainConfig& config) {
    if (config.outer_iters < 1 || config.inner_steps < 1 || config.group_size < 1) {
        throw std::invalid_argument("train: outer_iters, inner_steps and group_size must be >= 1");
    }
    const std::size_t num_prompts = world.num_prompts();
    TabularSoftmaxPolicy params = TabularSoftmaxPolicy::from_policy(world, pi_ref);
    ConditionalPolicy exact = pi_ref;

    DriftReport drift;
    drift.per_prompt.resize(num_prompts);
    std::vector<SuccessTrajectory> trajectories(num_prompts);
    for (std::size_t qi = 0; qi < num_prompts; ++qi) {
        const double p0 = success_probability(world, pi_ref, qi);
        trajectories[qi].prompt_id = world.prompt(qi).id;
        trajectories[qi].values.push_back(p0);
        trajectories[qi].logits.push_back(logit(p0));
    }

    std::vector<double> prev_tv(num_prompts, 0.0);

    for (int outer = 1; outer <= config.outer_iters; ++outer) {
        const ConditionalPolicy pi_old = params.to_policy(world);
        std::vector<std::vector<double>> log_old(num_prompts), log_ref(num_prompts);
        std::vector<double> w_plus_q(num_prompts), w_minus_q(num_prompts);
        double max_weight = 0.0;
        for (std::size_t qi = 0; qi < num_prompts; ++qi) {
            log_old[qi] = log_row(pi_old, qi);
            log_ref[qi] = log_row(pi_ref, qi);
            double p_used = success_probability(world, pi_old, qi);
            if (!config.use_exact_pos) {
                p_used = estimate_pos(world, pi_old, qi, config.group_size,
                                      substream(config.seed, qi, static_cast<std::uint64_t>(outer)))
                             .p_hat;
            }
            w_plus_q[qi] = weight_plus(config.variant.scheme, p_used);
            w_minus_q[qi] = weight_minus(config.variant.scheme, p_used);
            max_weight = std::max({max_weight, w_plus_q[qi], w_minus_q[qi]});
        }
        const double lr = config.learning_rate > 0.0
                              ? config.learning_rate
                              : default_learning_rate(config.variant, max_weight);

        int decreasing_streak = 0;
        double last_objective = -kInf;
        for (int inner = 0; inner < config.inner_steps; ++inner) {
            double objective = 0.0;
            for (std::size_t qi = 0; qi < num_prompts; ++qi) {
                const std::vector<double> probs = params.row_probs(qi);
                const std::vector<double> grad =
                    gradient_impl(world, probs, log_ref[qi], log_old[qi], w_plus_q[qi],
                                  w_minus_q[qi], config.variant, qi);
                for (std::size_t oi = 0; oi < grad.size(); ++oi) {
                    params.logits[qi][oi] += lr * grad[oi];
                }
                objective += world.prompt(qi).weight *
                             surrogate_value(world, params.row_probs(qi), log_ref[qi],
                                             log_old[qi], w_plus_q[qi], w_minus_q[qi],
                                             config.variant, qi);
            }
            if (inner > 0 && objective < last_objective) {
                if (++decreasing_streak >= 10) {
                    throw std::runtime_error(
                        "train: surrogate decreased for 10 consecutive inner steps at outer "
                        "iteration " +
                        std::to_string(outer) + " (learning rate too large)");
                }
            } else {
                decreasing_streak = 0;
            }
            last_objective = objective;
        }

        // Exact closed-form chain in lockstep, always driven by exact PoS.
        std::vector<std::vector<double>> exact_rows(num_prompts);
        for (std::size_t qi = 0; qi < num_prompts; ++qi) {
            exact_rows[qi] = exact_chain_step(world, pi_ref, exact, config.variant, qi);
        }
        exact = ConditionalPolicy(world, std::move(exact_rows));

        const ConditionalPolicy trained = params.to_policy(world);
        for (std::size_t qi = 0; qi < num_prompts; ++qi) {
            DriftStep step;
            step.tv = total_variation(world, trained, exact, qi);
            step.delta = std::max(0.0, step.tv - prev_tv[qi]);
            step.pos_exact = success_probability(world, exact, qi);
            step.pos_param = success_probability(world, trained, qi);
            step.objective = surrogate_value(world, trained.row(qi), log_ref[qi], log_old[qi],
                                             w_plus_q[qi], w_minus_q[qi], config.variant, qi);
            prev_tv[qi] = step.tv;
            drift.per_prompt[qi].push_back(step);

            const double prev_p = trajectories[qi].values.back();
            trajectories[qi].values.push_back(step.pos_param);
            trajectories[qi].logits.push_back(logit(step.pos_param));
            trajectories[qi].logit_increments.push_back(logit(step.pos_param) - logit(prev_p));
        }
    }

    TrainResult result{params.to_policy(world), std::move(params), std::move(drift),
                       std::move(trajectories)};
    return result;
}

BoundCheck drift_bound_check(const DriftReport& report, std::span<const double> p_star,
                             double tol) {
    BoundCheck check;
    if (p_star.size() != report.per_prompt.size()) {
        throw std::invalid_argument("drift_bound_check: p_star size does not match report");
    }
    for (std::size_t qi = 0; qi < report.per_prompt.size(); ++qi) {
        const auto& steps = report.per_prompt[qi];
        double prev_tv = 0.0;
        double cumulative = 0.0;
        for (std::size_t n = 0; n < steps.size(); ++n) {
            const DriftStep& s = steps[n];
            if (std::abs(s.pos_param - s.pos_exact) > 2.0 * s.tv + tol) {
                check.ok = false;
                check.violations.push_back("prompt " + std::to_string(qi) + " step " +
                                           std::to_string(n + 1) +
                                           ": |pos gap| exceeds 2*TV");
            }
            if (s.tv > prev_tv + s.delta + tol) {
                check.ok = false;
                check.violations.push_back("prompt " + std::to_string(qi) + " step " +
                                           std::to_string(n + 1) +
                                           ": TV grew beyond the recorded drift increment");
            }
            prev_tv = s.tv;
            cumulative += s.delta;
        }
        if (!steps.empty()) {
            const double final_gap = std::abs(steps.back().pos_param - p_star[qi]);
            const double exact_gap = std::abs(steps.back().pos_exact - p_star[qi]);
            if (final_gap > 2.0 * cumulative + exact_gap + tol) {
                check.ok = false;
                check.violations.push_back("prompt " + std::to_string(qi) +
                                           ": final gap to p* exceeds 2*sum(delta)");
            }
        }
    }
    return check;
}

}  // namespace grpo
