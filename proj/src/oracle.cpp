#include "grpo/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "grpo/math_util.hpp"
#include "grpo/rng.hpp"

namespace grpo {

namespace {

// alpha log ref + (1-alpha) log prev per outcome; the effective log-anchor of
// every variant (alpha = 1 reference, alpha = 0 mirror).
std::vector<double> effective_log_anchor(const ObjectiveSpec& spec, std::size_t qi) {
    const std::vector<double>& ref = spec.pi_ref.row(qi);
    const std::vector<double>& prev = spec.pi_prev.row(qi);
    double a = 1.0;
    switch (spec.variant.anchor) {
        case AnchorKind::Reference: a = 1.0; break;
        case AnchorKind::Mirror: a = 0.0; break;
        case AnchorKind::TwoKl: a = spec.variant.alpha; break;
    }
    std::vector<double> log_anchor(ref.size());
    for (std::size_t oi = 0; oi < ref.size(); ++oi) {
        const double lr = std::log(ref[oi]);
        const double lp = std::log(prev[oi]);
        if (a == 1.0) {
            log_anchor[oi] = lr;
        } else if (a == 0.0) {
            log_anchor[oi] = lp;
        } else {
            log_anchor[oi] = a * lr + (1.0 - a) * lp;
        }
    }
    return log_anchor;
}

double signed_weight(const ObjectiveSpec& spec, const FiniteWorld& world, std::size_t qi,
                     std::size_t oi) {
    return world.is_success(qi, oi) ? spec.weight_plus[qi] : -spec.weight_minus[qi];
}

double kl_divergence(const std::vector<double>& c, const std::vector<double>& a,
                     std::string* diag, bool* violated) {
    double kl = 0.0;
    for (std::size_t oi = 0; oi < c.size(); ++oi) {
        if (c[oi] == 0.0) continue;
        if (a[oi] == 0.0) {
            if (diag) *diag = "candidate mass on outcome " + std::to_string(oi) +
                              " where the anchor has none";
            *violated = true;
            return 0.0;
        }
        kl += c[oi] * std::log(c[oi] / a[oi]);
    }
    return kl;
}

double objective_row(const FiniteWorld& world, const ObjectiveSpec& spec,
                     const std::vector<double>& row, std::size_t qi, std::string* diag) {
    double reward = 0.0;
    for (std::size_t oi = 0; oi < row.size(); ++oi) {
        reward += row[oi] * signed_weight(spec, world, qi, oi);
    }
    bool violated = false;
    double penalty = 0.0;
    const std::vector<double>& ref = spec.pi_ref.row(qi);
    const std::vector<double>& prev = spec.pi_prev.row(qi);
    switch (spec.variant.anchor) {
        case AnchorKind::Reference:
            penalty = kl_divergence(row, ref, diag, &violated);
            break;
        case AnchorKind::Mirror:
            penalty = kl_divergence(row, prev, diag, &violated);
            break;
        case AnchorKind::TwoKl: {
            const double kr = kl_divergence(row, ref, diag, &violated);
            if (!violated) {
                penalty = spec.variant.alpha * kr +
                          (1.0 - spec.variant.alpha) * kl_divergence(row, prev, diag, &violated);
            }
            break;
        }
    }
    if (violated) return -kInf;
    return reward - spec.variant.beta * penalty;
}

}  // namespace

ObjectiveSpec ObjectiveSpec::make(const FiniteWorld& world, const VariantSpec& variant,
                                  ConditionalPolicy pi_ref, ConditionalPolicy pi_prev,
                                  std::optional<double> clip_epsilon) {
    ObjectiveSpec spec{variant, std::move(pi_ref), std::move(pi_prev), {}, {}, clip_epsilon};
    spec.weight_plus.resize(world.num_prompts());
    spec.weight_minus.resize(world.num_prompts());
    for (std::size_t qi = 0; qi < world.num_prompts(); ++qi) {
        const double p = success_probability(world, spec.pi_prev, qi);
        spec.weight_plus[qi] = grpo::weight_plus(variant.scheme, p);
        spec.weight_minus[qi] = grpo::weight_minus(variant.scheme, p);
    }
    return spec;
}

double objective_value(const FiniteWorld& world, const ObjectiveSpec& spec,
                       const ConditionalPolicy& candidate, std::size_t qi, std::string* diag) {
    return objective_row(world, spec, candidate.row(qi), qi, diag);
}

double clipped_surrogate(const FiniteWorld& world, const ObjectiveSpec& spec,
                         const ConditionalPolicy& candidate, std::size_t qi) {
    if (!spec.clip_epsilon.has_value()) {
        throw std::invalid_argument("clipped_surrogate: spec has no clip epsilon");
    }
    const double eps = *spec.clip_epsilon;
    const std::vector<double>& old_row = spec.pi_prev.row(qi);
    const std::vector<double>& cand = candidate.row(qi);
    double value = 0.0;
    for (std::size_t oi = 0; oi < cand.size(); ++oi) {
        if (old_row[oi] == 0.0) {
            if (cand[oi] > 0.0) {
                throw std::domain_error(
                    "clipped_surrogate: candidate mass where the old policy has none");
            }
            continue;
        }
        const double ratio = cand[oi] / old_row[oi];
        const double adv = signed_weight(spec, world, qi, oi);
        const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
        value += old_row[oi] * std::min(ratio * adv, clipped * adv);
    }
    return value;
}

MaximizeResult maximize_numerically(const FiniteWorld& world, const ObjectiveSpec& spec,
                                    std::size_t qi, MaximizeOptions opts) {
    const std::vector<double> log_anchor = effective_log_anchor(spec, qi);
    const std::size_t n = log_anchor.size();
    const double beta = spec.variant.beta;

    // Start at the anchor itself; its support never grows.
    std::vector<double> log_pi = log_anchor;
    {
        const double z = log_sum_exp(std::span<const double>(log_pi.data(), n));
        if (z == -kInf) {
            throw std::domain_error("maximize_numerically: anchor support is empty");
        }
        for (double& v : log_pi) v -= z;
    }

    const double max_w = std::max(spec.weight_plus[qi], spec.weight_minus[qi]);
    double step = 1.0 / (2.0 * std::max(max_w, beta));

    std::vector<double> pi(n), grad(n), trial(n);
    const auto to_probs = [&](const std::vector<double>& lp, std::vector<double>& out) {
        double mass = 0.0;
        for (std::size_t oi = 0; oi < n; ++oi) {
            out[oi] = std::exp(lp[oi]);
            mass += out[oi];
        }
        for (double& v : out) v /= mass;
    };
    const auto row_objective = [&](const std::vector<double>& probs) {
        double reward = 0.0, kl = 0.0;
        for (std::size_t oi = 0; oi < n; ++oi) {
            if (probs[oi] == 0.0) continue;
            reward += probs[oi] * signed_weight(spec, world, qi, oi);
            kl += probs[oi] * (std::log(probs[oi]) - log_anchor[oi]);
        }
        return reward - beta * kl;
    };

    to_probs(log_pi, pi);
    double objective = row_objective(pi);
    MaximizeResult best;
    best.row = pi;
    best.objective = objective;
    best.residual = kInf;

    for (int it = 1; it <= opts.max_iters; ++it) {
        double gmin = kInf, gmax = -kInf;
        for (std::size_t oi = 0; oi < n; ++oi) {
            if (log_anchor[oi] == -kInf) {
                grad[oi] = 0.0;
                continue;
            }
            grad[oi] = signed_weight(spec, world, qi, oi) -
                       beta * (log_pi[oi] - log_anchor[oi] + 1.0);
            gmin = std::min(gmin, grad[oi]);
            gmax = std::max(gmax, grad[oi]);
        }
        const double residual = gmax - gmin;
        if (residual < best.residual) {
            best.residual = residual;
            best.row = pi;
            best.objective = objective;
            best.iters = it;
        }
        // The gradient scales with beta, so the tolerance is measured on the
        // KL curvature scale; the policy displacement it certifies is
        // residual/beta either way.
        if (residual < opts.residual_tol * std::max(1.0, beta)) {
            best.converged = true;
            return best;
        }

        trial = log_pi;
        for (std::size_t oi = 0; oi < n; ++oi) {
            if (log_anchor[oi] != -kInf) trial[oi] += step * grad[oi];
        }
        const double z = log_sum_exp(std::span<const double>(trial.data(), n));
        for (double& v : trial) v -= z;
        std::vector<double> trial_pi(n);
        to_probs(trial, trial_pi);
        // The beta*KL term amplifies log rounding by beta, so the decrease
        // test must ignore fluctuations below that float noise floor.
        const double trial_objective = row_objective(trial_pi);
        const double noise = 1e-13 * std::max(1.0, std::abs(objective)) + 1e-14 * beta;
        if (trial_objective < objective - noise) {
            step *= 0.5;  // a real decrease means the step is too long
            continue;
        }
        log_pi.swap(trial);
        pi.swap(trial_pi);
        objective = trial_objective;
    }
    throw MaximizeError("maximize_numerically: residual tolerance not reached", best);
}

GroupEstimate estimate_pos(const FiniteWorld& world, const ConditionalPolicy& policy,
                           std::size_t qi, int group_size, std::uint64_t seed) {
    if (group_size < 2) throw std::invalid_argument("estimate_pos: group size must be >= 2");
    const std::vector<double>& row = policy.row(qi);
    const CounterRng rng{seed};
    int successes = 0;
    for (int i = 0; i < group_size; ++i) {
        const double u = rng.uniform(static_cast<std::uint64_t>(i));
        double acc = 0.0;
        std::size_t drawn = row.size() - 1;
        for (std::size_t oi = 0; oi < row.size(); ++oi) {
            acc += row[oi];
            if (u < acc) {
                drawn = oi;
                break;
            }
        }
        if (world.is_success(qi, drawn)) ++successes;
    }
    return GroupEstimate{group_size, static_cast<double>(successes) / group_size, seed};
}

}  // namespace grpo
