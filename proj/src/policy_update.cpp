#include "grpo/policy_update.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "grpo/math_util.hpp"

namespace grpo {

namespace {

constexpr double kPartitionCrossCheckTol = 1e-10;

// Normalizes exp(log_weights) in place via max-shift; returns log of the sum.
double normalize_from_logs(std::vector<double>& log_w) {
    double m = -kInf;
    for (double v : log_w) m = std::max(m, v);
    if (m == -kInf) {
        throw std::domain_error("normalize_from_logs: all outcomes carry zero mass");
    }
    double s = 0.0;
    for (double v : log_w) s += std::exp(v - m);
    const double log_z = m + std::log(s);
    std::vector<double>& out = log_w;
    double mass = 0.0;
    for (double& v : out) {
        v = std::exp(v - log_z);
        mass += v;
    }
    for (double& v : out) v /= mass;
    return log_z;
}

double row_success_mass(const FiniteWorld& world, const std::vector<double>& row,
                        std::size_t qi) {
    double p = 0.0;
    for (std::size_t oi = 0; oi < row.size(); ++oi) {
        if (world.is_success(qi, oi)) p += row[oi];
    }
    return std::min(p, 1.0);
}

// Log-odds straight from the class masses. Unlike logit(pos) this keeps its
// relative accuracy when one class has almost all the mass, because the small
// class is summed directly instead of recovered as 1-p.
double row_logit(const FiniteWorld& world, const std::vector<double>& row, std::size_t qi) {
    double s_mass = 0.0, f_mass = 0.0;
    for (std::size_t oi = 0; oi < row.size(); ++oi) {
        (world.is_success(qi, oi) ? s_mass : f_mass) += row[oi];
    }
    if (s_mass == 0.0) return -kInf;
    if (f_mass == 0.0) return kInf;
    return std::log(s_mass) - std::log(f_mass);
}

}  // namespace

GibbsResult gibbs_update(const FiniteWorld& world, const GibbsUpdateInputs& inputs,
                         std::size_t qi) {
    if (!(inputs.beta > 0.0)) throw std::invalid_argument("gibbs_update: beta must be positive");
    if (!(inputs.weight_plus >= 0.0 && inputs.weight_minus >= 0.0)) {
        throw std::invalid_argument("gibbs_update: weights must be nonnegative");
    }
    const std::vector<double>& anchor = inputs.anchor.row(qi);
    if (anchor.size() != world.num_outcomes(qi)) {
        throw std::domain_error("gibbs_update: anchor shape does not match world");
    }

    const double up = inputs.weight_plus / inputs.beta;
    const double down = -inputs.weight_minus / inputs.beta;
    const double p_anchor = row_success_mass(world, anchor, qi);

    std::vector<double> log_row(anchor.size());
    for (std::size_t oi = 0; oi < anchor.size(); ++oi) {
        log_row[oi] = std::log(anchor[oi]) + (world.is_success(qi, oi) ? up : down);
    }

    GibbsResult result;
    result.row = std::move(log_row);
    const double log_z_full = normalize_from_logs(result.row);

    // Closed two-term partition function, cross-checked against the
    // full-outcome summation above.
    const double log_z_closed =
        log_sum_exp(std::log(p_anchor) + up, std::log1p(-p_anchor) + down);
    if (std::abs(log_z_closed - log_z_full) >
        kPartitionCrossCheckTol * std::max(1.0, std::abs(log_z_closed))) {
        throw std::logic_error("gibbs_update: partition cross-check failed");
    }
    result.log_z = log_z_closed;
    result.z = std::exp(log_z_closed);
    return result;
}

namespace {

GibbsResult anchored_step(const FiniteWorld& world, const ConditionalPolicy& anchor,
                          double p_prev, const VariantSpec& variant, std::size_t qi) {
    GibbsUpdateInputs inputs{anchor, weight_plus(variant.scheme, p_prev),
                             weight_minus(variant.scheme, p_prev), variant.beta};
    return gibbs_update(world, inputs, qi);
}

}  // namespace

GibbsResult reference_step(const FiniteWorld& world, const ConditionalPolicy& pi_ref,
                           const ConditionalPolicy& pi_prev, const VariantSpec& variant,
                           std::size_t qi) {
    return anchored_step(world, pi_ref, success_probability(world, pi_prev, qi), variant, qi);
}

GibbsResult mirror_step(const FiniteWorld& world, const ConditionalPolicy& pi_prev,
                        const VariantSpec& variant, std::size_t qi) {
    return anchored_step(world, pi_prev, success_probability(world, pi_prev, qi), variant, qi);
}

std::vector<double> geometric_mean(const std::vector<double>& ref_row,
                                   const std::vector<double>& prev_row, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("geometric_mean: alpha must lie in (0,1)");
    }
    if (ref_row.size() != prev_row.size()) {
        throw std::domain_error("geometric_mean: rows have different outcome sets");
    }
    std::vector<double> log_row(ref_row.size());
    for (std::size_t oi = 0; oi < ref_row.size(); ++oi) {
        log_row[oi] = alpha * std::log(ref_row[oi]) + (1.0 - alpha) * std::log(prev_row[oi]);
    }
    try {
        normalize_from_logs(log_row);
    } catch (const std::domain_error&) {
        throw std::domain_error("geometric_mean: degenerate (supports are disjoint)");
    }
    return log_row;
}

namespace {

// Order-alpha Renyi divergence between two conditionals restricted to the
// outcome class selected by `in_class`; logsumexp of alpha log p + (1-alpha) log q.
double renyi_divergence_on_class(const std::vector<double>& p, const std::vector<double>& q,
                                 const std::vector<char>& in_class, double alpha) {
    std::vector<double> terms;
    terms.reserve(p.size());
    for (std::size_t oi = 0; oi < p.size(); ++oi) {
        if (!in_class[oi] || p[oi] == 0.0) continue;
        terms.push_back(alpha * std::log(p[oi]) + (1.0 - alpha) * std::log(q[oi]));
    }
    const double lse = log_sum_exp(std::span<const double>(terms.data(), terms.size()));
    // 1/(alpha-1) log sum p^alpha q^(1-alpha); clamp tiny negative rounding.
    return std::max(0.0, lse / (alpha - 1.0));
}

}  // namespace

RenyiReport renyi_correction(const FiniteWorld& world, const ConditionalPolicy& pi_ref,
                             const ConditionalPolicy& pi_prev, double alpha, std::size_t qi) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("renyi_correction: alpha must lie in (0,1)");
    }
    const SuccessSplit ref = split_success(world, pi_ref, qi);
    const SuccessSplit prev = split_success(world, pi_prev, qi);
    const auto require = [&](const std::optional<std::vector<double>>& c, const char* side) {
        if (!c.has_value()) {
            throw std::domain_error(std::string("renyi_correction: ") + side +
                                    " conditional undefined (PoS at the boundary)");
        }
    };
    require(ref.success_conditional, "reference success");
    require(ref.failure_conditional, "reference failure");
    require(prev.success_conditional, "previous success");
    require(prev.failure_conditional, "previous failure");

    std::vector<char> success(world.num_outcomes(qi)), failure(world.num_outcomes(qi));
    for (std::size_t oi = 0; oi < success.size(); ++oi) {
        success[oi] = world.is_success(qi, oi) ? 1 : 0;
        failure[oi] = success[oi] ? 0 : 1;
    }

    RenyiReport report;
    report.alpha = alpha;
    report.d_success = renyi_divergence_on_class(*ref.success_conditional,
                                                 *prev.success_conditional, success, alpha);
    report.d_failure = renyi_divergence_on_class(*ref.failure_conditional,
                                                 *prev.failure_conditional, failure, alpha);
    report.delta_r = (1.0 - alpha) * (report.d_failure - report.d_success);
    return report;
}

TwoKlResult two_kl_step(const FiniteWorld& world, const ConditionalPolicy& pi_ref,
                        const ConditionalPolicy& pi_prev, const VariantSpec& variant,
                        std::size_t qi) {
    if (variant.anchor != AnchorKind::TwoKl) {
        throw std::invalid_argument("two_kl_step: variant anchor must be two-kl");
    }
    const double p_prev = success_probability(world, pi_prev, qi);

    std::vector<std::vector<double>> anchor_rows;
    anchor_rows.reserve(world.num_prompts());
    for (std::size_t i = 0; i < world.num_prompts(); ++i) {
        if (i == qi) {
            anchor_rows.push_back(geometric_mean(pi_ref.row(i), pi_prev.row(i), variant.alpha));
        } else {
            anchor_rows.push_back(pi_ref.row(i));
        }
    }
    const ConditionalPolicy anchor(world, std::move(anchor_rows));

    TwoKlResult result;
    GibbsResult g = anchored_step(world, anchor, p_prev, variant, qi);
    result.row = std::move(g.row);
    result.z = g.z;
    result.log_z = g.log_z;
    const SuccessSplit ref_split = split_success(world, pi_ref, qi);
    const SuccessSplit prev_split = split_success(world, pi_prev, qi);
    if (ref_split.success_conditional && ref_split.failure_conditional &&
        prev_split.success_conditional && prev_split.failure_conditional) {
        result.renyi = renyi_correction(world, pi_ref, pi_prev, variant.alpha, qi);
    }
    return result;
}

EvolutionResult evolve(const FiniteWorld& world, const ConditionalPolicy& pi_ref,
                       const VariantSpec& variant, int n_steps, double tol,
                       bool keep_snapshots, const ConditionalPolicy* pi_init) {
    if (n_steps < 1) throw std::invalid_argument("evolve: n_steps must be >= 1");

    std::vector<std::vector<EvolutionStep>> per_prompt(world.num_prompts());
    std::vector<ConditionalPolicy> snapshots;
    const ConditionalPolicy& start = pi_init ? *pi_init : pi_ref;
    std::vector<std::vector<double>> rows;
    rows.reserve(world.num_prompts());
    for (std::size_t qi = 0; qi < world.num_prompts(); ++qi) rows.push_back(start.row(qi));
    ConditionalPolicy current(world, rows);
    if (keep_snapshots) snapshots.push_back(current);
    std::vector<char> frozen(world.num_prompts(), 0);

    for (int step = 1; step <= n_steps; ++step) {
        std::vector<std::vector<double>> next_rows;
        next_rows.reserve(world.num_prompts());
        bool any_active = false;
        for (std::size_t qi = 0; qi < world.num_prompts(); ++qi) {
            if (frozen[qi]) {
                next_rows.push_back(current.row(qi));
                continue;
            }
            const double p_prev = success_probability(world, current, qi);
            EvolutionStep rec;
            rec.step = step;
            rec.omega_over_beta = total_weight(variant.scheme, p_prev) / variant.beta;
            switch (variant.anchor) {
                case AnchorKind::Reference: {
                    GibbsResult g = reference_step(world, pi_ref, current, variant, qi);
                    rec.z = g.z;
                    rec.log_z = g.log_z;
                    next_rows.push_back(std::move(g.row));
                    break;
                }
                case AnchorKind::Mirror: {
                    GibbsResult g = mirror_step(world, current, variant, qi);
                    rec.z = g.z;
                    rec.log_z = g.log_z;
                    next_rows.push_back(std::move(g.row));
                    break;
                }
                case AnchorKind::TwoKl: {
                    TwoKlResult g = two_kl_step(world, pi_ref, current, variant, qi);
                    rec.z = g.z;
                    rec.log_z = g.log_z;
                    if (g.renyi.has_value()) rec.delta_r = g.renyi->delta_r;
                    next_rows.push_back(std::move(g.row));
                    break;
                }
            }
            const double p_next = row_success_mass(world, next_rows.back(), qi);
            rec.pos = p_next;
            rec.logit_pos = row_logit(world, next_rows.back(), qi);
            per_prompt[qi].push_back(rec);
            if (p_next == 0.0 || p_next == 1.0 || std::abs(p_next - p_prev) < tol) {
                frozen[qi] = 1;
            } else {
                any_active = true;
            }
        }
        current = ConditionalPolicy(world, std::move(next_rows));
        if (keep_snapshots) snapshots.push_back(current);
        if (!any_active) break;
    }
    return EvolutionResult{std::move(current), std::move(per_prompt), std::move(snapshots)};
}

ContractionCheck check_logodds_contraction(const std::vector<EvolutionStep>& prompt_steps,
                                           double logit_p_ref, double alpha,
                                           std::optional<double> logit_p_init) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("check_logodds_contraction: alpha must lie in (0,1)");
    }
    ContractionCheck check;
    check.contraction_factor = 1.0 - alpha;
    double prev_logit = logit_p_init.value_or(logit_p_ref);
    for (const EvolutionStep& s : prompt_steps) {
        ContractionCheck::StepCheck sc;
        sc.step = s.step;
        const bool boundary = !std::isfinite(prev_logit) || !std::isfinite(s.logit_pos) ||
                              !std::isfinite(logit_p_ref);
        if (boundary || !s.delta_r.has_value()) {
            sc.skipped = true;
        } else {
            const double lhs = s.logit_pos - logit_p_ref;
            const double rhs = (1.0 - alpha) * (prev_logit - logit_p_ref) + *s.delta_r +
                               s.omega_over_beta;
            sc.residual = lhs - rhs;
        }
        check.steps.push_back(sc);
        prev_logit = s.logit_pos;
    }
    return check;
}

}  // namespace grpo
