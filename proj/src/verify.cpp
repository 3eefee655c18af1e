#include "grpo/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "grpo/dynamics.hpp"
#include "grpo/oracle.hpp"
#include "grpo/policy_update.hpp"
#include "grpo/rng.hpp"
#include "grpo/sweep.hpp"
#include "grpo/trainer.hpp"

namespace grpo {

FiniteWorld random_world(std::uint64_t seed, std::size_t num_prompts,
                         std::size_t min_outcomes, std::size_t max_outcomes) {
    RngStream rng(substream(seed, 0xF1));
    std::vector<PromptSpec> prompts(num_prompts);
    std::vector<double> raw_weights(num_prompts);
    double weight_sum = 0.0;
    for (std::size_t qi = 0; qi < num_prompts; ++qi) {
        raw_weights[qi] = -std::log(1.0 - rng.uniform());
        weight_sum += raw_weights[qi];
    }
    for (std::size_t qi = 0; qi < num_prompts; ++qi) {
        PromptSpec& p = prompts[qi];
        p.id = "q" + std::to_string(qi);
        p.weight = raw_weights[qi] / weight_sum;
        const std::size_t n = min_outcomes + rng.uniform_int(0, max_outcomes - min_outcomes);
        p.outcomes.resize(n);
        p.rewards.resize(n);
        for (std::size_t oi = 0; oi < n; ++oi) {
            p.outcomes[oi] = "o" + std::to_string(oi);
            p.rewards[oi] = rng.uniform() < 0.5 ? 1 : 0;
        }
        p.rewards[0] = 1;  // keep both classes nonempty
        p.rewards[1] = 0;
    }
    // Exact unit mass regardless of rounding.
    double acc = 0.0;
    for (std::size_t qi = 0; qi + 1 < num_prompts; ++qi) acc += prompts[qi].weight;
    prompts[num_prompts - 1].weight = 1.0 - acc;
    return FiniteWorld(std::move(prompts));
}

ConditionalPolicy random_policy(const FiniteWorld& world, std::uint64_t seed, double floor) {
    RngStream rng(substream(seed, 0xF2));
    std::vector<std::vector<double>> rows(world.num_prompts());
    for (std::size_t qi = 0; qi < world.num_prompts(); ++qi) {
        std::vector<double>& row = rows[qi];
        row.resize(world.num_outcomes(qi));
        double mass = 0.0;
        for (double& v : row) {
            v = floor - std::log(1.0 - rng.uniform());
            mass += v;
        }
        for (double& v : row) v /= mass;
    }
    return ConditionalPolicy(world, std::move(rows));
}

namespace {

struct Failure {
    bool failed = false;
    std::string detail;
};

Failure merge(const std::vector<Failure>& fs) {
    for (const Failure& f : fs) {
        if (f.failed) return f;
    }
    return {};
}

// Cycles anchor kinds and schemes deterministically over fixture indices.
VariantSpec cycle_variant(std::uint64_t seed, int index) {
    RngStream rng(substream(seed, 0xA7, static_cast<std::uint64_t>(index)));
    const double beta = 0.05 * std::pow(100.0, rng.uniform());  // log-uniform [0.05, 5]
    const WeightScheme scheme =
        index % 2 == 0 ? WeightScheme::mean_var() : WeightScheme::mean_only();
    switch (index % 3) {
        case 0: return VariantSpec::reference(scheme, beta);
        case 1: return VariantSpec::mirror(scheme, beta);
        default: return VariantSpec::two_kl(scheme, beta, 0.1 + 0.8 * rng.uniform());
    }
}

Failure check_oracle_world(std::uint64_t seed, int index) {
    const FiniteWorld world = random_world(substream(seed, 1, index), 1, 2, 8);
    const ConditionalPolicy pi_ref = random_policy(world, substream(seed, 2, index));
    const ConditionalPolicy pi_prev = random_policy(world, substream(seed, 3, index));
    const VariantSpec variant = cycle_variant(seed, index);
    const ObjectiveSpec spec = ObjectiveSpec::make(world, variant, pi_ref, pi_prev);

    std::vector<double> closed_row;
    switch (variant.anchor) {
        case AnchorKind::Reference:
            closed_row = reference_step(world, pi_ref, pi_prev, variant, 0).row;
            break;
        case AnchorKind::Mirror:
            closed_row = mirror_step(world, pi_prev, variant, 0).row;
            break;
        case AnchorKind::TwoKl:
            closed_row = two_kl_step(world, pi_ref, pi_prev, variant, 0).row;
            break;
    }
    ConditionalPolicy closed(world, {closed_row});

    MaximizeResult numeric;
    try {
        numeric = maximize_numerically(world, spec, 0);
    } catch (const MaximizeError& e) {
        return {true, "maximizer did not converge (residual " +
                          std::to_string(e.best().residual) + ") on world " +
                          std::to_string(index)};
    }
    const double closed_objective = objective_value(world, spec, closed, 0);
    if (!(closed_objective >= numeric.objective - 1e-9)) {
        return {true, "closed form trails the numeric maximizer by " +
                          std::to_string(numeric.objective - closed_objective) + " on world " +
                          std::to_string(index)};
    }
    ConditionalPolicy numeric_policy(world, {numeric.row});
    const double tv = total_variation(world, closed, numeric_policy, 0);
    if (!(tv <= 1e-7)) {
        return {true, "closed/numeric TV " + std::to_string(tv) + " on world " +
                          std::to_string(index)};
    }
    return {};
}

SuiteResult oracle_equivalence_suite(const VerifyOptions& opts) {
    const auto failures = parallel_map(static_cast<std::size_t>(opts.worlds), opts.jobs,
                                       [&](std::size_t i) {
                                           return check_oracle_world(opts.seed,
                                                                     static_cast<int>(i));
                                       });
    const Failure f = merge(failures);
    return {"oracle-equivalence",
            !f.failed,
            f.failed ? f.detail
                     : std::to_string(opts.worlds) + " worlds, objective gap <= 1e-9, TV <= 1e-7"};
}

SuiteResult amplification_suite(const VerifyOptions& opts) {
    const std::vector<double> betas = {0.01, 0.05, 0.1, 0.5, 1.0, 5.0};
    const std::vector<double> prefs = {0.001, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99};
    const auto cells = stability_map(WeightScheme::mean_var(), betas, prefs, 512, opts.jobs);
    int points = 0;
    for (const StabilityCell& cell : cells) {
        for (const FixedPoint& fp : cell.report.points) {
            ++points;
            if (!(fp.p_star > cell.p_ref)) {
                return {"amplification", false,
                        "p*=" + std::to_string(fp.p_star) + " <= p_ref=" +
                            std::to_string(cell.p_ref) + " at beta=" + std::to_string(cell.beta)};
            }
        }
    }
    return {"amplification", true,
            std::to_string(points) + " fixed points, all strictly above p_ref"};
}

SuiteResult mirror_monotonicity_suite(const VerifyOptions&) {
    const std::vector<double> prefs = {0.001, 0.01, 0.1, 0.5, 0.9};
    const std::vector<double> betas = {0.1, 1.0, 5.0};
    for (double beta : betas) {
        for (double p_ref : prefs) {
            const VariantSpec v = VariantSpec::mirror(WeightScheme::mean_var(), beta);
            const SuccessTrajectory traj = iterate(v, p_ref);
            for (std::size_t i = 1; i < traj.values.size(); ++i) {
                if (!(traj.values[i] > traj.values[i - 1])) {
                    return {"mirror-monotonicity", false,
                            "not strictly increasing at beta=" + std::to_string(beta) +
                                " p_ref=" + std::to_string(p_ref)};
                }
            }
            if (!(traj.values.back() >= 1.0 - 1e-6)) {
                return {"mirror-monotonicity", false,
                        "did not approach 1 at beta=" + std::to_string(beta) +
                            " p_ref=" + std::to_string(p_ref)};
            }
        }
        const SuccessTrajectory zero =
            iterate(VariantSpec::mirror(WeightScheme::mean_var(), beta), 0.0);
        for (double v : zero.values) {
            if (v != 0.0) {
                return {"mirror-monotonicity", false, "p_ref=0 moved away from 0"};
            }
        }
    }
    return {"mirror-monotonicity", true,
            "strictly increasing to 1-1e-6; p_ref=0 absorbed"};
}

SuiteResult renyi_suite(const VerifyOptions& opts) {
    for (int i = 0; i < std::max(10, opts.worlds / 2); ++i) {
        const FiniteWorld world = random_world(substream(opts.seed, 10, i), 1, 3, 8);
        const ConditionalPolicy a = random_policy(world, substream(opts.seed, 11, i));
        const ConditionalPolicy b = random_policy(world, substream(opts.seed, 12, i));
        RngStream rng(substream(opts.seed, 13, i));
        const double alpha = 0.1 + 0.8 * rng.uniform();

        // Brute-force power sums straight from the definition.
        const RenyiReport rep = renyi_correction(world, a, b, alpha, 0);
        const SuccessSplit sa = split_success(world, a, 0);
        const SuccessSplit sb = split_success(world, b, 0);
        double power_s = 0.0, power_f = 0.0;
        for (std::size_t oi = 0; oi < world.num_outcomes(0); ++oi) {
            if (world.is_success(0, oi)) {
                power_s += std::pow((*sa.success_conditional)[oi], alpha) *
                           std::pow((*sb.success_conditional)[oi], 1.0 - alpha);
            } else {
                power_f += std::pow((*sa.failure_conditional)[oi], alpha) *
                           std::pow((*sb.failure_conditional)[oi], 1.0 - alpha);
            }
        }
        const double d_s = std::log(power_s) / (alpha - 1.0);
        const double d_f = std::log(power_f) / (alpha - 1.0);
        if (std::abs(d_s - rep.d_success) > 1e-12 || std::abs(d_f - rep.d_failure) > 1e-12) {
            return {"renyi", false, "divergence disagrees with power-sum enumeration"};
        }
        if (rep.d_success < 0.0 || rep.d_failure < 0.0) {
            return {"renyi", false, "negative Renyi divergence"};
        }

        const RenyiReport same = renyi_correction(world, a, a, alpha, 0);
        if (std::abs(same.delta_r) > 1e-12) {
            return {"renyi", false, "delta_r nonzero for identical policies"};
        }

        // Alpha limits collapse to the single-anchor updates.
        const double beta = 0.5 + rng.uniform();
        const VariantSpec near_ref =
            VariantSpec::two_kl(WeightScheme::mean_var(), beta, 1.0 - 1e-12);
        const VariantSpec near_mirror =
            VariantSpec::two_kl(WeightScheme::mean_var(), beta, 1e-12);
        const VariantSpec ref_v = VariantSpec::reference(WeightScheme::mean_var(), beta);
        const VariantSpec mirror_v = VariantSpec::mirror(WeightScheme::mean_var(), beta);
        ConditionalPolicy ref_out(world, {reference_step(world, a, b, ref_v, 0).row});
        ConditionalPolicy mirror_out(world, {mirror_step(world, b, mirror_v, 0).row});
        ConditionalPolicy tk_ref(world, {two_kl_step(world, a, b, near_ref, 0).row});
        ConditionalPolicy tk_mirror(world, {two_kl_step(world, a, b, near_mirror, 0).row});
        if (total_variation(world, ref_out, tk_ref, 0) > 1e-8 ||
            total_variation(world, mirror_out, tk_mirror, 0) > 1e-8) {
            return {"renyi", false, "two-kl alpha limit does not collapse to single anchor"};
        }

        // Affine log-odds identity along a two-kl evolution seeded away from
        // the reference so the renyi correction is live.
        const VariantSpec tk = VariantSpec::two_kl(WeightScheme::mean_var(), beta, alpha);
        const EvolutionResult evo = evolve(world, a, tk, 10, 0.0, false, &b);
        const ContractionCheck cc =
            check_logodds_contraction(evo.per_prompt[0], logit(success_probability(world, a, 0)),
                                      alpha, logit(success_probability(world, b, 0)));
        if (!cc.all_ok(1e-10)) {
            return {"renyi", false, "affine log-odds identity residual above 1e-10"};
        }
    }
    return {"renyi", true, "power sums, identity, alpha limits, contraction all hold"};
}

SuiteResult drift_suite(const VerifyOptions& opts) {
    const FiniteWorld world = random_world(substream(opts.seed, 20), 2, 3, 6);
    const ConditionalPolicy pi_ref = random_policy(world, substream(opts.seed, 21), 0.5);
    TrainConfig config;
    config.variant = VariantSpec::reference(WeightScheme::mean_var(), 5.0);
    config.outer_iters = 12;
    config.inner_steps = 200;
    config.learning_rate = 0.3;
    config.use_exact_pos = true;
    config.seed = opts.seed;
    const TrainResult result = train(world, pi_ref, config);

    std::vector<double> p_star(world.num_prompts());
    for (std::size_t qi = 0; qi < world.num_prompts(); ++qi) {
        const SuccessTrajectory traj =
            iterate(config.variant, success_probability(world, pi_ref, qi));
        p_star[qi] = traj.values.back();
    }
    const BoundCheck check = drift_bound_check(result.drift, p_star);
    if (!check.ok) {
        return {"drift", false, check.violations.front()};
    }
    for (std::size_t qi = 0; qi < world.num_prompts(); ++qi) {
        for (const DriftStep& s : result.drift.per_prompt[qi]) {
            if (std::abs(s.pos_param - s.pos_exact) > 1e-3) {
                return {"drift", false, "trained PoS strays beyond 1e-3 from the exact chain"};
            }
        }
    }
    return {"drift", true, "TV bounds hold; trained PoS within 1e-3 of the exact chain"};
}

}  // namespace

std::vector<SuiteResult> run_verify_suites(const VerifyOptions& opts) {
    std::vector<SuiteResult> results;
    results.push_back(oracle_equivalence_suite(opts));
    results.push_back(amplification_suite(opts));
    results.push_back(mirror_monotonicity_suite(opts));
    results.push_back(renyi_suite(opts));
    results.push_back(drift_suite(opts));
    return results;
}

std::string verify_table(const std::vector<SuiteResult>& results) {
    std::ostringstream out;
    bool all = true;
    for (const SuiteResult& r : results) {
        out << (r.pass ? "pass" : "FAIL") << "  " << r.name;
        for (std::size_t i = r.name.size(); i < 24; ++i) out << ' ';
        out << r.detail << "\n";
        all = all && r.pass;
    }
    out << (all ? "all suites passed" : "SUITE FAILURES PRESENT") << "\n";
    return out.str();
}

}  // namespace grpo
