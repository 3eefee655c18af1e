// Experiment runner for the success-probability dynamics library: emits
// trajectories, fixed-point maps, policy-level evolutions and training logs
// as CSV/JSON data files, plus an end-to-end verification suite.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "grpo/dynamics.hpp"
#include "grpo/oracle.hpp"
#include "grpo/policy_update.hpp"
#include "grpo/serialize.hpp"
#include "grpo/sweep.hpp"
#include "grpo/trainer.hpp"
#include "grpo/verify.hpp"

namespace {

using grpo::format_double;
using ordered_json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitVerificationFailure = 1;
constexpr int kExitUsage = 2;

struct CommonArgs {
    std::string variant = "ref";
    std::string norm = "meanvar";
    std::vector<double> beta = {0.01, 0.05, 0.1, 0.5, 1.0, 5.0};
    std::vector<double> pref = {0.001, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9};
    double alpha = 0.5;
    double eps = 1e-5;
    int steps = 10'000;
    double tol = 1e-10;
    std::uint64_t seed = 42;
    int jobs = 0;
    std::string format = "csv";
    std::string out;
};

void add_common_flags(CLI::App* cmd, CommonArgs& args, bool with_grids) {
    cmd->add_option("--variant", args.variant, "Anchor variant")
        ->check(CLI::IsMember({"ref", "mirror", "twokl"}));
    cmd->add_option("--norm", args.norm, "Reward normalization")
        ->check(CLI::IsMember({"whitened", "meanvar", "mean"}));
    if (with_grids) {
        cmd->add_option("--beta", args.beta, "Regularization strengths (comma separated)")
            ->delimiter(',');
        cmd->add_option("--pref", args.pref, "Reference PoS grid (comma separated)")
            ->delimiter(',');
    }
    cmd->add_option("--alpha", args.alpha, "two-kl mixing weight on the reference KL");
    cmd->add_option("--eps", args.eps, "Variance smoothing epsilon");
    cmd->add_option("--steps", args.steps, "Iteration cap");
    cmd->add_option("--tol", args.tol, "Convergence tolerance");
    cmd->add_option("--seed", args.seed, "Deterministic seed");
    cmd->add_option("--jobs", args.jobs, "Worker pool size (0 = all cores)");
    cmd->add_option("--format", args.format, "Output format")
        ->check(CLI::IsMember({"csv", "json"}));
    cmd->add_option("--out", args.out, "Output path (stdout when omitted)");
}

grpo::WeightScheme scheme_from(const CommonArgs& args) {
    if (args.norm == "meanvar") return grpo::WeightScheme::mean_var(args.eps);
    if (args.norm == "mean") return grpo::WeightScheme::mean_only();
    return grpo::WeightScheme::whitened();
}

grpo::VariantSpec variant_from(const CommonArgs& args, double beta) {
    const grpo::WeightScheme scheme = scheme_from(args);
    if (args.variant == "ref") return grpo::VariantSpec::reference(scheme, beta);
    if (args.variant == "mirror") return grpo::VariantSpec::mirror(scheme, beta);
    return grpo::VariantSpec::two_kl(scheme, beta, args.alpha);
}

void validate_grids(const CommonArgs& args) {
    if (args.beta.empty()) throw std::invalid_argument("beta grid is empty");
    if (args.pref.empty()) throw std::invalid_argument("pref grid is empty");
    for (double b : args.beta) {
        if (!(b > 0.0)) throw std::invalid_argument("beta grid entries must be positive");
    }
    for (double p : args.pref) {
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("pref entries must lie in [0,1]");
    }
    if (args.steps < 1) throw std::invalid_argument("steps must be >= 1");
}

void emit(const CommonArgs& args, const std::string& text) {
    if (args.out.empty()) {
        std::cout << text;
    } else {
        grpo::write_file_atomic(args.out, text);
    }
}

// ---- trajectory ----------------------------------------------------------

int cmd_trajectory(const CommonArgs& args) {
    validate_grids(args);
    struct Cell {
        double beta, p_ref;
        grpo::SuccessTrajectory traj;
    };
    const std::size_t n_cells = args.beta.size() * args.pref.size();
    const auto cells = grpo::parallel_map(n_cells, args.jobs, [&](std::size_t i) {
        const double beta = args.beta[i / args.pref.size()];
        const double p_ref = args.pref[i % args.pref.size()];
        grpo::IterateOptions opts;
        opts.max_steps = args.steps;
        opts.tol = args.tol;
        return Cell{beta, p_ref, grpo::iterate(variant_from(args, beta), p_ref, opts)};
    });

    std::ostringstream out;
    if (args.format == "csv") {
        out << "variant,norm,beta,p_ref,epsilon,step,p,logit_increment,terminated_by,oscillating\n";
        for (const Cell& c : cells) {
            for (std::size_t k = 0; k < c.traj.values.size(); ++k) {
                out << args.variant << ',' << args.norm << ',' << format_double(c.beta) << ','
                    << format_double(c.p_ref) << ',' << format_double(args.eps) << ',' << k << ','
                    << format_double(c.traj.values[k]) << ','
                    << format_double(k == 0 ? 0.0 : c.traj.logit_increments[k - 1]) << ','
                    << grpo::termination_name(c.traj.terminated_by) << ','
                    << (c.traj.oscillating ? 1 : 0) << '\n';
            }
        }
    } else {
        ordered_json j = ordered_json::array();
        for (const Cell& c : cells) {
            ordered_json cj;
            cj["variant"] = args.variant;
            cj["norm"] = args.norm;
            cj["beta"] = c.beta;
            cj["p_ref"] = c.p_ref;
            cj["epsilon"] = args.eps;
            cj["values"] = c.traj.values;
            cj["logit_increments"] = c.traj.logit_increments;
            cj["terminated_by"] = grpo::termination_name(c.traj.terminated_by);
            cj["oscillating"] = c.traj.oscillating;
            j.push_back(std::move(cj));
        }
        out << j.dump(2) << "\n";
    }
    emit(args, out.str());
    return kExitOk;
}

// ---- fixed-points --------------------------------------------------------

int cmd_fixed_points(const CommonArgs& args) {
    validate_grids(args);
    if (args.variant != "ref") {
        throw std::invalid_argument("fixed-points scans the reference-anchored map (--variant ref)");
    }
    const auto cells =
        grpo::stability_map(scheme_from(args), args.beta, args.pref, 512, args.jobs);

    std::ostringstream out;
    if (args.format == "csv") {
        out << "variant,norm,beta,p_ref,epsilon,p_star,h_prime,stable,beta_threshold,amplifies,"
               "grazing\n";
        for (const auto& cell : cells) {
            for (const auto& fp : cell.report.points) {
                out << args.variant << ',' << args.norm << ',' << format_double(cell.beta) << ','
                    << format_double(cell.p_ref) << ',' << format_double(args.eps) << ','
                    << format_double(fp.p_star) << ',' << format_double(fp.derivative) << ','
                    << (fp.locally_stable ? 1 : 0) << ',' << format_double(fp.beta_threshold)
                    << ',' << (fp.amplifies ? 1 : 0) << ',' << (fp.grazing ? 1 : 0) << '\n';
            }
        }
    } else {
        ordered_json j = ordered_json::array();
        for (const auto& cell : cells) {
            for (const auto& fp : cell.report.points) {
                ordered_json fj;
                fj["variant"] = args.variant;
                fj["norm"] = args.norm;
                fj["beta"] = cell.beta;
                fj["p_ref"] = cell.p_ref;
                fj["epsilon"] = args.eps;
                fj["p_star"] = fp.p_star;
                fj["h_prime"] = fp.derivative;
                fj["stable"] = fp.locally_stable;
                fj["beta_threshold"] = fp.beta_threshold;
                fj["amplifies"] = fp.amplifies;
                fj["grazing"] = fp.grazing;
                j.push_back(std::move(fj));
            }
        }
        out << j.dump(2) << "\n";
    }
    emit(args, out.str());
    return kExitOk;
}

// ---- policy-evolve -------------------------------------------------------

int cmd_policy_evolve(const CommonArgs& args, const std::string& world_path,
                      const std::string& policy_path, const std::string& init_path,
                      bool check) {
    if (args.beta.size() != 1) {
        throw std::invalid_argument("policy-evolve needs exactly one --beta value");
    }
    const grpo::FiniteWorld world = grpo::load_world(world_path);
    const grpo::ConditionalPolicy pi_ref = policy_path.empty()
                                               ? grpo::ConditionalPolicy::uniform(world)
                                               : grpo::load_policy(world, policy_path);
    std::optional<grpo::ConditionalPolicy> pi_init;
    if (!init_path.empty()) pi_init = grpo::load_policy(world, init_path);
    const grpo::VariantSpec variant = variant_from(args, args.beta.front());
    const grpo::EvolutionResult evo =
        grpo::evolve(world, pi_ref, variant, args.steps, args.tol, check,
                     pi_init ? &*pi_init : nullptr);

    int check_failures = 0;
    if (check) {
        for (std::size_t qi = 0; qi < world.num_prompts(); ++qi) {
            const double p_ref_q = grpo::success_probability(world, pi_ref, qi);
            for (const grpo::EvolutionStep& rec : evo.per_prompt[qi]) {
                const grpo::ConditionalPolicy& before = evo.snapshots[rec.step - 1];
                const double p_prev = grpo::success_probability(world, before, qi);
                std::optional<double> delta_r;
                if (variant.anchor == grpo::AnchorKind::TwoKl) {
                    if (!rec.delta_r.has_value()) continue;  // degenerate side, no scalar form
                    delta_r = rec.delta_r;
                }
                const double expected = grpo::success_map(variant, p_ref_q, p_prev, delta_r);
                if (std::abs(expected - rec.pos) > 1e-10) {
                    ++check_failures;
                    std::cerr << "check: scalar recurrence residual "
                              << std::abs(expected - rec.pos) << " at step " << rec.step
                              << " prompt " << world.prompt(qi).id << "\n";
                }
                const grpo::ObjectiveSpec spec =
                    grpo::ObjectiveSpec::make(world, variant, pi_ref, before);
                const grpo::MaximizeResult numeric = grpo::maximize_numerically(world, spec, qi);
                const grpo::ConditionalPolicy& after = evo.snapshots[rec.step];
                grpo::ConditionalPolicy numeric_policy(
                    world, [&] {
                        std::vector<std::vector<double>> rows;
                        for (std::size_t i = 0; i < world.num_prompts(); ++i) {
                            rows.push_back(i == qi ? numeric.row : after.row(i));
                        }
                        return rows;
                    }());
                const double closed_objective = grpo::objective_value(world, spec, after, qi);
                const double tv = grpo::total_variation(world, after, numeric_policy, qi);
                if (closed_objective < numeric.objective - 1e-9 || tv > 1e-7) {
                    ++check_failures;
                    std::cerr << "check: maximizer disagreement at step " << rec.step
                              << " prompt " << world.prompt(qi).id << " (tv " << tv << ")\n";
                }
            }
        }
    }

    std::ostringstream out;
    for (std::size_t qi = 0; qi < world.num_prompts(); ++qi) {
        for (const grpo::EvolutionStep& rec : evo.per_prompt[qi]) {
            ordered_json j;
            j["step"] = rec.step;
            j["prompt"] = world.prompt(qi).id;
            j["pos"] = rec.pos;
            j["logit"] = std::isfinite(rec.logit_pos)
                             ? ordered_json(rec.logit_pos)
                             : ordered_json(rec.logit_pos > 0 ? "inf" : "-inf");
            j["delta_r"] = rec.delta_r.has_value() ? ordered_json(*rec.delta_r)
                                                   : ordered_json(nullptr);
            j["z"] = rec.z;
            out << j.dump() << "\n";
        }
    }
    emit(args, out.str());
    return check_failures == 0 ? kExitOk : kExitVerificationFailure;
}

// ---- train ----------------------------------------------------------------

int cmd_train(const CommonArgs& args, const std::string& world_path,
              const std::string& policy_path, const std::string& out_policy_path, int outer,
              int inner, int group, double lr, bool exact_pos) {
    if (args.beta.size() != 1) {
        throw std::invalid_argument("train needs exactly one --beta value");
    }
    const grpo::FiniteWorld world = grpo::load_world(world_path);
    const grpo::ConditionalPolicy pi_ref = policy_path.empty()
                                               ? grpo::ConditionalPolicy::uniform(world)
                                               : grpo::load_policy(world, policy_path);
    grpo::TrainConfig config;
    config.variant = variant_from(args, args.beta.front());
    config.outer_iters = outer;
    config.inner_steps = inner;
    config.group_size = group;
    config.learning_rate = lr;
    config.seed = args.seed;
    config.use_exact_pos = exact_pos;

    const grpo::TrainResult result = grpo::train(world, pi_ref, config);

    // Fixed point per prompt from a long exact policy-level run.
    const grpo::EvolutionResult limit =
        grpo::evolve(world, pi_ref, config.variant, 20'000, 1e-13);
    std::vector<double> p_star(world.num_prompts());
    for (std::size_t qi = 0; qi < world.num_prompts(); ++qi) {
        p_star[qi] = grpo::success_probability(world, limit.final_policy, qi);
    }
    const grpo::BoundCheck bound = grpo::drift_bound_check(result.drift, p_star);

    std::ostringstream out;
    for (std::size_t qi = 0; qi < world.num_prompts(); ++qi) {
        const auto& steps = result.drift.per_prompt[qi];
        for (std::size_t n = 0; n < steps.size(); ++n) {
            ordered_json j;
            j["iter"] = n + 1;
            j["prompt"] = world.prompt(qi).id;
            j["pos_exact"] = steps[n].pos_exact;
            j["pos_param"] = steps[n].pos_param;
            j["tv"] = steps[n].tv;
            j["delta"] = steps[n].delta;
            j["objective"] = steps[n].objective;
            out << j.dump() << "\n";
        }
    }
    emit(args, out.str());
    if (!out_policy_path.empty()) {
        grpo::write_file_atomic(out_policy_path,
                                grpo::policy_to_json(world, result.final_policy));
    }
    if (!bound.ok) {
        for (const std::string& v : bound.violations) std::cerr << "drift bound: " << v << "\n";
        return kExitVerificationFailure;
    }
    return kExitOk;
}

// ---- verify ----------------------------------------------------------------

int cmd_verify(const CommonArgs& args, int worlds) {
    grpo::VerifyOptions opts;
    opts.seed = args.seed;
    opts.worlds = worlds;
    opts.jobs = args.jobs;
    const std::vector<grpo::SuiteResult> results = grpo::run_verify_suites(opts);
    const std::string table = grpo::verify_table(results);
    emit(args, table);
    if (!args.out.empty()) std::cout << table;
    for (const grpo::SuiteResult& r : results) {
        if (!r.pass) return kExitVerificationFailure;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"success-probability dynamics for KL-regularized policy iteration"};
    app.require_subcommand(1);

    CommonArgs targs, fargs, pargs, trargs, vargs;
    std::string world_path, policy_path, init_path, out_policy_path;
    bool check = false;
    int outer = 20, inner = 200, group = 16, verify_worlds = 50;
    double lr = 0.0;
    bool exact_pos = true;

    CLI::App* trajectory = app.add_subcommand("trajectory", "Iterate the scalar PoS map over a grid");
    add_common_flags(trajectory, targs, true);

    CLI::App* fixed_points =
        app.add_subcommand("fixed-points", "Locate and classify fixed points over a grid");
    add_common_flags(fixed_points, fargs, true);

    CLI::App* policy_evolve =
        app.add_subcommand("policy-evolve", "Iterate the closed-form policy updates on a world");
    add_common_flags(policy_evolve, pargs, true);
    policy_evolve->add_option("--world", world_path, "World JSON file")->required();
    policy_evolve->add_option("--ref-policy", policy_path,
                              "Reference policy JSON (uniform when omitted)");
    policy_evolve->add_option("--init-policy", init_path,
                              "Starting policy JSON (the reference when omitted)");
    policy_evolve->add_flag("--check", check,
                            "Cross-verify each step against the scalar recurrence and the "
                            "numerical maximizer");

    CLI::App* train_cmd = app.add_subcommand("train", "Run the parametric training loop");
    add_common_flags(train_cmd, trargs, true);
    train_cmd->add_option("--world", world_path, "World JSON file")->required();
    train_cmd->add_option("--ref-policy", policy_path,
                          "Reference policy JSON (uniform when omitted)");
    train_cmd->add_option("--outer-iters", outer, "Outer iterations M");
    train_cmd->add_option("--inner-steps", inner, "Gradient steps per outer iteration");
    train_cmd->add_option("--group-size", group, "Monte-Carlo group size G");
    train_cmd->add_option("--lr", lr, "Learning rate (0 = auto)");
    train_cmd->add_option("--exact-pos", exact_pos,
                          "Use exact PoS instead of the group estimate");
    train_cmd->add_option("--out-policy", out_policy_path,
                          "Write the final trained policy as JSON");

    CLI::App* verify = app.add_subcommand("verify", "Run the oracle verification suites");
    add_common_flags(verify, vargs, false);
    verify->add_option("--worlds", verify_worlds, "Random worlds per randomized suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (trajectory->parsed()) return cmd_trajectory(targs);
        if (fixed_points->parsed()) return cmd_fixed_points(fargs);
        if (policy_evolve->parsed())
            return cmd_policy_evolve(pargs, world_path, policy_path, init_path, check);
        if (train_cmd->parsed())
            return cmd_train(trargs, world_path, policy_path, out_policy_path, outer, inner,
                             group, lr, exact_pos);
        if (verify->parsed()) return cmd_verify(vargs, verify_worlds);
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::domain_error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
