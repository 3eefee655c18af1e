#include "grpo/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "grpo/math_util.hpp"
#include "grpo/sweep.hpp"

namespace grpo {

namespace {

constexpr double kFixedPointResidualTol = 1e-10;
constexpr double kDedupeTol = 1e-9;

void validate_iterated_scheme(const WeightScheme& scheme) {
    if (scheme.kind == Normalization::Whitened) {
        throw std::invalid_argument(
            "VariantSpec: whitened weights are diagnostic only; iterated dynamics need "
            "mean_var or mean_only");
    }
}

double require_probability(double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::domain_error(std::string(what) + " outside [0,1]");
    }
    return p;
}

}  // namespace

VariantSpec VariantSpec::reference(const WeightScheme& scheme, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("VariantSpec: beta must be positive");
    validate_iterated_scheme(scheme);
    return {AnchorKind::Reference, scheme, beta, 1.0};
}

VariantSpec VariantSpec::mirror(const WeightScheme& scheme, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("VariantSpec: beta must be positive");
    validate_iterated_scheme(scheme);
    return {AnchorKind::Mirror, scheme, beta, 0.0};
}

VariantSpec VariantSpec::two_kl(const WeightScheme& scheme, double beta, double alpha) {
    if (!(beta > 0.0)) throw std::invalid_argument("VariantSpec: beta must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("VariantSpec: alpha must lie in [0,1]");
    }
    validate_iterated_scheme(scheme);
    if (alpha == 1.0) return reference(scheme, beta);
    if (alpha == 0.0) return mirror(scheme, beta);
    return {AnchorKind::TwoKl, scheme, beta, alpha};
}

const char* VariantSpec::anchor_name() const {
    switch (anchor) {
        case AnchorKind::Reference: return "ref";
        case AnchorKind::Mirror: return "mirror";
        case AnchorKind::TwoKl: return "twokl";
    }
    return "?";
}

const char* termination_name(Termination t) {
    switch (t) {
        case Termination::MaxIters: return "max-iters";
        case Termination::Converged: return "converged";
        case Termination::AbsorbedAtBoundary: return "absorbed-at-boundary";
    }
    return "?";
}

namespace {

// Anchor log-odds on the extended line. A -inf/+inf clash (one probability at
// 0 and the other at 1 under TwoKl) has no well-defined mix.
double anchor_logit(const VariantSpec& v, double logit_ref, double logit_prev) {
    switch (v.anchor) {
        case AnchorKind::Reference: return logit_ref;
        case AnchorKind::Mirror: return logit_prev;
        case AnchorKind::TwoKl: {
            const double mixed = v.alpha * logit_ref + (1.0 - v.alpha) * logit_prev;
            if (std::isnan(mixed)) {
                throw std::domain_error(
                    "success_map: two-kl anchor degenerate (p_ref and p_prev at opposite "
                    "boundaries)");
            }
            return mixed;
        }
    }
    throw std::logic_error("anchor_logit: unreachable");
}

}  // namespace

double success_map(const VariantSpec& variant, double p_ref, double p_prev,
                   std::optional<double> renyi_correction) {
    require_probability(p_ref, "success_map: p_ref");
    require_probability(p_prev, "success_map: p_prev");
    if (variant.anchor == AnchorKind::TwoKl && !renyi_correction.has_value()) {
        throw std::invalid_argument("success_map: two-kl requires a renyi correction");
    }
    if (variant.anchor != AnchorKind::TwoKl && renyi_correction.has_value()) {
        throw std::invalid_argument("success_map: renyi correction only applies to two-kl");
    }
    const double base = anchor_logit(variant, logit(p_ref), logit(p_prev));
    const double increment = renyi_correction.value_or(0.0) +
                             total_weight(variant.scheme, p_prev) / variant.beta;
    return sigmoid(base + increment);
}

SuccessTrajectory iterate(const VariantSpec& variant, double p_ref, IterateOptions opts) {
    require_probability(p_ref, "iterate: p_ref");
    if (opts.max_steps < 1) throw std::invalid_argument("iterate: max_steps must be >= 1");

    SuccessTrajectory traj;
    traj.conditionals_matched = (variant.anchor == AnchorKind::TwoKl);
    traj.values.push_back(p_ref);
    traj.logits.push_back(logit(p_ref));
    traj.terminated_by = Termination::MaxIters;

    const double logit_ref = traj.logits.front();
    for (int n = 1; n <= opts.max_steps; ++n) {
        const double p_prev = traj.values.back();
        const double l_prev = traj.logits.back();
        if (p_prev == 0.0 || p_prev == 1.0) {
            traj.terminated_by = Termination::AbsorbedAtBoundary;
            break;
        }
        const double increment = total_weight(variant.scheme, p_prev) / variant.beta;
        const double l_next = anchor_logit(variant, logit_ref, l_prev) + increment;
        const double p_next = sigmoid(l_next);
        traj.values.push_back(p_next);
        traj.logits.push_back(l_next);
        traj.logit_increments.push_back(increment);
        if (p_next == 0.0 || p_next == 1.0) {
            traj.terminated_by = Termination::AbsorbedAtBoundary;
            break;
        }
        if (std::abs(p_next - p_prev) < opts.tol) {
            traj.terminated_by = Termination::Converged;
            break;
        }
        const std::size_t k = traj.values.size() - 1;
        if (k >= 2 && std::abs(traj.values[k] - traj.values[k - 2]) < opts.tol) {
            traj.oscillating = true;
        }
    }
    return traj;
}

double map_derivative(double p_ref, double p, double beta, double epsilon) {
    require_probability(p_ref, "map_derivative: p_ref");
    require_probability(p, "map_derivative: p");
    const VariantSpec v = VariantSpec::reference(WeightScheme::mean_var(epsilon), beta);
    const double h = success_map(v, p_ref, p);
    const double var = p * (1.0 - p) + epsilon;
    return -h * (1.0 - h) * (1.0 - 2.0 * p) / (2.0 * beta * std::pow(var, 1.5));
}

namespace {

double beta_threshold_at(double p, double epsilon, Normalization kind) {
    if (kind == Normalization::MeanOnly) return 0.0;
    const double var = p * (1.0 - p) + epsilon;
    return p * (1.0 - p) * std::abs(2.0 * p - 1.0) / (2.0 * std::pow(var, 1.5));
}

FixedPoint annotate(const VariantSpec& variant, double p_ref, double p_star, bool grazing) {
    FixedPoint fp;
    fp.p_star = p_star;
    fp.derivative = variant.scheme.kind == Normalization::MeanOnly
                        ? 0.0
                        : map_derivative(p_ref, p_star, variant.beta, variant.scheme.epsilon);
    fp.locally_stable = std::abs(fp.derivative) < 1.0;
    fp.beta_threshold = beta_threshold_at(p_star, variant.scheme.epsilon, variant.scheme.kind);
    fp.amplifies = p_star > p_ref;
    fp.grazing = grazing;
    return fp;
}

}  // namespace

FixedPointReport find_fixed_points(const VariantSpec& variant, double p_ref, int grid_size) {
    if (variant.anchor != AnchorKind::Reference) {
        throw std::invalid_argument("find_fixed_points: only the reference-anchored map is scanned");
    }
    if (grid_size < 64) throw std::invalid_argument("find_fixed_points: grid_size must be >= 64");
    require_probability(p_ref, "find_fixed_points: p_ref");

    FixedPointReport report;
    report.p_ref = p_ref;
    report.beta = variant.beta;
    report.epsilon = variant.scheme.kind == Normalization::MeanVar ? variant.scheme.epsilon : 0.0;

    const auto h = [&](double p) { return success_map(variant, p_ref, p); };
    const auto g = [&](double p) { return h(p) - p; };

    std::vector<double> roots;
    std::vector<bool> root_grazing;
    const auto add_root = [&](double p, bool grazing) {
        for (std::size_t i = 0; i < roots.size(); ++i) {
            if (std::abs(roots[i] - p) <= kDedupeTol) {
                if (!grazing) root_grazing[i] = false;  // a transversal find wins
                return;
            }
        }
        roots.push_back(p);
        root_grazing.push_back(grazing);
    };

    if (variant.scheme.kind == Normalization::MeanOnly) {
        // Constant map: the unique fixed point is the map value itself.
        add_root(h(0.5), false);
    } else {
        std::vector<double> gv(static_cast<std::size_t>(grid_size) + 1);
        for (int i = 0; i <= grid_size; ++i) {
            gv[i] = g(static_cast<double>(i) / grid_size);
        }
        for (int i = 0; i < grid_size; ++i) {
            const double a = static_cast<double>(i) / grid_size;
            const double b = static_cast<double>(i + 1) / grid_size;
            if (gv[i] == 0.0) {
                add_root(a, false);
                continue;
            }
            if (gv[i] * gv[i + 1] < 0.0) {
                double lo = a, hi = b, glo = gv[i];
                while (hi - lo > 1e-15) {
                    const double mid = 0.5 * (lo + hi);
                    const double gm = g(mid);
                    if (gm == 0.0) {
                        lo = hi = mid;
                        break;
                    }
                    if ((gm > 0.0) == (glo > 0.0)) {
                        lo = mid;
                        glo = gm;
                    } else {
                        hi = mid;
                    }
                }
                add_root(0.5 * (lo + hi), false);
            } else if (std::abs(gv[i]) < kFixedPointResidualTol) {
                add_root(a, true);  // grazing: |h-p| dips without a sign change
            }
        }
        if (gv[grid_size] == 0.0) add_root(1.0, false);
        if (std::abs(g(0.0)) < kFixedPointResidualTol) add_root(0.0, false);
        if (std::abs(g(1.0)) < kFixedPointResidualTol) add_root(1.0, false);
    }

    std::vector<std::size_t> order(roots.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return roots[a] < roots[b]; });
    for (std::size_t i : order) {
        report.points.push_back(annotate(variant, p_ref, roots[i], root_grazing[i]));
    }
    if (report.points.empty()) {
        throw std::logic_error("find_fixed_points: no fixed point located (map must have one)");
    }
    return report;
}

namespace {

StabilityCell stability_cell(const WeightScheme& scheme, double beta, double p_ref,
                             int grid_size) {
    StabilityCell cell;
    cell.beta = beta;
    cell.p_ref = p_ref;
    cell.report = find_fixed_points(VariantSpec::reference(scheme, beta), p_ref, grid_size);
    return cell;
}

}  // namespace

std::vector<StabilityCell> stability_map(const WeightScheme& scheme,
                                         std::span<const double> beta_grid,
                                         std::span<const double> p_ref_grid,
                                         int grid_size, int jobs) {
    if (beta_grid.empty() || p_ref_grid.empty()) {
        throw std::invalid_argument("stability_map: grids must be nonempty");
    }
    const std::size_t n = beta_grid.size() * p_ref_grid.size();
    return parallel_map(n, jobs, [&](std::size_t i) {
        const double beta = beta_grid[i / p_ref_grid.size()];
        const double p_ref = p_ref_grid[i % p_ref_grid.size()];
        return stability_cell(scheme, beta, p_ref, grid_size);
    });
}

std::vector<StabilityCell> stability_map_serial(const WeightScheme& scheme,
                                                std::span<const double> beta_grid,
                                                std::span<const double> p_ref_grid,
                                                int grid_size) {
    if (beta_grid.empty() || p_ref_grid.empty()) {
        throw std::invalid_argument("stability_map: grids must be nonempty");
    }
    const std::size_t n = beta_grid.size() * p_ref_grid.size();
    return serial_map(n, [&](std::size_t i) {
        const double beta = beta_grid[i / p_ref_grid.size()];
        const double p_ref = p_ref_grid[i % p_ref_grid.size()];
        return stability_cell(scheme, beta, p_ref, grid_size);
    });
}

}  // namespace grpo
