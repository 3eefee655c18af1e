#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grpo/calibration.hpp"

namespace grpo {

// KL anchor of one update: the reference policy, the previous iterate, or the
// alpha-weighted pair (equivalently their geometric mean).
enum class AnchorKind { Reference, Mirror, TwoKl };

struct VariantSpec {
    AnchorKind anchor = AnchorKind::Reference;
    WeightScheme scheme = WeightScheme::mean_var();
    double beta = 1.0;
    double alpha = 1.0;  // TwoKl mixing weight on the reference KL

    // Factories validate beta > 0. two_kl with alpha exactly 1 or 0 collapses
    // to the single-anchor variants.
    static VariantSpec reference(const WeightScheme& scheme, double beta);
    static VariantSpec mirror(const WeightScheme& scheme, double beta);
    static VariantSpec two_kl(const WeightScheme& scheme, double beta, double alpha);

    const char* anchor_name() const;
};

// One application of the success-probability map:
//   sigmoid(anchor_logit + renyi_correction + total_weight(p_prev)/beta)
// with anchor_logit = logit(p_ref), logit(p_prev), or their alpha mix.
// Boundary log-odds propagate, so absorbing states stay absorbed exactly.
// TwoKl requires renyi_correction; passing it for other anchors is an error.
double success_map(const VariantSpec& variant, double p_ref, double p_prev,
                   std::optional<double> renyi_correction = std::nullopt);

enum class Termination { MaxIters, Converged, AbsorbedAtBoundary };

const char* termination_name(Termination t);

struct SuccessTrajectory {
    std::string prompt_id;                 // empty for standalone scalar runs
    std::vector<double> values;            // p_0 .. p_N, p_0 = p_ref
    std::vector<double> logits;            // log-odds carried alongside
    std::vector<double> logit_increments;  // additive term beyond the anchor log-odds, one per step
    Termination terminated_by = Termination::MaxIters;
    bool oscillating = false;              // period-2 detector fired
    bool conditionals_matched = false;     // TwoKl scalar mode ran with renyi correction fixed at 0
};

struct IterateOptions {
    int max_steps = 10'000;
    double tol = 1e-10;
};

// Iterates the map from p_0 = p_ref. Stops on |p_n - p_{n-1}| < tol or on a
// boundary hit. For TwoKl this standalone mode fixes the renyi correction at
// 0 and labels the trajectory conditionals_matched; the exact correction only
// exists at the policy level.
SuccessTrajectory iterate(const VariantSpec& variant, double p_ref, IterateOptions opts = {});

// Closed-form derivative of the reference-anchored MeanVar map,
//   h'(p) = -h(1-h) (1-2p) / (2 beta [p(1-p)+eps]^{3/2}).
double map_derivative(double p_ref, double p, double beta, double epsilon);

struct FixedPoint {
    double p_star = 0.0;
    double derivative = 0.0;
    bool locally_stable = false;
    double beta_threshold = 0.0;  // B(p*); local stability iff beta > B(p*)
    bool amplifies = false;       // p* > p_ref
    bool grazing = false;         // |h(p)-p| dipped below 1e-10 without a sign change
};

struct FixedPointReport {
    double p_ref = 0.0;
    double beta = 0.0;
    double epsilon = 0.0;
    std::vector<FixedPoint> points;
};

// Locates fixed points of the reference-anchored map: scans h(p)-p on a
// uniform grid, bisects every sign change to 1e-12, deduplicates within 1e-9
// and appends boundary fixed points when |h(b)-b| < 1e-10. The MeanOnly map
// is constant in p, so its unique fixed point is evaluated directly.
FixedPointReport find_fixed_points(const VariantSpec& variant, double p_ref, int grid_size = 512);

struct StabilityCell {
    double beta = 0.0;
    double p_ref = 0.0;
    FixedPointReport report;
};

// Dense (beta, p_ref) sweep of find_fixed_points. Cells are independent and
// dispatched to an OpenMP pool; results come back in grid order (beta outer,
// p_ref inner) regardless of jobs.
std::vector<StabilityCell> stability_map(const WeightScheme& scheme,
                                         std::span<const double> beta_grid,
                                         std::span<const double> p_ref_grid,
                                         int grid_size = 512, int jobs = 0);

std::vector<StabilityCell> stability_map_serial(const WeightScheme& scheme,
                                                std::span<const double> beta_grid,
                                                std::span<const double> p_ref_grid,
                                                int grid_size = 512);

}  // namespace grpo
