#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "grpo/dynamics.hpp"
#include "grpo/math_util.hpp"
#include "grpo/rng.hpp"

using namespace grpo;

namespace {

const WeightScheme kMeanVar = WeightScheme::mean_var(1e-5);

// Independent scalar route: the explicit rational form
//   h(p) = 1 / (1 + (1-p_ref)/p_ref * exp(-Omega(p)/beta))
// evaluated without logit/sigmoid.
double rational_reference_map(double p_ref, double p, double beta, double eps) {
    const double omega = 1.0 / std::sqrt(p * (1.0 - p) + eps);
    return 1.0 / (1.0 + (1.0 - p_ref) / p_ref * std::exp(-omega / beta));
}

}  // namespace

TEST_CASE("reference map matches the rational form and the frozen value") {
    const VariantSpec v = VariantSpec::reference(kMeanVar, 1.0);
    const double got = success_map(v, 0.2, 0.5);
    CHECK(got == doctest::Approx(rational_reference_map(0.2, 0.5, 1.0, 1e-5)).epsilon(1e-13));
    CHECK(got == doctest::Approx(0.6487765299898431).epsilon(1e-12));

    // Two algebraically equal expressions across a grid.
    for (int bi = 0; bi < 4; ++bi) {
        const double beta = 0.05 * std::pow(10.0, bi);
        for (int i = 0; i <= 100; ++i) {
            const double p = i / 100.0;
            const double lhs = success_map(VariantSpec::reference(kMeanVar, beta), 0.37, p);
            const double rhs = rational_reference_map(0.37, p, beta, 1e-5);
            CHECK(std::abs(lhs - rhs) < 1e-12);
        }
    }
}

TEST_CASE("reference map absorbs boundary p_ref") {
    const VariantSpec v = VariantSpec::reference(kMeanVar, 1.0);
    for (int i = 0; i <= 10; ++i) {
        CHECK(success_map(v, 0.0, i / 10.0) == 0.0);
        CHECK(success_map(v, 1.0, i / 10.0) == 1.0);
    }
}

TEST_CASE("mean-only reference map hits sigma(1)") {
    const VariantSpec v = VariantSpec::reference(WeightScheme::mean_only(), 1.0);
    CHECK(success_map(v, 0.5, 0.9) == doctest::Approx(0.7310585786300049).epsilon(1e-14));
    // Constant in p_prev.
    CHECK(success_map(v, 0.5, 0.1) == success_map(v, 0.5, 0.9));
}

TEST_CASE("mirror map boundary absorption") {
    const VariantSpec v = VariantSpec::mirror(kMeanVar, 0.7);
    CHECK(success_map(v, 0.3, 0.0) == 0.0);
    CHECK(success_map(v, 0.3, 1.0) == 1.0);
}

TEST_CASE("success_map argument contracts") {
    const VariantSpec ref = VariantSpec::reference(kMeanVar, 1.0);
    CHECK_THROWS_AS(success_map(ref, 0.5, 0.5, 0.1), std::invalid_argument);
    const VariantSpec tk = VariantSpec::two_kl(kMeanVar, 1.0, 0.5);
    CHECK_THROWS_AS(success_map(tk, 0.5, 0.5), std::invalid_argument);
    CHECK_NOTHROW(success_map(tk, 0.5, 0.5, 0.0));
    CHECK_THROWS_AS(success_map(ref, -0.1, 0.5), std::domain_error);
    CHECK_THROWS_AS(VariantSpec::reference(WeightScheme::whitened(), 1.0), std::invalid_argument);
    CHECK_THROWS_AS(VariantSpec::reference(kMeanVar, 0.0), std::invalid_argument);
}

TEST_CASE("two-kl collapses at alpha 0 and 1") {
    CHECK(VariantSpec::two_kl(kMeanVar, 1.0, 1.0).anchor == AnchorKind::Reference);
    CHECK(VariantSpec::two_kl(kMeanVar, 1.0, 0.0).anchor == AnchorKind::Mirror);
    CHECK(VariantSpec::two_kl(kMeanVar, 1.0, 0.5).anchor == AnchorKind::TwoKl);
}

TEST_CASE("mirror mean-only logit increments are exactly 1/beta") {
    const double beta = 2.0;
    const VariantSpec v = VariantSpec::mirror(WeightScheme::mean_only(), beta);
    const SuccessTrajectory traj = iterate(v, 0.2, {.max_steps = 40, .tol = 0.0});
    const double l0 = logit(0.2);
    for (std::size_t n = 0; n < traj.logit_increments.size(); ++n) {
        CHECK(traj.logit_increments[n] == 1.0 / beta);
        CHECK(std::abs(traj.logits[n + 1] - (l0 + (n + 1) / beta)) < 1e-12);
    }
}

TEST_CASE("mirror smoothed trajectories increase strictly to one") {
    for (double beta : {0.1, 1.0, 5.0}) {
        for (double p_ref : {0.001, 0.01, 0.1, 0.5, 0.9}) {
            const SuccessTrajectory traj = iterate(VariantSpec::mirror(kMeanVar, beta), p_ref);
            for (std::size_t i = 1; i < traj.values.size(); ++i) {
                CHECK(traj.values[i] > traj.values[i - 1]);
            }
            CHECK(traj.values.back() >= 1.0 - 1e-6);
        }
    }
}

TEST_CASE("divergent regime is flagged non-convergent") {
    const SuccessTrajectory traj = iterate(VariantSpec::reference(kMeanVar, 5.0), 0.001);
    CHECK(traj.terminated_by == Termination::MaxIters);
    CHECK(traj.oscillating);
}

TEST_CASE("p_ref = 0 stays exactly zero") {
    for (const auto& v :
         {VariantSpec::reference(kMeanVar, 1.0), VariantSpec::mirror(kMeanVar, 1.0)}) {
        const SuccessTrajectory traj = iterate(v, 0.0);
        CHECK(traj.terminated_by == Termination::AbsorbedAtBoundary);
        for (double p : traj.values) CHECK(p == 0.0);
    }
}

TEST_CASE("mean-only reference iteration is a one-step map") {
    const VariantSpec v = VariantSpec::reference(WeightScheme::mean_only(), 1.3);
    const SuccessTrajectory traj = iterate(v, 0.25);
    REQUIRE(traj.values.size() >= 3);
    CHECK(traj.values[1] == traj.values[2]);
    CHECK(traj.terminated_by == Termination::Converged);
    const double expected = sigmoid(logit(0.25) + 1.0 / 1.3);
    CHECK(traj.values[1] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("map derivative closed form") {
    // Zero at the variance peak, signed on either side.
    CHECK(map_derivative(0.3, 0.5, 1.0, 1e-5) == 0.0);
    CHECK(map_derivative(0.3, 0.2, 1.0, 1e-5) < 0.0);
    CHECK(map_derivative(0.3, 0.8, 1.0, 1e-5) > 0.0);

    // Central finite differences, step 1e-6.
    const auto fd = [](double p_ref, double p, double beta) {
        const VariantSpec v = VariantSpec::reference(kMeanVar, beta);
        const double d = 1e-6;
        return (success_map(v, p_ref, p + d) - success_map(v, p_ref, p - d)) / (2.0 * d);
    };
    const double closed = map_derivative(0.3, 0.3, 1.0, 1e-5);
    CHECK(std::abs(fd(0.3, 0.3, 1.0) - closed) <= 1e-6 * std::abs(closed));

    for (int i = 1; i < 40; ++i) {
        const double p = 0.05 + 0.9 * i / 40.0;
        const double c = map_derivative(0.4, p, 1.5, 1e-5);
        const double f = fd(0.4, p, 1.5);
        CHECK(std::abs(c - f) <= 1e-6 * std::max({std::abs(c), std::abs(f), 1e-9}));
    }
}

TEST_CASE("fixed points amplify and include the saturated boundary") {
    for (double beta : {0.05, 0.1, 0.5, 1.0, 5.0}) {
        for (double p_ref : {0.001, 0.1, 0.3, 0.5, 0.9}) {
            const FixedPointReport report =
                find_fixed_points(VariantSpec::reference(kMeanVar, beta), p_ref, 512);
            REQUIRE(!report.points.empty());
            const VariantSpec v = VariantSpec::reference(kMeanVar, beta);
            for (const FixedPoint& fp : report.points) {
                CHECK(std::abs(success_map(v, p_ref, fp.p_star) - fp.p_star) < 1e-10);
                CHECK(fp.p_star > p_ref);
            }
        }
    }
    // p* = 1 shows up in the typical regimes.
    const FixedPointReport typical =
        find_fixed_points(VariantSpec::reference(kMeanVar, 1.0), 0.1, 512);
    CHECK(typical.points.back().p_star == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fixed points are not unique in the small-beta small-pref regime") {
    const FixedPointReport report =
        find_fixed_points(VariantSpec::reference(kMeanVar, 0.5), 0.001, 512);
    CHECK(report.points.size() >= 3);  // two interior intersections plus the saturated boundary
    int stable = 0;
    for (const FixedPoint& fp : report.points) stable += fp.locally_stable ? 1 : 0;
    CHECK(stable >= 1);
}

TEST_CASE("near-tangent maps are reported as grazing or as a close root pair") {
    // Tangency engineered at the grid node 0.75: h(p)=p and h'(p)=1 there,
    // then the reference log-odds nudged by 2e-10 to pick the side.
    const double eps = 1e-5, pt = 0.75;
    const double var = pt * (1.0 - pt) + eps;
    const double beta = pt * (1.0 - pt) * std::abs(2.0 * pt - 1.0) / (2.0 * std::pow(var, 1.5));
    const double omega = 1.0 / std::sqrt(var);
    const VariantSpec v = VariantSpec::reference(WeightScheme::mean_var(eps), beta);

    // Dip held just above zero: no crossing, flagged grazing.
    const double p_ref_above = sigmoid(logit(pt) - omega / beta + 2e-10);
    const FixedPointReport graze = find_fixed_points(v, p_ref_above, 512);
    bool found_grazing = false;
    for (const FixedPoint& fp : graze.points) {
        if (std::abs(fp.p_star - pt) < 1e-6) found_grazing = fp.grazing;
    }
    CHECK(found_grazing);

    // Dip pushed just below zero: the fold splits into a transversal pair.
    const double p_ref_below = sigmoid(logit(pt) - omega / beta - 2e-10);
    const FixedPointReport pair = find_fixed_points(v, p_ref_below, 512);
    int near_pt = 0;
    for (const FixedPoint& fp : pair.points) {
        if (std::abs(fp.p_star - pt) < 1e-4) {
            ++near_pt;
            CHECK_FALSE(fp.grazing);
        }
    }
    CHECK(near_pt == 2);
}

TEST_CASE("beta threshold vanishes at one half") {
    const FixedPointReport report =
        find_fixed_points(VariantSpec::reference(kMeanVar, 0.5), 0.5, 512);
    for (const FixedPoint& fp : report.points) {
        if (std::abs(fp.p_star - 0.5) < 1e-6) {
            CHECK(fp.beta_threshold == doctest::Approx(0.0).epsilon(1e-9));
            CHECK(fp.locally_stable);
        }
    }
}

TEST_CASE("boundary p_ref rows collapse to a single fixed point") {
    const FixedPointReport zero =
        find_fixed_points(VariantSpec::reference(kMeanVar, 1.0), 0.0, 512);
    REQUIRE(zero.points.size() == 1);
    CHECK(zero.points.front().p_star == 0.0);
    CHECK_FALSE(zero.points.front().amplifies);

    const FixedPointReport one = find_fixed_points(VariantSpec::reference(kMeanVar, 1.0), 1.0, 512);
    REQUIRE(one.points.size() == 1);
    CHECK(one.points.front().p_star == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mean-only fixed point is the exact one-step value") {
    const VariantSpec v = VariantSpec::reference(WeightScheme::mean_only(), 2.0);
    const FixedPointReport report = find_fixed_points(v, 0.3, 512);
    REQUIRE(report.points.size() == 1);
    CHECK(report.points.front().p_star == sigmoid(logit(0.3) + 0.5));
    CHECK(report.points.front().derivative == 0.0);
    CHECK(report.points.front().locally_stable);
}

TEST_CASE("mirror map exceeds identity on a dense interior grid") {
    for (double beta : {0.1, 1.0, 5.0}) {
        const VariantSpec v = VariantSpec::mirror(kMeanVar, beta);
        for (int i = 1; i < 400; ++i) {
            const double p = i / 400.0;
            CHECK(success_map(v, 0.5, p) > p);
        }
    }
}

TEST_CASE("local convergence inside the detected basin") {
    // A stable interior fixed point: moderate beta, small p_ref.
    const double beta = 2.0, p_ref = 0.05;
    const VariantSpec v = VariantSpec::reference(kMeanVar, beta);
    const FixedPointReport report = find_fixed_points(v, p_ref, 512);
    bool checked = false;
    for (const FixedPoint& fp : report.points) {
        if (!fp.locally_stable || fp.p_star == 1.0) continue;
        checked = true;
        for (double offset : {-0.02, -0.005, 0.005, 0.02}) {
            const double start = fp.p_star + offset;
            if (!(start > 0.0 && start < 1.0)) continue;
            double p = start;
            for (int n = 0; n < 5000; ++n) p = success_map(v, p_ref, p);
            CHECK(std::abs(p - fp.p_star) < 1e-8);
        }
        CHECK(beta > fp.beta_threshold);
    }
    CHECK(checked);
}

TEST_CASE("stability consistency between derivative and beta threshold") {
    RngStream rng(7);
    int points = 0;
    while (points < 100) {
        const double beta = 0.05 * std::pow(100.0, rng.uniform());
        const double p_ref = 0.01 + 0.97 * rng.uniform();
        const FixedPointReport report =
            find_fixed_points(VariantSpec::reference(kMeanVar, beta), p_ref, 512);
        for (const FixedPoint& fp : report.points) {
            ++points;
            if (std::abs(beta - fp.beta_threshold) <= 1e-9) continue;  // boundary band
            CHECK((std::abs(fp.derivative) < 1.0) == (beta > fp.beta_threshold));
        }
    }
}

TEST_CASE("amplification shrinks as beta grows") {
    const double p_ref = 0.3;
    double last = kInf;
    for (double beta : {0.1, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0}) {
        const FixedPointReport report =
            find_fixed_points(VariantSpec::reference(kMeanVar, beta), p_ref, 2048);
        const double smallest = report.points.front().p_star;
        CHECK(smallest - p_ref <= last + 1e-12);
        last = smallest - p_ref;
        CHECK(last > 0.0);
    }
}

TEST_CASE("two-kl standalone scalar mode is labeled") {
    const VariantSpec v = VariantSpec::two_kl(kMeanVar, 1.0, 0.4);
    const SuccessTrajectory traj = iterate(v, 0.2, {.max_steps = 50, .tol = 1e-12});
    CHECK(traj.conditionals_matched);
    // Affine contraction with delta_r = 0: the logit gap to the fixed value
    // contracts by (1-alpha) once increments settle.
    REQUIRE(traj.values.size() > 3);
}

TEST_CASE("grid size contract") {
    CHECK_THROWS_AS(find_fixed_points(VariantSpec::reference(kMeanVar, 1.0), 0.3, 32),
                    std::invalid_argument);
    CHECK_THROWS_AS(find_fixed_points(VariantSpec::mirror(kMeanVar, 1.0), 0.3, 512),
                    std::invalid_argument);
}
