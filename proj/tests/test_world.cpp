#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "grpo/verify.hpp"
#include "grpo/world.hpp"

using namespace grpo;

namespace {

FiniteWorld single_prompt_world(std::vector<int> rewards, double weight = 1.0) {
    PromptSpec p;
    p.id = "q0";
    p.weight = weight;
    for (std::size_t i = 0; i < rewards.size(); ++i) p.outcomes.push_back("o" + std::to_string(i));
    p.rewards = std::move(rewards);
    return FiniteWorld({p});
}

}  // namespace

TEST_CASE("success probability basics") {
    const FiniteWorld world = single_prompt_world({1, 0, 0, 0});
    const ConditionalPolicy uniform = ConditionalPolicy::uniform(world);
    CHECK(success_probability(world, uniform, "q0") == doctest::Approx(0.25).epsilon(1e-14));

    const ConditionalPolicy on_failure(world, {{0.0, 1.0, 0.0, 0.0}});
    CHECK(success_probability(world, on_failure, std::size_t{0}) == 0.0);

    CHECK_THROWS_AS(success_probability(world, uniform, "nope"), std::domain_error);
}

TEST_CASE("success probability equals exhaustive summation on random rows") {
    const FiniteWorld world = single_prompt_world({0, 1, 0, 1, 0, 0});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ConditionalPolicy policy = random_policy(world, seed);
        double expected = 0.0;
        for (std::size_t oi = 0; oi < 6; ++oi) {
            if (world.prompt(0).rewards[oi] == 1) expected += policy.row(0)[oi];
        }
        CHECK(success_probability(world, policy, std::size_t{0}) ==
              doctest::Approx(expected).epsilon(1e-15));
    }
}

TEST_CASE("split on the reward indicator policy") {
    const FiniteWorld world = single_prompt_world({1, 1, 0, 0});
    const ConditionalPolicy indicator(world, {{0.5, 0.5, 0.0, 0.0}});
    const SuccessSplit split = split_success(world, indicator, std::size_t{0});
    CHECK(split.p == doctest::Approx(1.0));
    REQUIRE(split.success_conditional.has_value());
    CHECK((*split.success_conditional)[0] == doctest::Approx(0.5));
    CHECK((*split.success_conditional)[1] == doctest::Approx(0.5));
    CHECK_FALSE(split.failure_conditional.has_value());
}

TEST_CASE("split flags the empty side instead of producing NaN") {
    const FiniteWorld world = single_prompt_world({1, 0, 0});
    const ConditionalPolicy no_success(world, {{0.0, 0.4, 0.6}});
    const SuccessSplit split = split_success(world, no_success, std::size_t{0});
    CHECK(split.p == 0.0);
    CHECK_FALSE(split.success_conditional.has_value());
    REQUIRE(split.failure_conditional.has_value());
    CHECK((*split.failure_conditional)[1] == doctest::Approx(0.4));
}

TEST_CASE("split reconstructs the policy") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const FiniteWorld world = random_world(seed, 2, 2, 8);
        const ConditionalPolicy policy = random_policy(world, seed + 1000);
        for (std::size_t qi = 0; qi < world.num_prompts(); ++qi) {
            const SuccessSplit split = split_success(world, policy, qi);
            REQUIRE(split.success_conditional.has_value());
            REQUIRE(split.failure_conditional.has_value());
            CHECK(split.p + (1.0 - split.p) == doctest::Approx(1.0).epsilon(1e-15));
            for (std::size_t oi = 0; oi < world.num_outcomes(qi); ++oi) {
                const double rebuilt = split.p * (*split.success_conditional)[oi] +
                                       (1.0 - split.p) * (*split.failure_conditional)[oi];
                CHECK(rebuilt == doctest::Approx(policy.row(qi)[oi]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("total variation") {
    const FiniteWorld world = single_prompt_world({1, 0, 0});
    const ConditionalPolicy a(world, {{0.2, 0.3, 0.5}});
    CHECK(total_variation(world, a, a, std::size_t{0}) == 0.0);

    const ConditionalPolicy mass_a(world, {{1.0, 0.0, 0.0}});
    const ConditionalPolicy mass_b(world, {{0.0, 1.0, 0.0}});
    CHECK(total_variation(world, mass_a, mass_b, std::size_t{0}) == doctest::Approx(1.0));

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ConditionalPolicy x = random_policy(world, seed);
        const ConditionalPolicy y = random_policy(world, seed + 77);
        double l1 = 0.0;
        for (std::size_t oi = 0; oi < 3; ++oi) l1 += std::abs(x.row(0)[oi] - y.row(0)[oi]);
        CHECK(total_variation(world, x, y, std::size_t{0}) ==
              doctest::Approx(0.5 * l1).epsilon(1e-15));
    }
}

TEST_CASE("total variation is a metric on random triples") {
    const FiniteWorld world = single_prompt_world({1, 0, 1, 0, 0});
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const ConditionalPolicy x = random_policy(world, 3 * seed);
        const ConditionalPolicy y = random_policy(world, 3 * seed + 1);
        const ConditionalPolicy z = random_policy(world, 3 * seed + 2);
        const double dxy = total_variation(world, x, y, std::size_t{0});
        const double dyx = total_variation(world, y, x, std::size_t{0});
        const double dxz = total_variation(world, x, z, std::size_t{0});
        const double dzy = total_variation(world, z, y, std::size_t{0});
        CHECK(dxy == dyx);
        CHECK(dxy <= dxz + dzy + 1e-15);
        CHECK(total_variation(world, x, x, std::size_t{0}) == 0.0);
        CHECK(dxy > 0.0);  // random rows never coincide
    }
}

TEST_CASE("pos plus failure mass is one") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const FiniteWorld world = random_world(seed, 3, 2, 8);
        const ConditionalPolicy policy = random_policy(world, seed + 500);
        for (std::size_t qi = 0; qi < world.num_prompts(); ++qi) {
            double failure = 0.0;
            for (std::size_t oi = 0; oi < world.num_outcomes(qi); ++oi) {
                if (!world.is_success(qi, oi)) failure += policy.row(qi)[oi];
            }
            CHECK(success_probability(world, policy, qi) + failure ==
                  doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("logit and sigmoid") {
    CHECK(logit(0.5) == 0.0);
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(logit(0.2)) == doctest::Approx(0.2).epsilon(1e-13));

    CHECK(logit(0.0) == -kInf);
    CHECK(logit(1.0) == kInf);
    CHECK(sigmoid(kInf) == 1.0);
    CHECK(sigmoid(-kInf) == 0.0);
    CHECK_THROWS_AS(logit(-0.1), std::domain_error);
    CHECK_THROWS_AS(logit(1.1), std::domain_error);

    for (int i = 0; i <= 100; ++i) {
        const double p = 1e-9 + (1.0 - 2e-9) * i / 100.0;
        CHECK(std::abs(sigmoid(logit(p)) - p) < 1e-12);
    }
}

TEST_CASE("construction validation") {
    PromptSpec p;
    p.id = "q0";
    p.weight = 0.5;  // does not sum to 1
    p.outcomes = {"a", "b"};
    p.rewards = {1, 0};
    CHECK_THROWS_AS(FiniteWorld({p}), std::invalid_argument);

    p.weight = 1.0;
    p.rewards = {1, 2};
    CHECK_THROWS_AS(FiniteWorld({p}), std::invalid_argument);

    p.rewards = {1, 0};
    const FiniteWorld world({p});
    CHECK_THROWS_AS(ConditionalPolicy(world, {{0.7, 0.2}}), std::invalid_argument);
    CHECK_THROWS_AS(ConditionalPolicy(world, {{-0.1, 1.1}}), std::invalid_argument);

    // Drift within 1e-9 is corrected at construction.
    const ConditionalPolicy nudged(world, {{0.5 + 2e-10, 0.5}});
    CHECK(nudged.row(0)[0] + nudged.row(0)[1] == doctest::Approx(1.0).epsilon(1e-15));
}
