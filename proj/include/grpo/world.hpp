#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "grpo/math_util.hpp"

namespace grpo {

// One prompt: an ordered finite outcome set and a 0/1 reward per outcome.
// Outcome order is fixed so probability vectors index identically across
// policies and golden files.
struct PromptSpec {
    std::string id;
    double weight = 0.0;
    std::vector<std::string> outcomes;
    std::vector<int> rewards;  // parallel to outcomes, each exactly 0 or 1
};

// Finite prompt/outcome world with a prompt distribution and a binary reward
// table. Immutable after construction; all operations on it are pure.
class FiniteWorld {
public:
    // Validates: weights nonnegative and summing to 1 within 1e-12, at least
    // two outcomes per prompt, rewards exactly 0/1, unique prompt ids.
    explicit FiniteWorld(std::vector<PromptSpec> prompts);

    std::size_t num_prompts() const { return prompts_.size(); }
    const PromptSpec& prompt(std::size_t qi) const { return prompts_[qi]; }
    std::size_t num_outcomes(std::size_t qi) const { return prompts_[qi].outcomes.size(); }
    bool is_success(std::size_t qi, std::size_t oi) const { return prompts_[qi].rewards[oi] == 1; }

    // Throws std::domain_error for an unknown prompt id.
    std::size_t index_of(std::string_view id) const;

private:
    std::vector<PromptSpec> prompts_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Per-prompt rows on the outcome simplex. Rows whose mass is within 1e-9 of 1
// are renormalized at construction; anything further off is rejected so
// construction bugs surface instead of being hidden.
class ConditionalPolicy {
public:
    ConditionalPolicy(const FiniteWorld& world, std::vector<std::vector<double>> rows);

    static ConditionalPolicy uniform(const FiniteWorld& world);

    std::size_t num_rows() const { return rows_.size(); }
    const std::vector<double>& row(std::size_t qi) const { return rows_[qi]; }

private:
    std::vector<std::vector<double>> rows_;
};

// Success/failure decomposition of one policy row. The conditionals are
// full-length vectors (zero off-class); each is absent when its supporting
// mass is zero rather than being a NaN vector.
struct SuccessSplit {
    double p = 0.0;
    std::optional<std::vector<double>> success_conditional;
    std::optional<std::vector<double>> failure_conditional;
};

// Probability of success: policy mass on the success outcomes of prompt qi.
double success_probability(const FiniteWorld& world, const ConditionalPolicy& policy, std::size_t qi);
double success_probability(const FiniteWorld& world, const ConditionalPolicy& policy, std::string_view q);

SuccessSplit split_success(const FiniteWorld& world, const ConditionalPolicy& policy, std::size_t qi);
SuccessSplit split_success(const FiniteWorld& world, const ConditionalPolicy& policy, std::string_view q);

// (1/2) sum_o |a(o|q) - b(o|q)|. Throws std::domain_error on shape mismatch.
double total_variation(const FiniteWorld& world, const ConditionalPolicy& a,
                       const ConditionalPolicy& b, std::size_t qi);
double total_variation(const FiniteWorld& world, const ConditionalPolicy& a,
                       const ConditionalPolicy& b, std::string_view q);

}  // namespace grpo
