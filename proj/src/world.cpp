#include "grpo/world.hpp"

#include <cmath>
#include <stdexcept>

namespace grpo {

namespace {

constexpr double kWeightSumTol = 1e-12;
constexpr double kRowMassTol = 1e-9;

}  // namespace

FiniteWorld::FiniteWorld(std::vector<PromptSpec> prompts) : prompts_(std::move(prompts)) {
    if (prompts_.empty()) {
        throw std::invalid_argument("FiniteWorld: no prompts");
    }
    double weight_sum = 0.0;
    for (std::size_t qi = 0; qi < prompts_.size(); ++qi) {
        const PromptSpec& p = prompts_[qi];
        if (p.outcomes.size() < 2) {
            throw std::invalid_argument("FiniteWorld: prompt '" + p.id +
                                        "' needs at least two outcomes");
        }
        if (p.rewards.size() != p.outcomes.size()) {
            throw std::invalid_argument("FiniteWorld: prompt '" + p.id +
                                        "' reward table does not match outcomes");
        }
        for (int r : p.rewards) {
            if (r != 0 && r != 1) {
                throw std::invalid_argument("FiniteWorld: prompt '" + p.id +
                                            "' has a reward not in {0,1}");
            }
        }
        if (!(p.weight >= 0.0)) {
            throw std::invalid_argument("FiniteWorld: prompt '" + p.id + "' has negative weight");
        }
        weight_sum += p.weight;
        if (!index_.emplace(p.id, qi).second) {
            throw std::invalid_argument("FiniteWorld: duplicate prompt id '" + p.id + "'");
        }
    }
    if (std::abs(weight_sum - 1.0) > kWeightSumTol) {
        throw std::invalid_argument("FiniteWorld: prompt weights do not sum to 1");
    }
}

std::size_t FiniteWorld::index_of(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) {
        throw std::domain_error("FiniteWorld: unknown prompt id '" + std::string(id) + "'");
    }
    return it->second;
}

ConditionalPolicy::ConditionalPolicy(const FiniteWorld& world,
                                     std::vector<std::vector<double>> rows)
    : rows_(std::move(rows)) {
    if (rows_.size() != world.num_prompts()) {
        throw std::invalid_argument("ConditionalPolicy: row count does not match world");
    }
    for (std::size_t qi = 0; qi < rows_.size(); ++qi) {
        std::vector<double>& row = rows_[qi];
        if (row.size() != world.num_outcomes(qi)) {
            throw std::invalid_argument("ConditionalPolicy: row size mismatch for prompt '" +
                                        world.prompt(qi).id + "'");
        }
        double mass = 0.0;
        for (double v : row) {
            if (!(v >= 0.0)) {
                throw std::invalid_argument("ConditionalPolicy: negative entry for prompt '" +
                                            world.prompt(qi).id + "'");
            }
            mass += v;
        }
        if (std::abs(mass - 1.0) > kRowMassTol) {
            throw std::invalid_argument("ConditionalPolicy: row mass off by more than 1e-9 for prompt '" +
                                        world.prompt(qi).id + "'");
        }
        for (double& v : row) v /= mass;
    }
}

ConditionalPolicy ConditionalPolicy::uniform(const FiniteWorld& world) {
    std::vector<std::vector<double>> rows(world.num_prompts());
    for (std::size_t qi = 0; qi < world.num_prompts(); ++qi) {
        rows[qi].assign(world.num_outcomes(qi), 1.0 / static_cast<double>(world.num_outcomes(qi)));
    }
    return ConditionalPolicy(world, std::move(rows));
}

double success_probability(const FiniteWorld& world, const ConditionalPolicy& policy,
                           std::size_t qi) {
    const std::vector<double>& row = policy.row(qi);
    if (row.size() != world.num_outcomes(qi)) {
        throw std::domain_error("success_probability: policy shape does not match world");
    }
    double p = 0.0;
    for (std::size_t oi = 0; oi < row.size(); ++oi) {
        if (world.is_success(qi, oi)) p += row[oi];
    }
    return std::min(p, 1.0);
}

double success_probability(const FiniteWorld& world, const ConditionalPolicy& policy,
                           std::string_view q) {
    return success_probability(world, policy, world.index_of(q));
}

SuccessSplit split_success(const FiniteWorld& world, const ConditionalPolicy& policy,
                           std::size_t qi) {
    const std::vector<double>& row = policy.row(qi);
    // Class masses by direct summation: near saturation 1-p loses all relative
    // accuracy while the small class's own entries keep theirs.
    double s_mass = 0.0, f_mass = 0.0;
    for (std::size_t oi = 0; oi < row.size(); ++oi) {
        (world.is_success(qi, oi) ? s_mass : f_mass) += row[oi];
    }
    SuccessSplit out;
    out.p = std::min(s_mass, 1.0);
    if (s_mass > 0.0) {
        std::vector<double> s(row.size(), 0.0);
        for (std::size_t oi = 0; oi < row.size(); ++oi) {
            if (world.is_success(qi, oi)) s[oi] = row[oi] / s_mass;
        }
        out.success_conditional = std::move(s);
    }
    if (f_mass > 0.0) {
        std::vector<double> f(row.size(), 0.0);
        for (std::size_t oi = 0; oi < row.size(); ++oi) {
            if (!world.is_success(qi, oi)) f[oi] = row[oi] / f_mass;
        }
        out.failure_conditional = std::move(f);
    }
    return out;
}

SuccessSplit split_success(const FiniteWorld& world, const ConditionalPolicy& policy,
                           std::string_view q) {
    return split_success(world, policy, world.index_of(q));
}

double total_variation(const FiniteWorld& world, const ConditionalPolicy& a,
                       const ConditionalPolicy& b, std::size_t qi) {
    const std::vector<double>& ra = a.row(qi);
    const std::vector<double>& rb = b.row(qi);
    if (ra.size() != rb.size() || ra.size() != world.num_outcomes(qi)) {
        throw std::domain_error("total_variation: policy shapes do not match");
    }
    double l1 = 0.0;
    for (std::size_t oi = 0; oi < ra.size(); ++oi) l1 += std::abs(ra[oi] - rb[oi]);
    return 0.5 * l1;
}

double total_variation(const FiniteWorld& world, const ConditionalPolicy& a,
                       const ConditionalPolicy& b, std::string_view q) {
    return total_variation(world, a, b, world.index_of(q));
}

}  // namespace grpo
