#include "grpo/calibration.hpp"

#include <cmath>

namespace grpo {

namespace {

void require_unit_interval(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::domain_error("calibration: success probability outside [0,1]");
    }
}

double whitened_denominator(double p) {
    if (p == 0.0 || p == 1.0) {
        throw std::domain_error(
            "calibration: whitened weights undefined at p in {0,1} (reward variance is zero)");
    }
    return std::sqrt(p * (1.0 - p));
}

}  // namespace

double weight_plus(const WeightScheme& scheme, double p) {
    require_unit_interval(p);
    switch (scheme.kind) {
        case Normalization::Whitened:
            return (1.0 - p) / whitened_denominator(p);
        case Normalization::MeanVar:
            return (1.0 - p) / std::sqrt(p * (1.0 - p) + scheme.epsilon);
        case Normalization::MeanOnly:
            return 1.0 - p;
    }
    throw std::logic_error("weight_plus: unreachable");
}

double weight_minus(const WeightScheme& scheme, double p) {
    require_unit_interval(p);
    switch (scheme.kind) {
        case Normalization::Whitened:
            return p / whitened_denominator(p);
        case Normalization::MeanVar:
            return p / std::sqrt(p * (1.0 - p) + scheme.epsilon);
        case Normalization::MeanOnly:
            return p;
    }
    throw std::logic_error("weight_minus: unreachable");
}

double advantage(const WeightScheme& scheme, double p, bool success) {
    return success ? weight_plus(scheme, p) : -weight_minus(scheme, p);
}

double total_weight(const WeightScheme& scheme, double p) {
    require_unit_interval(p);
    switch (scheme.kind) {
        case Normalization::Whitened:
            return 1.0 / whitened_denominator(p);
        case Normalization::MeanVar:
            return 1.0 / std::sqrt(p * (1.0 - p) + scheme.epsilon);
        case Normalization::MeanOnly:
            return 1.0;
    }
    throw std::logic_error("total_weight: unreachable");
}

double effective_beta(double beta, double p, double epsilon) {
    if (!(beta > 0.0)) {
        throw std::domain_error("effective_beta: beta must be positive");
    }
    require_unit_interval(p);
    return beta * std::sqrt(p * (1.0 - p) + epsilon);
}

}  // namespace grpo
