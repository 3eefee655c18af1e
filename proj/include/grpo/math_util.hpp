#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>

namespace grpo {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Log-odds of p. The boundaries map to signed infinity rather than throwing:
// the success-probability dynamics treat 0 and 1 as absorbing states, so every
// downstream map is defined on the extended real line.
inline double logit(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::domain_error("logit: argument outside [0,1]");
    }
    if (p == 0.0) return -kInf;
    if (p == 1.0) return kInf;
    return std::log(p / (1.0 - p));
}

// Inverse of logit on the extended line; returns exactly 0/1 at -/+infinity.
inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Max-shifted log(sum exp(x_i)). Entries of -inf contribute nothing; an
// all -inf input yields -inf.
inline double log_sum_exp(std::span<const double> xs) {
    double m = -kInf;
    for (double x : xs) m = std::max(m, x);
    if (m == -kInf) return -kInf;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

inline double log_sum_exp(double a, double b) {
    const double xs[2] = {a, b};
    return log_sum_exp(std::span<const double>(xs, 2));
}

}  // namespace grpo
