#pragma once

#include <stdexcept>

namespace grpo {

// Reward-calibration flavor. MeanVar is the smoothed mean+variance whitening
// with weights
//     w_plus(p)  = (1-p) / sqrt(p(1-p) + eps)
//     w_minus(p) = p / sqrt(p(1-p) + eps)
// Whitened is the eps = 0 form (diagnostic only, undefined at p in {0,1});
// MeanOnly recenters without rescaling: w_plus = 1-p, w_minus = p.
enum class Normalization { Whitened, MeanVar, MeanOnly };

struct WeightScheme {
    Normalization kind = Normalization::MeanVar;
    double epsilon = 1e-5;  // used by MeanVar only; must lie in (0,1]

    static WeightScheme whitened() { return {Normalization::Whitened, 0.0}; }
    static WeightScheme mean_var(double eps = 1e-5) {
        if (!(eps > 0.0 && eps <= 1.0)) {
            throw std::invalid_argument("WeightScheme: smoothing epsilon must be in (0,1]");
        }
        return {Normalization::MeanVar, eps};
    }
    static WeightScheme mean_only() { return {Normalization::MeanOnly, 0.0}; }
};

double weight_plus(const WeightScheme& scheme, double p);
double weight_minus(const WeightScheme& scheme, double p);

// Signed calibrated reward: +weight_plus(p) on success, -weight_minus(p) on
// failure. Whitened kind throws std::domain_error at p in {0,1} (zero reward
// variance).
double advantage(const WeightScheme& scheme, double p, bool success);

// Total weight w_plus + w_minus. MeanVar: (p(1-p)+eps)^(-1/2); MeanOnly: 1
// exactly. The per-step log-odds increment of the dynamics is total_weight/beta.
double total_weight(const WeightScheme& scheme, double p);

// beta * sqrt(p(1-p) + eps); satisfies 1/effective_beta = total_weight(p)/beta
// for the MeanVar scheme. Throws std::domain_error for beta <= 0.
double effective_beta(double beta, double p, double epsilon);

}  // namespace grpo
