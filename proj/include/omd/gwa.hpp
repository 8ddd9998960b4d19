#pragma once

#include <vector>

#include "omd/param_vector.hpp"

namespace omd {

// Gaussian pdf value at epoch t: exp(-(t-mu)^2 / (2 sigma2)) / sqrt(2 pi sigma2)
double gaussian_weight(std::size_t t, double mu, double sigma2);

// alpha_t = w_t / sum_i w_i
std::vector<double> normalize_weights(const std::vector<double>& w);

// Streaming Gaussian weight average over a training trajectory. Epochs are
// 1-based in the weight schedule; updates run sequentially.
struct GwaState {
    ParamVector running_avg;
    double cumulative_weight = 0.0;
    std::size_t epoch_index = 0; // t, number of updates applied
    double mu = 0.0;
    double sigma2 = 1.0;
    std::size_t horizon = 1;     // R
    std::size_t step_length = 1; // l, steps per epoch snapshot

    static GwaState make(double mu, double sigma2, std::size_t horizon, std::size_t step_length);
};

// running_avg <- (cum / (cum + w_t)) * running_avg + (w_t / (cum + w_t)) * theta_t
GwaState gwa_update(const GwaState& state, const ParamVector& theta_t);

// Returns the running average; requires at least one update.
ParamVector gwa_finalize(const GwaState& state);

// (1 - sum alpha) * theta0 + sum alpha_t * theta_t
ParamVector weight_average_with_anchor(const ParamVector& theta0,
                                       const std::vector<ParamVector>& thetas,
                                       const std::vector<double>& alphas);

enum class AverageScheme { Uniform, Ema };

// Comparison baselines: arithmetic mean, or recursive EMA starting at the
// first snapshot.
ParamVector baseline_average(const std::vector<ParamVector>& thetas, AverageScheme scheme,
                             double ema_decay = 0.9);

}  // namespace omd
