#include "omd/gwa.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace omd {

double gaussian_weight(std::size_t t, double mu, double sigma2) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("gaussian_weight: sigma2 must be > 0");
    if (t < 1) throw std::invalid_argument("gaussian_weight: t must be >= 1");
    double d = static_cast<double>(t) - mu;
    return std::exp(-d * d / (2.0 * sigma2)) / (std::sqrt(2.0 * std::numbers::pi) * std::sqrt(sigma2));
}

std::vector<double> normalize_weights(const std::vector<double>& w) {
    if (w.empty()) throw std::invalid_argument("normalize_weights: empty weight list");
    double sum = 0.0;
    for (double x : w) {
        if (!(x > 0.0)) throw std::invalid_argument("normalize_weights: weights must be positive");
        sum += x;
    }
    std::vector<double> out(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] / sum;
    return out;
}

GwaState GwaState::make(double mu, double sigma2, std::size_t horizon, std::size_t step_length) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("GwaState: sigma2 must be > 0");
    if (horizon < 1) throw std::invalid_argument("GwaState: horizon must be >= 1");
    if (step_length < 1) throw std::invalid_argument("GwaState: step_length must be >= 1");
    GwaState s;
    s.mu = mu;
    s.sigma2 = sigma2;
    s.horizon = horizon;
    s.step_length = step_length;
    return s;
}

GwaState gwa_update(const GwaState& state, const ParamVector& theta_t) {
    if (state.epoch_index >= state.horizon)
        throw std::invalid_argument("gwa_update: past horizon R");
    GwaState out = state;
    double w = gaussian_weight(state.epoch_index + 1, state.mu, state.sigma2);
    if (state.epoch_index == 0) {
        out.running_avg = theta_t;
    } else {
        state.running_avg.check_layout(theta_t);
        double denom = state.cumulative_weight + w;
        double keep = state.cumulative_weight / denom;
        double take = w / denom;
        for (std::size_t i = 0; i < out.running_avg.size(); ++i)
            out.running_avg.values[i] =
                keep * out.running_avg.values[i] + take * theta_t.values[i];
    }
    out.cumulative_weight = state.cumulative_weight + w;
    out.epoch_index = state.epoch_index + 1;
    return out;
}

ParamVector gwa_finalize(const GwaState& state) {
    if (state.epoch_index < 1) throw std::invalid_argument("gwa_finalize: empty trajectory");
    return state.running_avg;
}

ParamVector weight_average_with_anchor(const ParamVector& theta0,
                                       const std::vector<ParamVector>& thetas,
                                       const std::vector<double>& alphas) {
    if (thetas.size() != alphas.size())
        throw std::invalid_argument("weight_average_with_anchor: alphas/thetas length mismatch");
    double sum = 0.0;
    for (double a : alphas) {
        if (a < 0.0 || a > 1.0)
            throw std::invalid_argument("weight_average_with_anchor: alphas must lie in [0,1]");
        sum += a;
    }
    if (sum > 1.0 + 1e-12)
        throw std::invalid_argument("weight_average_with_anchor: alphas sum exceeds 1");
    ParamVector out = theta0;
    out.scale(1.0 - sum);
    for (std::size_t i = 0; i < thetas.size(); ++i) out.add_scaled(thetas[i], alphas[i]);
    return out;
}

ParamVector baseline_average(const std::vector<ParamVector>& thetas, AverageScheme scheme,
                             double ema_decay) {
    if (thetas.empty()) throw std::invalid_argument("baseline_average: empty trajectory");
    if (scheme == AverageScheme::Uniform) {
        ParamVector out = ParamVector::zeros_like(thetas.front());
        for (const auto& t : thetas) out.add_scaled(t, 1.0);
        out.scale(1.0 / static_cast<double>(thetas.size()));
        return out;
    }
    if (!(ema_decay > 0.0 && ema_decay < 1.0))
        throw std::invalid_argument("baseline_average: ema decay must lie in (0,1)");
    ParamVector out = thetas.front();
    for (std::size_t i = 1; i < thetas.size(); ++i) {
        out.scale(ema_decay);
        out.add_scaled(thetas[i], 1.0 - ema_decay);
    }
    return out;
}

}  // namespace omd
