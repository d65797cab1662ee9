#include "bayesrisk/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bayesrisk/errors.hpp"

namespace bayesrisk {

double checked_probability(double value, const char* what) {
    if (!(value >= -kProbabilityTolerance && value <= 1.0 + kProbabilityTolerance)) {
        throw DomainError(std::string(what) + " must lie in [0, 1], got " + std::to_string(value));
    }
    return std::clamp(value, 0.0, 1.0);
}

SafeProbability::SafeProbability(double value) : value_(checked_probability(value, "safe probability")) {}

Viability::Viability(double value) : value_(checked_probability(value, "viability")) {}

RiskValue::RiskValue(double value) : value_(checked_probability(value, "risk")) {}

void AttenuationConfig::validate() const {
    if (!std::isfinite(lambda) || lambda <= 0.0) {
        throw ConfigError("attenuation lambda must be finite and positive");
    }
}

SafeProbability attenuate_prior(SafeProbability p_safe, double distance, const AttenuationConfig& cfg) {
    cfg.validate();
    if (std::isnan(distance) || distance < 0.0) {
        throw DomainError("attenuate_prior: distance must be non-negative");
    }
    if (distance == 0.0) return p_safe;
    // exp(-inf) = 0, so an infinite distance yields exactly 1.
    return SafeProbability(1.0 - std::exp(-cfg.lambda * distance) * (1.0 - p_safe.value()));
}

Viability compose_viability(double likelihood_cdf, SafeProbability attenuated_prior) {
    const double g = checked_probability(likelihood_cdf, "likelihood CDF");
    return Viability(g * attenuated_prior.value());
}

RiskValue risk_from_viability(Viability v) { return RiskValue(1.0 - v.value()); }

}  // namespace bayesrisk
