#pragma once

// Bayesian composition of a distance-attenuated semantic prior with a
// distance-CDF likelihood.
//
// Viability of a context at distance d is the product
//     v(d) = g(d) * h'(d)
// where g is the likelihood CDF of safe distances and h' the attenuated prior
//     h'(d) = 1 - exp(-lambda d) (1 - h).
// The unnormalized product already satisfies the non-decreasing scaling
// requirement, so no normalizer is ever computed. Absolute viability values
// are therefore only meaningful relative to one another; rankings across
// contexts at a fixed distance are what downstream code relies on.

namespace bayesrisk {

// Probabilities computed in floating point may overshoot [0, 1] by this much
// and are clamped silently; anything further out is a DomainError.
inline constexpr double kProbabilityTolerance = 1e-12;

// Clamp `value` into [0, 1] within kProbabilityTolerance, else throw.
double checked_probability(double value, const char* what);

class SafeProbability {
public:
    SafeProbability() = default;
    explicit SafeProbability(double value);
    double value() const { return value_; }

private:
    double value_ = 0.0;
};

class Viability {
public:
    Viability() = default;
    explicit Viability(double value);
    double value() const { return value_; }

private:
    double value_ = 0.0;
};

class RiskValue {
public:
    RiskValue() = default;
    explicit RiskValue(double value);
    double value() const { return value_; }

private:
    double value_ = 0.0;
};

struct AttenuationConfig {
    double lambda = 0.5;  // 1/m

    void validate() const;
};

// 1 - exp(-lambda d) (1 - p). Throws DomainError for d < 0 or a non-finite d.
SafeProbability attenuate_prior(SafeProbability p_safe, double distance,
                                const AttenuationConfig& cfg = {});

Viability compose_viability(double likelihood_cdf, SafeProbability attenuated_prior);

RiskValue risk_from_viability(Viability v);

}  // namespace bayesrisk
