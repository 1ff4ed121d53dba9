#pragma once

// Seed-derivable RNG streams and heavy-tailed sampling primitives:
// SplitMix64 seeding, xoshiro256++ streams, Chambers-Mallows-Stuck stable
// sampling, symmetric Pareto, and the empirical-CF / Hill diagnostics used
// as verification oracles.

#include "htsgd/common.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

namespace htsgd::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline constexpr std::uint64_t splitmix64_finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// SplitMix64: one output per state increment of the golden-ratio constant.
class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) : state_(seed) {}

    constexpr std::uint64_t next() {
        state_ += kGolden;
        return splitmix64_finalize(state_);
    }

private:
    std::uint64_t state_;
};

/// Child seed for replication `index`: well mixed, distinct per index.
inline constexpr std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) {
    SplitMix64 mixer(master_seed + index * kGolden);
    return mixer.next();
}

/// xoshiro256++ value-type stream. One independent stream per replication;
/// identical (seed, call sequence) gives a bit-identical output stream.
class RngState {
public:
    explicit RngState(std::uint64_t seed) {
        SplitMix64 mixer(seed);
        for (auto& word : s_) word = mixer.next();
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform on the open interval (0,1): 53-bit mantissa plus a half-ulp
    /// offset, so 0 and 1 are never emitted.
    double uniform_open01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t s_[4];
};

/// Parameters of a one-dimensional alpha-stable law in the "1" continuous
/// parameterization: CF exp(-scale^alpha |t|^alpha (1 - i beta sgn(t) tan(pi
/// alpha/2)) + i location t) for alpha != 1. alpha = 2 is Gaussian with
/// variance 2 scale^2 (beta ignored).
struct StableParams {
    double alpha = 1.5;
    double beta = 0.0;
    double scale = 1.0;
    double location = 0.0;

    void validate() const {
        if (!(alpha > 0.0 && alpha <= 2.0))
            throw ConfigError("StableParams: alpha must be in (0,2], got " + std::to_string(alpha));
        if (!(beta >= -1.0 && beta <= 1.0))
            throw ConfigError("StableParams: beta must be in [-1,1], got " + std::to_string(beta));
        if (!(scale > 0.0))
            throw ConfigError("StableParams: scale must be positive, got " + std::to_string(scale));
    }

    static StableParams standard(double alpha) { return StableParams{alpha, 0.0, 1.0, 0.0}; }
};

/// Chambers-Mallows-Stuck transform: deterministic map from two uniforms in
/// (0,1) to a stable draw. The |alpha-1| < 1e-10 band routes to the dedicated
/// alpha=1 formula to avoid the (1-alpha)/alpha exponent singularity.
inline double sample_stable(const StableParams& params, double u1, double u2) {
    params.validate();
    if (!(u1 > 0.0 && u1 < 1.0 && u2 > 0.0 && u2 < 1.0))
        throw ConfigError("sample_stable: uniforms must lie strictly inside (0,1)");

    const double alpha = params.alpha;
    const double beta = params.beta;
    const double theta = M_PI * (u1 - 0.5);
    const double w = -std::log(u2);

    double x;
    if (std::abs(alpha - 1.0) < 1e-10) {
        const double half_pi = M_PI / 2.0;
        x = (1.0 / half_pi) *
            ((half_pi + beta * theta) * std::tan(theta) -
             beta * std::log((half_pi * w * std::cos(theta)) / (half_pi + beta * theta)));
        return params.scale * x + params.location;
    }

    if (beta == 0.0) {
        x = (std::sin(alpha * theta) / std::pow(std::cos(theta), 1.0 / alpha)) *
            std::pow(std::cos((1.0 - alpha) * theta) / w, (1.0 - alpha) / alpha);
    } else {
        const double tan_half = std::tan(M_PI * alpha / 2.0);
        const double shift = std::atan(beta * tan_half) / alpha;
        const double amp = std::pow(1.0 + beta * beta * tan_half * tan_half, 0.5 / alpha);
        x = amp * (std::sin(alpha * (theta + shift)) / std::pow(std::cos(theta), 1.0 / alpha)) *
            std::pow(std::cos(theta - alpha * (theta + shift)) / w, (1.0 - alpha) / alpha);
    }
    return params.scale * x + params.location;
}

inline double sample_stable(const StableParams& params, RngState& rng) {
    const double u1 = rng.uniform_open01();
    const double u2 = rng.uniform_open01();
    return sample_stable(params, u1, u2);
}

/// Symmetric signed Pareto: |X| has CDF 1 - t^{-alpha} on [1, inf), sign is
/// Rademacher, so the law has mean zero for alpha > 1.
inline double sample_signed_pareto(double alpha, double u_mag, double u_sign) {
    if (!(alpha > 1.0 && alpha < 2.0))
        throw ConfigError("sample_signed_pareto: alpha must be in (1,2), got " + std::to_string(alpha));
    if (!(u_mag > 0.0 && u_mag < 1.0 && u_sign > 0.0 && u_sign < 1.0))
        throw ConfigError("sample_signed_pareto: uniforms must lie strictly inside (0,1)");
    const double magnitude = std::pow(u_mag, -1.0 / alpha);
    return u_sign >= 0.5 ? magnitude : -magnitude;
}

inline double sample_signed_pareto(double alpha, RngState& rng) {
    const double u_mag = rng.uniform_open01();
    const double u_sign = rng.uniform_open01();
    return sample_signed_pareto(alpha, u_mag, u_sign);
}

/// (1/n) sum exp(i t x_k).
inline std::complex<double> empirical_cf(std::span<const double> samples, double t) {
    if (samples.empty()) throw ConfigError("empirical_cf: empty sample set");
    double re = 0.0, im = 0.0;
    for (double x : samples) {
        re += std::cos(t * x);
        im += std::sin(t * x);
    }
    const double n = static_cast<double>(samples.size());
    return {re / n, im / n};
}

/// Hill estimator of the tail index from the k largest magnitudes.
inline double hill_estimate(std::span<const double> samples, std::size_t k) {
    const std::size_t n = samples.size();
    if (k < 1 || k >= n)
        throw ConfigError("hill_estimate: need 1 <= k < n");
    std::vector<double> magnitudes(n);
    std::transform(samples.begin(), samples.end(), magnitudes.begin(),
                   [](double x) { return std::abs(x); });
    // Partial sort so magnitudes[0..k] are the k+1 largest, descending.
    std::partial_sort(magnitudes.begin(), magnitudes.begin() + static_cast<std::ptrdiff_t>(k) + 1,
                      magnitudes.end(), std::greater<double>());
    const double pivot = magnitudes[k];
    if (!(pivot > 0.0))
        throw ConfigError("hill_estimate: fewer than k+1 positive magnitudes");
    double log_sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) log_sum += std::log(magnitudes[i] / pivot);
    if (!(log_sum > 0.0))
        throw ConfigError("hill_estimate: zero log-spacings, estimator undefined");
    return static_cast<double>(k) / log_sum;
}

} // namespace htsgd::rng
