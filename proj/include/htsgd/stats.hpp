#pragma once

// Statistical reductions for the experiments: jump detection on scaled error
// paths, empirical-vs-analytic distribution distances, coverage rates and
// density histograms.

#include "htsgd/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace htsgd::stats {

struct EmpiricalSample {
    std::vector<Vector> points;
    std::vector<double> weights; // empty = uniform

    static EmpiricalSample from_scalars(const std::vector<double>& values) {
        EmpiricalSample sample;
        sample.points.reserve(values.size());
        for (double v : values) sample.points.push_back(vec1(v));
        return sample;
    }

    void validate() const {
        if (points.empty()) throw ConfigError("EmpiricalSample: empty");
        if (!weights.empty()) {
            if (weights.size() != points.size())
                throw ConfigError("EmpiricalSample: weight/point count mismatch");
            const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
            if (std::abs(total - 1.0) > 1e-12)
                throw ConfigError("EmpiricalSample: weights must sum to 1");
        }
    }

    std::vector<double> scalars() const {
        std::vector<double> out;
        out.reserve(points.size());
        for (const auto& p : points) {
            if (p.size() != 1) throw ConfigError("EmpiricalSample: 1-D sample required");
            out.push_back(p[0]);
        }
        return out;
    }
};

/// Indices k >= 1 where the increment between consecutive path values exceeds
/// the threshold. Euclidean norm by default; `per_coordinate` flags a jump
/// when any single coordinate increment exceeds the threshold instead.
template <typename PathValues>
std::vector<std::size_t> detect_jumps_impl(const PathValues& values, double threshold,
                                           bool per_coordinate) {
    if (values.size() < 2) throw ConfigError("detect_jumps: path length must be >= 2");
    std::vector<std::size_t> jumps;
    for (std::size_t k = 1; k < values.size(); ++k) {
        const Vector delta = values[k] - values[k - 1];
        const double size = per_coordinate ? delta.cwiseAbs().maxCoeff() : delta.norm();
        if (size > threshold) jumps.push_back(k);
    }
    return jumps;
}

inline std::vector<std::size_t> detect_jumps(const std::vector<Vector>& values, double threshold,
                                             bool per_coordinate = false) {
    return detect_jumps_impl(values, threshold, per_coordinate);
}

/// Two-sided KS distance between a 1-D sample and a reference CDF, using both
/// one-sided empirical CDF values at every sample point.
inline double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
    if (sample.empty()) throw ConfigError("ks_distance: empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double distance = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        distance = std::max(distance, std::abs(f - static_cast<double>(i) / n));
        distance = std::max(distance, std::abs(static_cast<double>(i + 1) / n - f));
    }
    return distance;
}

inline double ks_distance(const EmpiricalSample& sample, const std::function<double(double)>& cdf) {
    sample.validate();
    return ks_distance(sample.scalars(), cdf);
}

/// Fraction of 1-D samples with |x| <= half_width.
inline double coverage_rate(const std::vector<double>& sample, double half_width) {
    if (sample.empty()) throw ConfigError("coverage_rate: empty sample");
    std::size_t covered = 0;
    for (double x : sample)
        if (std::abs(x) <= half_width) ++covered;
    return static_cast<double>(covered) / static_cast<double>(sample.size());
}

struct Histogram {
    std::vector<double> densities;   // count / (n * bin_width)
    std::vector<std::size_t> counts;
    std::size_t out_of_range = 0;
};

inline Histogram histogram(const std::vector<double>& sample, const std::vector<double>& edges) {
    if (sample.empty()) throw ConfigError("histogram: empty sample");
    if (edges.size() < 2) throw ConfigError("histogram: need at least 2 edges");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1])) throw ConfigError("histogram: edges must be strictly increasing");
    Histogram h;
    h.counts.assign(edges.size() - 1, 0);
    for (double x : sample) {
        auto it = std::upper_bound(edges.begin(), edges.end(), x);
        if (it == edges.begin() || it == edges.end()) {
            // right edge of the last bin is inclusive
            if (x == edges.back())
                ++h.counts.back();
            else
                ++h.out_of_range;
            continue;
        }
        ++h.counts[static_cast<std::size_t>(it - edges.begin()) - 1];
    }
    const double n = static_cast<double>(sample.size());
    h.densities.resize(h.counts.size());
    for (std::size_t b = 0; b < h.counts.size(); ++b)
        h.densities[b] = static_cast<double>(h.counts[b]) / (n * (edges[b + 1] - edges[b]));
    return h;
}

} // namespace htsgd::stats
