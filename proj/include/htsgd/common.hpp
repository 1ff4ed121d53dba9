#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace htsgd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Invalid parameters, measures, or schedule configuration.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Quadrature, root finding, or inversion failed to converge.
class NumericsError : public std::runtime_error {
public:
    explicit NumericsError(const std::string& what) : std::runtime_error(what) {}
};

/// An SGD iterate left the representable range (heavy-tail jump overflow).
class DivergedError : public std::runtime_error {
public:
    DivergedError(std::size_t step, const std::string& what)
        : std::runtime_error(what), step(step) {}
    std::size_t step;
};

inline Vector vec2(double x, double y) {
    Vector v(2);
    v << x, y;
    return v;
}

inline Vector vec1(double x) {
    Vector v(1);
    v << x;
    return v;
}

} // namespace htsgd
