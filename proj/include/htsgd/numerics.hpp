#pragma once

#include "htsgd/common.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace htsgd::num {

inline std::string format_error(const char* what, double error) {
    std::ostringstream oss;
    oss << what << error;
    return oss.str();
}

/// Adaptive Gauss-Kronrod on [a,b]. Throws unless the error estimate meets
/// the absolute or the relative tolerance.
template <typename F>
double integrate(F&& f, double a, double b, double abs_tol = 1e-10, unsigned max_depth = 15,
                 double rel_tol = 1e-12) {
    double error = 0.0;
    const double value = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        std::forward<F>(f), a, b, max_depth, rel_tol, &error);
    if (!(error <= abs_tol || error <= rel_tol * std::abs(value)) || !std::isfinite(value))
        throw NumericsError(format_error("quadrature did not converge: error estimate ", error));
    return value;
}

/// tanh-sinh quadrature on [a,b]: tolerates integrable endpoint
/// singularities that defeat the Gauss-Kronrod error estimate.
template <typename F>
double integrate_singular(F&& f, double a, double b, double tol = 1e-12) {
    boost::math::quadrature::tanh_sinh<double> integrator;
    double error = 0.0;
    double l1 = 0.0;
    const double value = integrator.integrate(std::forward<F>(f), a, b, tol, &error, &l1);
    if (!std::isfinite(value))
        throw NumericsError("tanh-sinh quadrature produced a non-finite value");
    return value;
}

/// Safeguarded Newton: bisection bracket maintained throughout, Newton step
/// taken only when it stays inside the bracket. `f` must change sign on
/// [lo, hi].
inline double newton_bisect(const std::function<double(double)>& f,
                            const std::function<double(double)>& df,
                            double lo, double hi, double f_tol = 1e-10,
                            int max_iter = 200) {
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if (flo * fhi > 0.0)
        throw NumericsError("newton_bisect: root not bracketed");
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < max_iter; ++it) {
        const double fx = f(x);
        if (std::abs(fx) < f_tol) return x;
        if ((fx < 0.0) == (flo < 0.0)) {
            lo = x;
            flo = fx;
        } else {
            hi = x;
        }
        const double dfx = df(x);
        double candidate = x - fx / dfx;
        if (!(candidate > lo && candidate < hi) || !std::isfinite(candidate))
            candidate = 0.5 * (lo + hi);
        x = candidate;
    }
    throw NumericsError("newton_bisect: no convergence after max iterations");
}

/// Bisection to |f| < f_tol (also stops when the bracket collapses).
inline double bisect(const std::function<double(double)>& f, double lo, double hi,
                     double f_tol = 1e-10, double x_tol = 0.0, int max_iter = 400) {
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if (flo * fhi > 0.0)
        throw NumericsError("bisect: root not bracketed");
    for (int it = 0; it < max_iter; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fmid = f(mid);
        if (std::abs(fmid) < f_tol || (hi - lo) < x_tol) return mid;
        if ((fmid < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// exp(A). Symmetric matrices go through an eigendecomposition; the general
/// path is scaling-and-squaring with Pade approximation.
inline Matrix matrix_exponential(const Matrix& a) {
    if (a.rows() != a.cols()) throw ConfigError("matrix_exponential: square matrix required");
    if (a.isApprox(a.transpose(), 1e-13)) {
        Eigen::SelfAdjointEigenSolver<Matrix> eigensolver(a);
        return eigensolver.eigenvectors() *
               eigensolver.eigenvalues().array().exp().matrix().asDiagonal() *
               eigensolver.eigenvectors().transpose();
    }
    return a.exp();
}

/// Smallest real part over the spectrum.
inline double min_eigenvalue_real(const Matrix& a) {
    Eigen::EigenSolver<Matrix> solver(a);
    return solver.eigenvalues().real().minCoeff();
}

inline double max_eigenvalue_real(const Matrix& a) {
    Eigen::EigenSolver<Matrix> solver(a);
    return solver.eigenvalues().real().maxCoeff();
}

} // namespace htsgd::num
