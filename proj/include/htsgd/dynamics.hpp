#pragma once

// Discrete SGD under constant and decaying schedules, the deterministic
// gradient flow and its fundamental matrix, and the scaled error processes
// of the limit theorems (including the linear-step drift correction and the
// logistic two-regime scaling).

#include "htsgd/common.hpp"
#include "htsgd/models.hpp"
#include "htsgd/numerics.hpp"
#include "htsgd/rng.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace htsgd::dynamics {

/// Learning-rate schedule: Constant(eta) or Polynomial eta_n = c (n+shift)^{-rho},
/// n starting at 1.
struct StepSchedule {
    enum class Kind { Constant, Polynomial };
    Kind kind = Kind::Constant;
    double eta = 1e-3;
    double c = 1.0;
    double rho = 0.6;
    double shift = 0.0;

    static StepSchedule constant(double eta) {
        if (!(eta > 0.0)) throw ConfigError("StepSchedule: eta must be positive");
        StepSchedule schedule;
        schedule.kind = Kind::Constant;
        schedule.eta = eta;
        return schedule;
    }

    static StepSchedule polynomial(double c, double rho, double shift = 0.0) {
        if (!(c > 0.0)) throw ConfigError("StepSchedule: c must be positive");
        if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("StepSchedule: rho must be in (0,1]");
        if (shift < 0.0) throw ConfigError("StepSchedule: shift must be >= 0");
        StepSchedule schedule;
        schedule.kind = Kind::Polynomial;
        schedule.c = c;
        schedule.rho = rho;
        schedule.shift = shift;
        return schedule;
    }

    double step(std::size_t n) const {
        if (n < 1) throw ConfigError("StepSchedule: steps are indexed from 1");
        if (kind == Kind::Constant) return eta;
        return c * std::pow(static_cast<double>(n) + shift, -rho);
    }
};

struct Trajectory {
    std::vector<double> times;
    std::vector<Vector> states;

    std::size_t size() const { return times.size(); }
};

/// Scaled error path; scaling_exponents[k] records the eta-exponent used at
/// time k (1/alpha - 1 in the heavy regime, -1/2 in the Gaussian regime).
struct ScaledErrorPath {
    std::vector<double> times;
    std::vector<Vector> values;
    std::vector<double> scaling_exponents;
};

/// theta_{n+1} = theta_n - eta_n grad(theta_n, xi_{n+1}); time axis is n*eta
/// for constant schedules and the partial sums of eta_n otherwise. Exactly
/// one stochastic-gradient draw is consumed per step. Iterates beyond 1e300
/// in norm raise DivergedError with the offending step index.
inline Trajectory sgd_run(const models::ModelSpec& model, const StepSchedule& schedule,
                          const Vector& theta0, std::size_t steps, rng::RngState& rng) {
    if (steps < 1) throw ConfigError("sgd_run: need at least one step");
    if (theta0.size() != model.dimension()) throw ConfigError("sgd_run: theta0 dimension mismatch");
    Trajectory trajectory;
    trajectory.times.reserve(steps + 1);
    trajectory.states.reserve(steps + 1);
    trajectory.times.push_back(0.0);
    trajectory.states.push_back(theta0);
    Vector theta = theta0;
    double time = 0.0;
    for (std::size_t n = 1; n <= steps; ++n) {
        const double eta_n = schedule.step(n);
        theta -= eta_n * models::stochastic_gradient(model, theta, rng);
        time += eta_n;
        if (!theta.allFinite() || theta.norm() > 1e300)
            throw DivergedError(n, "sgd_run: iterate diverged at step " + std::to_string(n));
        trajectory.times.push_back(time);
        trajectory.states.push_back(theta);
    }
    return trajectory;
}

namespace detail {

template <typename Derivative, typename State>
State rk4_step(const Derivative& f, const State& y, double dt) {
    const State k1 = f(y);
    const State k2 = f(y + (0.5 * dt) * k1);
    const State k3 = f(y + (0.5 * dt) * k2);
    const State k4 = f(y + dt * k3);
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

} // namespace detail

/// Classical RK4 on d theta = -grad l(theta) dt over [0, T] with fixed dt.
inline Trajectory gradient_flow(const models::ModelSpec& model, const Vector& theta0, double T,
                                double dt) {
    if (!(dt > 0.0) || !(T >= dt)) throw ConfigError("gradient_flow: need 0 < dt <= T");
    auto rhs = [&](const Vector& y) -> Vector { return -models::true_gradient(model, y); };
    Trajectory flow;
    const auto steps = static_cast<std::size_t>(std::llround(T / dt));
    flow.times.reserve(steps + 1);
    flow.states.reserve(steps + 1);
    flow.times.push_back(0.0);
    flow.states.push_back(theta0);
    Vector y = theta0;
    for (std::size_t k = 1; k <= steps; ++k) {
        y = detail::rk4_step(rhs, y, dt);
        if (!y.allFinite()) throw DivergedError(k, "gradient_flow: non-finite state");
        flow.times.push_back(static_cast<double>(k) * dt);
        flow.states.push_back(y);
    }
    return flow;
}

/// Fundamental matrix of the linearized flow: d Phi = -hess(flow(t)) Phi dt,
/// Phi(0) = I. The flow is re-integrated jointly so the RK4 stages see
/// Hessians evaluated at the matching stage states.
inline std::vector<Matrix> fundamental_matrix(const models::ModelSpec& model,
                                              const Trajectory& flow, double T, double dt) {
    if (!(dt > 0.0)) throw ConfigError("fundamental_matrix: dt must be positive");
    if (flow.times.empty() || flow.times.back() < T - 1e-12)
        throw ConfigError("fundamental_matrix: flow does not cover [0, T]");
    const auto d = model.dimension();
    const auto steps = static_cast<std::size_t>(std::llround(T / dt));

    // Joint state (theta, Phi) packed into a (d+1) x d matrix row block.
    using Joint = Matrix;
    auto rhs = [&](const Joint& state) -> Joint {
        const Vector theta = state.row(0).transpose();
        const Matrix phi = state.bottomRows(d);
        Joint derivative(d + 1, d);
        derivative.row(0) = -models::true_gradient(model, theta).transpose();
        derivative.bottomRows(d) = -models::hessian(model, theta) * phi;
        return derivative;
    };

    Joint state(d + 1, d);
    state.row(0) = flow.states.front().transpose();
    state.bottomRows(d) = Matrix::Identity(d, d);

    std::vector<Matrix> phis;
    phis.reserve(steps + 1);
    phis.push_back(Matrix::Identity(d, d));
    for (std::size_t k = 1; k <= steps; ++k) {
        state = detail::rk4_step(rhs, state, dt);
        if (!state.allFinite()) throw DivergedError(k, "fundamental_matrix: non-finite entries");
        phis.push_back(state.bottomRows(d));
    }
    return phis;
}

/// eta^{1/alpha-1} b1 (sgd(t) - flow(t)) on the SGD grid. The flow must have
/// been produced on the same grid (resampling is exact re-integration, per
/// the gradient_flow contract); grids are checked to 1e-12.
inline ScaledErrorPath scaled_error_constant(const Trajectory& sgd, const Trajectory& flow,
                                             double eta, double alpha, double b1) {
    if (sgd.size() != flow.size())
        throw ConfigError("scaled_error_constant: trajectory lengths differ");
    const double exponent = 1.0 / alpha - 1.0;
    const double scale = std::pow(eta, exponent) * b1;
    ScaledErrorPath path;
    path.times = sgd.times;
    path.values.reserve(sgd.size());
    path.scaling_exponents.assign(sgd.size(), exponent);
    for (std::size_t k = 0; k < sgd.size(); ++k) {
        if (std::abs(sgd.times[k] - flow.times[k]) > 1e-12)
            throw ConfigError("scaled_error_constant: time grids do not match");
        path.values.push_back(scale * (sgd.states[k] - flow.states[k]));
    }
    return path;
}

/// eta_n^{1/alpha-1} b1 (theta_n - theta*).
inline Vector scaled_error_decay(const Vector& theta_n, const Vector& theta_star, double eta_n,
                                 double alpha, double b1) {
    if (!(eta_n > 0.0)) throw ConfigError("scaled_error_decay: eta_n must be positive");
    return std::pow(eta_n, 1.0 / alpha - 1.0) * b1 * (theta_n - theta_star);
}

/// Drift correction kappa of the linear-step limit: (1 - 1/alpha)/c when
/// rho = 1, zero otherwise. With rho = 1 the schedule constant must satisfy
/// c > (1 - 1/alpha)/sigma_min, sigma_min being the smallest Hessian
/// eigenvalue at the optimum; pass it to enforce the bound.
inline double drift_correction(const StepSchedule& schedule, double alpha,
                               double sigma_min = std::numeric_limits<double>::infinity()) {
    if (schedule.kind != StepSchedule::Kind::Polynomial || schedule.rho < 1.0) return 0.0;
    const double kappa = (1.0 - 1.0 / alpha) / schedule.c;
    if (!(schedule.c > (1.0 - 1.0 / alpha) / sigma_min))
        throw ConfigError("drift_correction: linear step requires c > (1 - 1/alpha)/sigma_min(hessian)");
    return kappa;
}

/// Per-time scaling exponents for the 1-D logistic error path: the heavy
/// exponent 1/alpha - 1 where the flow sign differs from theta_star (ties at
/// zero count as heavy), -1/2 where the signs agree.
inline std::vector<double> regime_scaling_logistic(const Trajectory& flow, double theta_star,
                                                   double alpha) {
    if (theta_star == 0.0)
        throw ConfigError("regime_scaling_logistic: theta_star = 0 has no two-regime scaling");
    std::vector<double> exponents;
    exponents.reserve(flow.size());
    const double heavy = 1.0 / alpha - 1.0;
    for (const auto& state : flow.states) {
        if (state.size() != 1) throw ConfigError("regime_scaling_logistic: 1-D flow required");
        const double value = state[0];
        const bool same_sign = value * theta_star > 0.0; // zero counts as heavy
        exponents.push_back(same_sign ? -0.5 : heavy);
    }
    return exponents;
}

} // namespace htsgd::dynamics
